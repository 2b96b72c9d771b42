"""First-order forward-mode dual numbers with multiple tangent directions.

A ``Dual`` carries a primal value and a gradient row (one slot per seeded
direction).  All flows, Hamiltonians, and one-step maps in this package are
written in terms of plain arithmetic plus the ``exp``/``log``/``sqrt``/
``sin``/``cos`` helpers below, so the same evaluation code runs on floats
and on duals.  Duals nest: the payload of a ``Dual`` may itself be a
``Dual``, which is how Jacobians of maps that internally differentiate
(lifted integrators, gradient-backed flows) are transported.
"""

from __future__ import annotations

import math

import numpy as np


class Dual:
    __slots__ = ("val", "grad")

    # Keep numpy from consuming duals in mixed scalar/array expressions;
    # reflected operators below handle those cases elementwise.
    __array_ufunc__ = None

    def __init__(self, val, grad):
        self.val = val
        self.grad = grad

    @staticmethod
    def seed(values, index, ndir):
        """Dual with value ``values`` and unit tangent in slot ``index``."""
        grad = np.zeros(ndir, dtype=object)
        grad[index] = 1.0
        return Dual(values, grad)

    def __repr__(self):
        return f"Dual({self.val!r}, {self.grad!r})"

    # -- arithmetic -------------------------------------------------------
    # ndarray operands broadcast elementwise (numpy defers to these
    # reflected methods because of __array_ufunc__ = None above).

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.grad + other.grad)
        if isinstance(other, np.ndarray):
            return _broadcast(lambda o: self + o, other)
        return Dual(self.val + other, self.grad)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.val, -self.grad)

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.grad - other.grad)
        if isinstance(other, np.ndarray):
            return _broadcast(lambda o: self - o, other)
        return Dual(self.val - other, self.grad)

    def __rsub__(self, other):
        if isinstance(other, np.ndarray):
            return _broadcast(lambda o: o - self, other)
        return Dual(other - self.val, -self.grad)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val,
                        self.grad * other.val + other.grad * self.val)
        if isinstance(other, np.ndarray):
            return _broadcast(lambda o: self * o, other)
        return Dual(self.val * other, self.grad * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.val
            return Dual(self.val * inv,
                        (self.grad - other.grad * (self.val * inv)) * inv)
        if isinstance(other, np.ndarray):
            return _broadcast(lambda o: self / o, other)
        return Dual(self.val / other, self.grad / other)

    def __rtruediv__(self, other):
        if isinstance(other, np.ndarray):
            return _broadcast(lambda o: o / self, other)
        inv = 1.0 / self.val
        v = other * inv
        return Dual(v, self.grad * (-v * inv))

    def __pow__(self, k):
        if isinstance(k, int):
            if k == 0:
                return Dual(self.val * 0 + 1.0, self.grad * 0)
            if k < 0:
                return 1.0 / self.__pow__(-k)
            out = self
            for _ in range(k - 1):
                out = out * self
            return out
        v = self.val ** k
        return Dual(v, self.grad * (k * self.val ** (k - 1)))

    # -- comparisons act on the fully unwrapped primal --------------------

    def __lt__(self, other):
        return value(self) < value(other)

    def __le__(self, other):
        return value(self) <= value(other)

    def __gt__(self, other):
        return value(self) > value(other)

    def __ge__(self, other):
        return value(self) >= value(other)

    def __abs__(self):
        return -self if value(self) < 0 else self

    # -- elementary functions (numpy object arrays call these methods) ----

    def exp(self):
        v = exp(self.val)
        return Dual(v, self.grad * v)

    def log(self):
        return Dual(log(self.val), self.grad / self.val)

    def sqrt(self):
        v = sqrt(self.val)
        return Dual(v, self.grad / (2.0 * v))

    def sin(self):
        return Dual(sin(self.val), self.grad * cos(self.val))

    def cos(self):
        return Dual(cos(self.val), -self.grad * sin(self.val))


def _broadcast(fn, arr):
    out = np.empty(arr.shape, dtype=object)
    flat = arr.ravel()
    res = out.ravel()
    for i in range(flat.size):
        res[i] = fn(flat[i])
    return out


def exp(x):
    return x.exp() if isinstance(x, Dual) else math.exp(x)


def log(x):
    return x.log() if isinstance(x, Dual) else math.log(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, Dual) else math.sqrt(x)


def sin(x):
    return x.sin() if isinstance(x, Dual) else math.sin(x)


def cos(x):
    return x.cos() if isinstance(x, Dual) else math.cos(x)


def value(x):
    """Fully unwrap nested duals to the primal float."""
    while isinstance(x, Dual):
        x = x.val
    return x


def tangent(x, ndir):
    """Gradient row of ``x`` with respect to the outermost seeding."""
    if isinstance(x, Dual):
        return x.grad
    return np.zeros(ndir, dtype=object)


def seed_vector(values):
    """Seed a 1-d array with one independent direction per entry."""
    n = len(values)
    return np.array([Dual.seed(values[i], i, n) for i in range(n)],
                    dtype=object)


def jacobian(func, x0):
    """Value and Jacobian of ``func: R^m -> R^k`` by one forward pass.

    ``func`` must accept an object array and return a sequence of scalars
    (floats or duals).  Entries of ``x0`` may themselves be duals, in which
    case the returned value/Jacobian carry the inner tangents along.
    """
    m = len(x0)
    seeded = np.array([Dual.seed(x0[i], i, m) for i in range(m)],
                      dtype=object)
    out = func(seeded)
    vals = np.array([o.val if isinstance(o, Dual) else o for o in out],
                    dtype=object)
    rows = [tangent(o, m) for o in out]
    jac = np.array(rows, dtype=object)
    return vals, jac


def solve_linear(mat, rhs):
    """Solve ``mat @ x = rhs`` by Gaussian elimination over generic scalars.

    Works on object matrices whose entries are floats or (nested) duals;
    pivoting compares unwrapped primal magnitudes.  Returns None when the
    pivot chain degenerates to exact zero.
    """
    m = [list(row) for row in mat]
    b = list(rhs)
    size = len(b)
    for col in range(size):
        piv = max(range(col, size), key=lambda r: abs(value(m[r][col])))
        if value(m[piv][col]) == 0.0:
            return None
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
            b[col], b[piv] = b[piv], b[col]
        inv = 1.0 / m[col][col]
        for r in range(col + 1, size):
            factor = m[r][col] * inv
            for c in range(col, size):
                m[r][c] = m[r][c] - factor * m[col][c]
            b[r] = b[r] - factor * b[col]
    x = [0.0] * size
    for row in range(size - 1, -1, -1):
        acc = b[row]
        for c in range(row + 1, size):
            acc = acc - m[row][c] * x[c]
        x[row] = acc / m[row][row]
    return x
