"""Exact polynomial algebra of contact Hamiltonians on jet space.

Elements are finite sums  sum_alpha f_alpha(x, u) * p^alpha  with polynomial
coefficients, stored sparsely with exact rational coefficients whenever the
inputs are rational (floats contaminate).  The module provides the Poisson
bracket, the momentum Euler operator, the contact-Jacobi bracket, the three
bracket-generator constructions (degree raising, degree lowering, scalar
multiplication), the depth-one decomposition into strict and affine-in-p
generators, and tensor Chebyshev surrogate construction for smooth
Hamiltonians.

Conventions (fixed throughout the package):

* Poisson bracket  {f, g} = sum_i (df/dp_i dg/dx_i - df/dx_i dg/dp_i).
* Euler operator   E[f] = f - p . df/dp  (scales p-degree-k parts by 1-k).
* Contact-Jacobi bracket  [f, g] = {f, g} + df/du E[g] - dg/du E[f].
* "Strict" means u-independent; "affine" means p-degree <= 1.  Strict
  generators commute with the form exactly; affine generators are the
  Hamiltonians of lifted base-space flows.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from .errors import DegreeLimitError

FLOAT_ZERO_TOL = 1e-12

TermKey = Tuple[Tuple[int, ...], int, Tuple[int, ...]]  # (x exps, u pow, p exps)


def _is_zero(c) -> bool:
    if isinstance(c, Fraction) or isinstance(c, int):
        return c == 0
    return abs(c) <= FLOAT_ZERO_TOL


class JetPoly:
    """Sparse polynomial in (x_1..x_n, u, p_1..p_n)."""

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: Dict[TermKey, object] | None = None):
        self.n = n
        self.terms: Dict[TermKey, object] = {}
        if terms:
            for key, coeff in terms.items():
                if not _is_zero(coeff):
                    self.terms[key] = coeff

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, n: int) -> "JetPoly":
        return cls(n)

    @classmethod
    def const(cls, c, n: int = 1) -> "JetPoly":
        zeros = (0,) * n
        return cls(n, {(zeros, 0, zeros): c})

    @classmethod
    def x(cls, i: int = 0, n: int = 1) -> "JetPoly":
        zeros = (0,) * n
        e = tuple(1 if j == i else 0 for j in range(n))
        return cls(n, {(e, 0, zeros): Fraction(1)})

    @classmethod
    def u(cls, n: int = 1) -> "JetPoly":
        zeros = (0,) * n
        return cls(n, {(zeros, 1, zeros): Fraction(1)})

    @classmethod
    def p(cls, i: int = 0, n: int = 1) -> "JetPoly":
        zeros = (0,) * n
        e = tuple(1 if j == i else 0 for j in range(n))
        return cls(n, {(zeros, 0, e): Fraction(1)})

    @classmethod
    def monomial(cls, coeff, x_exps, u_pow, p_exps, n=None) -> "JetPoly":
        x_exps = tuple(x_exps)
        p_exps = tuple(p_exps)
        if n is None:
            n = len(x_exps)
        return cls(n, {(x_exps, u_pow, p_exps): coeff})

    # -- ring operations ---------------------------------------------------

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for key, c in other.terms.items():
            s = out.get(key, 0) + c
            if _is_zero(s):
                out.pop(key, None)
            else:
                out[key] = s
        return JetPoly(self.n, out)

    __radd__ = __add__

    def __neg__(self):
        return JetPoly(self.n, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, JetPoly):
            if _is_zero(other):
                return JetPoly.zero(self.n)
            return JetPoly(self.n,
                           {k: c * other for k, c in self.terms.items()})
        out: Dict[TermKey, object] = {}
        for (ax, au, ap), ac in self.terms.items():
            for (bx, bu, bp), bc in other.terms.items():
                key = (tuple(i + j for i, j in zip(ax, bx)), au + bu,
                       tuple(i + j for i, j in zip(ap, bp)))
                s = out.get(key, 0) + ac * bc
                if _is_zero(s):
                    out.pop(key, None)
                else:
                    out[key] = s
        return JetPoly(self.n, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = JetPoly.const(Fraction(1), self.n)
        for _ in range(k):
            out = out * self
        return out

    def _coerce(self, other) -> "JetPoly":
        if isinstance(other, JetPoly):
            if other.n != self.n:
                raise ValueError("mixed jet dimensions")
            return other
        return JetPoly.const(other, self.n)

    def __eq__(self, other):
        if not isinstance(other, JetPoly):
            return NotImplemented
        return self.n == other.n and self.terms == other.terms

    def __hash__(self):
        return hash((self.n, frozenset(self.terms.items())))

    def is_zero(self) -> bool:
        return not self.terms

    def max_abs_coeff(self) -> float:
        return max((abs(float(c)) for c in self.terms.values()), default=0.0)

    # -- calculus ----------------------------------------------------------

    def diff_x(self, i: int) -> "JetPoly":
        out = {}
        for (xe, up, pe), c in self.terms.items():
            if xe[i] == 0:
                continue
            nxe = list(xe)
            nxe[i] -= 1
            out[(tuple(nxe), up, pe)] = c * xe[i]
        return JetPoly(self.n, out)

    def diff_u(self) -> "JetPoly":
        out = {}
        for (xe, up, pe), c in self.terms.items():
            if up == 0:
                continue
            out[(xe, up - 1, pe)] = c * up
        return JetPoly(self.n, out)

    def diff_p(self, i: int) -> "JetPoly":
        out = {}
        for (xe, up, pe), c in self.terms.items():
            if pe[i] == 0:
                continue
            npe = list(pe)
            npe[i] -= 1
            out[(xe, up, tuple(npe))] = c * pe[i]
        return JetPoly(self.n, out)

    def integrate_u(self) -> "JetPoly":
        """Antiderivative in u with zero constant of integration."""
        out = {}
        for (xe, up, pe), c in self.terms.items():
            out[(xe, up + 1, pe)] = c * Fraction(1, up + 1) \
                if isinstance(c, (Fraction, int)) else c / (up + 1)
        return JetPoly(self.n, out)

    # -- structure queries --------------------------------------------------

    def p_degree(self) -> int:
        return max((sum(pe) for (_, _, pe) in self.terms), default=0)

    @property
    def is_strict(self) -> bool:
        """No dependence on the fiber value u."""
        return all(up == 0 for (_, up, _) in self.terms)

    @property
    def is_affine(self) -> bool:
        """Polynomial degree at most one in the momenta."""
        return self.p_degree() <= 1

    def p_coefficients(self) -> Dict[Tuple[int, ...], "JetPoly"]:
        """Coefficients f_alpha(x, u) grouped by momentum multi-index."""
        groups: Dict[Tuple[int, ...], Dict[TermKey, object]] = {}
        zeros = (0,) * self.n
        for (xe, up, pe), c in self.terms.items():
            groups.setdefault(pe, {})[(xe, up, zeros)] = c
        return {pe: JetPoly(self.n, t) for pe, t in groups.items()}

    def homogeneous_p_part(self, k: int) -> "JetPoly":
        return JetPoly(self.n, {key: c for key, c in self.terms.items()
                                if sum(key[2]) == k})

    def float_copy(self) -> "JetPoly":
        return JetPoly(self.n, {k: float(c) for k, c in self.terms.items()})

    # -- evaluation ----------------------------------------------------------

    def evaluate(self, x, u, p):
        """Evaluate with generic scalars (floats or duals)."""
        acc = 0.0
        for (xe, up, pe), c in self.terms.items():
            term = float(c) if isinstance(c, Fraction) else c
            for i, e in enumerate(xe):
                for _ in range(e):
                    term = term * x[i]
            for _ in range(up):
                term = term * u
            for i, e in enumerate(pe):
                for _ in range(e):
                    term = term * p[i]
            acc = acc + term
        return acc

    def __call__(self, z, t: float = 0.0):
        return self.evaluate(z.x, z.u, z.p)

    # -- printing -------------------------------------------------------------

    def __str__(self) -> str:
        return format_poly(self)

    def __repr__(self) -> str:
        return f"JetPoly({format_poly(self)!r})"


# ---------------------------------------------------------------------------
# brackets and operators
# ---------------------------------------------------------------------------


def poisson_bracket(f: JetPoly, g: JetPoly) -> JetPoly:
    """{f, g} = sum_i (df/dp_i dg/dx_i - df/dx_i dg/dp_i)."""
    out = JetPoly.zero(f.n)
    for i in range(f.n):
        out = out + f.diff_p(i) * g.diff_x(i) - f.diff_x(i) * g.diff_p(i)
    return out


def euler_operator(f: JetPoly) -> JetPoly:
    """E[f] = f - p . df/dp; scales p-homogeneous degree-k parts by 1 - k."""
    out = f
    for i in range(f.n):
        out = out - JetPoly.p(i, f.n) * f.diff_p(i)
    return out


def jacobi_bracket(f: JetPoly, g: JetPoly) -> JetPoly:
    """[f, g] = {f, g} + df/du E[g] - dg/du E[f]."""
    return (poisson_bracket(f, g) + f.diff_u() * euler_operator(g)
            - g.diff_u() * euler_operator(f))


def _single_monomial(target: JetPoly):
    if len(target.terms) != 1:
        raise ValueError("target must be a single monomial")
    (xe, up, pe), c = next(iter(target.terms.items()))
    if any(xe) or up != 0:
        raise ValueError("target must be a constant-coefficient p-monomial")
    return pe, c


def raise_degree(target: JetPoly, i: int) -> JetPoly:
    """Generator g with [g, c p^alpha] = c p^(alpha + e_i), |alpha| >= 2.

    g = u p_i / (1 - |alpha|); the scaling degenerates at |alpha| = 1.
    """
    pe, _ = _single_monomial(target)
    k = sum(pe)
    if k < 2:
        raise ValueError("degree raising needs momentum degree >= 2")
    return JetPoly.u(target.n) * JetPoly.p(i, target.n) * Fraction(1, 1 - k)


def lower_degree(target: JetPoly, i: int) -> JetPoly:
    """Generator g = -x_i / alpha_i with [g, c p^alpha] = c p^(alpha - e_i)."""
    pe, _ = _single_monomial(target)
    if pe[i] < 1:
        raise ValueError(f"target has no p_{i + 1} factor to lower")
    return JetPoly.x(i, target.n) * Fraction(-1, pe[i])


def scale_by(target: JetPoly, h: JetPoly) -> Tuple[JetPoly, JetPoly]:
    """Generator g with [g, c p^alpha] = c h(x,u) p^alpha + remainder.

    g = (1-k)^-1 * antiderivative of h in u, for |alpha| = k >= 2.  The
    remainder is the bracket minus the leading term; it has momentum degree
    k - 1 (or vanishes when h is x-independent).
    """
    pe, c = _single_monomial(target)
    k = sum(pe)
    if k < 2:
        raise ValueError("scalar multiplication needs momentum degree >= 2")
    if h.p_degree() != 0:
        raise ValueError("multiplier must not depend on the momenta")
    g = h.integrate_u() * Fraction(1, 1 - k)
    remainder = jacobi_bracket(g, target) - h * target
    return g, remainder


# ---------------------------------------------------------------------------
# depth-one decomposition
# ---------------------------------------------------------------------------


@dataclass
class DepthOneRepresentation:
    """H written as  s0 + d0 + sum_i [s_i, d_i]  with strict s, affine d.

    ``s0`` collects content with guaranteed elementary flows (constant
    momentum monomials plus pure-x terms); ``d0`` collects the remaining
    affine-in-p content; every pair contributes its contact-Jacobi bracket.
    """

    s0: JetPoly
    d0: JetPoly
    pairs: List[Tuple[JetPoly, JetPoly]] = field(default_factory=list)

    def reconstruct(self) -> JetPoly:
        out = self.s0 + self.d0
        for s, d in self.pairs:
            out = out + jacobi_bracket(s, d)
        return out

    def validate(self) -> None:
        if not self.s0.is_strict:
            raise ValueError("s0 is not strict")
        if not self.d0.is_affine:
            raise ValueError("d0 is not affine in p")
        for s, d in self.pairs:
            if not s.is_strict:
                raise ValueError("pair generator in strict slot depends on u")
            if not d.is_affine:
                raise ValueError("pair generator in affine slot has degree > 1")


def depth_one_decompose(H: JetPoly) -> DepthOneRepresentation:
    """Triangular elimination of H into the depth-one representation.

    Works from the highest momentum degree down.  At each degree, the
    constant part of every coefficient goes to s0 as an integrable momentum
    monomial; the non-constant part is produced as the leading term of one
    bracket with a scalar-multiplication generator, whose lower-degree
    byproduct is pushed back into the residual.  The affine tail splits into
    pure-x content (s0) and everything else (d0).  Reconstruction is exact
    (coefficientwise) by construction.
    """
    n = H.n
    zeros = (0,) * n
    s0 = JetPoly.zero(n)
    d0 = JetPoly.zero(n)
    pairs: List[Tuple[JetPoly, JetPoly]] = []
    residual = H
    while residual.p_degree() >= 2:
        k = residual.p_degree()
        for pe, coeff_poly in sorted(residual.homogeneous_p_part(k)
                                     .p_coefficients().items()):
            mono = JetPoly(n, {(zeros, 0, pe): Fraction(1)})
            const_c = coeff_poly.terms.get((zeros, 0, zeros), 0)
            if not _is_zero(const_c):
                s0 = s0 + mono * const_c
                residual = residual - mono * const_c
            rest = coeff_poly - JetPoly.const(const_c, n)
            if rest.is_zero():
                continue
            g, _ = scale_by(mono, rest)
            bracket = jacobi_bracket(mono, -g)  # equals [g, mono] by antisymmetry
            pairs.append((mono, -g))
            residual = residual - bracket
    # affine tail: pure-x content is strict and kickable, the rest is affine
    for (xe, up, pe), c in residual.terms.items():
        term = JetPoly(n, {(xe, up, pe): c})
        if up == 0 and not any(pe):
            s0 = s0 + term
        else:
            d0 = d0 + term
    rep = DepthOneRepresentation(s0=s0, d0=d0, pairs=pairs)
    rep.validate()
    return rep


# ---------------------------------------------------------------------------
# Chebyshev surrogate
# ---------------------------------------------------------------------------


def _cgl_nodes(degree: int) -> np.ndarray:
    if degree == 0:
        return np.array([0.0])
    return np.cos(np.pi * np.arange(degree + 1) / degree)


def chebyshev_surrogate(fn: Callable, box: Sequence[Tuple[float, float]],
                        degrees: Sequence[int],
                        sample_points: int = 21) -> Tuple[JetPoly, float]:
    """Tensor Chebyshev interpolant of fn over a (x..., u, p...) box.

    ``fn`` maps (x_vec, u, p_vec) -> float.  Interpolates at
    Chebyshev-Gauss-Lobatto nodes per axis, re-expands into the monomial
    basis of the original variables, and reports the sup error sampled on a
    dense uniform grid.
    """
    axes = len(box)
    if axes % 2 != 1:
        raise ValueError("box must cover the x, u, p axes (odd count)")
    n = axes // 2
    if hasattr(fn, "partials"):  # a Hamiltonian: adapt to split arguments
        from .core import JetPoint
        H = fn
        fn = lambda x, u, p: H(JetPoint(np.asarray(x, dtype=float),
                                        float(u),
                                        np.asarray(p, dtype=float)), 0.0)
    degrees = list(degrees)
    if len(degrees) != axes:
        raise ValueError("one degree per axis required")
    if any(d < 0 for d in degrees):
        raise ValueError("degrees must be >= 0")
    if any(d > 30 for d in degrees):
        raise DegreeLimitError(
            "monomial re-expansion is ill-conditioned past degree 30 per axis")

    def split(point):
        return (np.asarray(point[:n], dtype=float), float(point[n]),
                np.asarray(point[n + 1:], dtype=float))

    std_nodes = [_cgl_nodes(d) for d in degrees]
    phys_nodes = [0.5 * (hi + lo) + 0.5 * (hi - lo) * s
                  for (lo, hi), s in zip(box, std_nodes)]
    shape = tuple(len(v) for v in std_nodes)
    values = np.empty(shape)
    for idx in itertools.product(*(range(s) for s in shape)):
        point = [phys_nodes[a][idx[a]] for a in range(axes)]
        values[idx] = fn(*split(point))

    # Chebyshev coefficients, one axis at a time (square collocation solve).
    coeffs = values
    for axis in range(axes):
        vander = np.polynomial.chebyshev.chebvander(std_nodes[axis],
                                                    degrees[axis])
        moved = np.moveaxis(coeffs, axis, 0)
        flat = moved.reshape(shape[axis], -1)
        solved = np.linalg.solve(vander, flat)
        coeffs = np.moveaxis(solved.reshape(moved.shape), 0, axis)

    # Chebyshev -> monomial in the standardized variable, then the affine
    # change of variable back to the physical axis.
    for axis in range(axes):
        d = degrees[axis]
        lo, hi = box[axis]
        c2p = np.zeros((d + 1, d + 1))
        for k in range(d + 1):
            basis = np.zeros(k + 1)
            basis[k] = 1.0
            c2p[:k + 1, k] = np.polynomial.chebyshev.cheb2poly(basis)
        if hi == lo:
            raise ValueError("degenerate box axis")
        a = 2.0 / (hi - lo)
        b = -(hi + lo) / (hi - lo)
        affine = np.zeros((d + 1, d + 1))
        for k in range(d + 1):
            for i in range(k + 1):
                affine[i, k] = math.comb(k, i) * a ** i * b ** (k - i)
        transform = affine @ c2p
        moved = np.moveaxis(coeffs, axis, 0)
        flat = moved.reshape(shape[axis], -1)
        coeffs = np.moveaxis((transform @ flat).reshape(moved.shape), 0, axis)

    terms: Dict[TermKey, object] = {}
    for idx in itertools.product(*(range(s) for s in shape)):
        c = coeffs[idx]
        if abs(c) <= FLOAT_ZERO_TOL:
            continue
        terms[(tuple(idx[:n]), idx[n], tuple(idx[n + 1:]))] = float(c)
    surrogate = JetPoly(n, terms)

    grids = [np.linspace(lo, hi, sample_points) for lo, hi in box]
    worst = 0.0
    for point in itertools.product(*grids):
        x, u, p = split(point)
        err = abs(fn(x, u, p) - surrogate.evaluate(x, u, p))
        worst = max(worst, err)
    return surrogate, worst


# ---------------------------------------------------------------------------
# canonical textual form
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*([+-])\s*")
_FACTOR = re.compile(r"(?:(?P<var>[xup])(?P<idx>\d*)(?:\^(?P<exp>\d+))?"
                     r"|(?P<num>[0-9]+(?:/[0-9]+|\.[0-9]*)?(?:[eE][+-]?\d+)?))$")


def _coeff_str(c) -> str:
    if isinstance(c, Fraction):
        return str(c.numerator) if c.denominator == 1 else \
            f"{c.numerator}/{c.denominator}"
    return repr(float(c))


def format_poly(H: JetPoly) -> str:
    """Canonical sorted term list, e.g. ``1/2*p1^2 + 1/2*x1^2 + 3/10*u``."""
    if not H.terms:
        return "0"

    def sort_key(item):
        (xe, up, pe), _ = item
        return (-sum(pe), tuple(-e for e in pe), -sum(xe),
                tuple(-e for e in xe), -up)

    pieces = []
    for (xe, up, pe), c in sorted(H.terms.items(), key=sort_key):
        factors = []
        for i, e in enumerate(xe):
            if e:
                factors.append(f"x{i + 1}" + (f"^{e}" if e > 1 else ""))
        if up:
            factors.append("u" + (f"^{up}" if up > 1 else ""))
        for i, e in enumerate(pe):
            if e:
                factors.append(f"p{i + 1}" + (f"^{e}" if e > 1 else ""))
        neg = c < 0
        mag = -c if neg else c
        body = "*".join([_coeff_str(mag)] + factors) if (not factors or
                                                         mag != 1) else \
            "*".join(factors)
        pieces.append(("- " if neg else "+ ") + body)
    first = pieces[0]
    out = ("-" + first[2:]) if first.startswith("- ") else first[2:]
    return " ".join([out] + pieces[1:])


def parse_poly(text: str, n: int | None = None) -> JetPoly:
    """Parse the canonical textual form back into a polynomial.

    Accepts integer, decimal, and a/b coefficients (all kept exact) plus
    scientific-notation floats; bare ``x``/``p`` mean index 1.  The jet
    dimension is inferred from the largest variable index unless given.
    """
    text = text.strip()
    if not text or text == "0":
        return JetPoly.zero(n or 1)
    # normalize: ensure a leading sign, then split on signs
    src = text if text[0] in "+-" else "+" + text
    chunks = []
    pos = 0
    sign = 1
    buf = []
    while pos < len(src):
        ch = src[pos]
        if ch in "+-" and (pos == 0 or src[pos - 1] not in "eE"):
            if buf:
                chunks.append((sign, "".join(buf).strip()))
                buf = []
            sign = 1 if ch == "+" else -1
        else:
            buf.append(ch)
        pos += 1
    if buf:
        chunks.append((sign, "".join(buf).strip()))

    raw_terms = []
    max_idx = 0
    for sign, chunk in chunks:
        if not chunk:
            raise ValueError(f"dangling sign in {text!r}")
        coeff: object = Fraction(sign)
        xpow: Dict[int, int] = {}
        upow = 0
        ppow: Dict[int, int] = {}
        for factor in chunk.split("*"):
            factor = factor.strip()
            m = _FACTOR.match(factor)
            if not m or m.end() != len(factor):
                raise ValueError(f"cannot parse factor {factor!r}")
            if m.group("num") is not None:
                num = m.group("num")
                try:
                    coeff = coeff * Fraction(num)
                except ValueError:
                    coeff = coeff * float(num)
            else:
                var = m.group("var")
                idx = int(m.group("idx") or 1)
                e = int(m.group("exp") or 1)
                if var == "u":
                    if m.group("idx"):
                        raise ValueError("u carries no index")
                    upow += e
                elif var == "x":
                    xpow[idx - 1] = xpow.get(idx - 1, 0) + e
                    max_idx = max(max_idx, idx)
                else:
                    ppow[idx - 1] = ppow.get(idx - 1, 0) + e
                    max_idx = max(max_idx, idx)
        raw_terms.append((coeff, xpow, upow, ppow))

    dim = n or max(max_idx, 1)
    if max_idx > dim:
        raise ValueError(f"variable index {max_idx} exceeds dimension {dim}")
    out = JetPoly.zero(dim)
    for coeff, xpow, upow, ppow in raw_terms:
        xe = tuple(xpow.get(i, 0) for i in range(dim))
        pe = tuple(ppow.get(i, 0) for i in range(dim))
        out = out + JetPoly(dim, {(xe, upow, pe): coeff})
    return out
