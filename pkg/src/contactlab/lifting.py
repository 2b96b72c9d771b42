"""Lifting base-space integrators to contact maps by momentum prolongation.

An affine-in-p Hamiltonian f(x,u) + g(x,u).p projects to the base ODE
xdot = g, udot = -f on R^n x R.  Any one-step method for that ODE lifts to
a contact map: the base map moves (x, u), and the momenta follow by the
chain rule through the Jacobian of the *numerical* map, which is obtained
exactly by forward-mode dual transport of the step computation.

The module provides the classical four-stage step, an embedded 5(4)
adaptive pair, the momentum prolongation solve, the non-contact full-system
baseline, and a high-accuracy reference solver used as the test oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import duals
from .core import Hamiltonian, JetPoint, contact_vector_field
from .duals import Dual, value
from .errors import EvaluationError, ProlongationSingularityError, StiffnessError
from .subflows import ContactStep

SINGULARITY_RTOL = 1e-8


@dataclass(frozen=True)
class BaseVectorField:
    """Base dynamics xdot = g(x,u,t), udot = -f(x,u,t).

    The sign of f matches the affine Hamiltonian f + g.p whose contact flow
    prolongs this base flow.
    """

    g: Callable
    f: Callable
    label: str = "base"

    @classmethod
    def from_affine_poly(cls, poly) -> "BaseVectorField":
        """Build the base field of an affine-in-p polynomial Hamiltonian."""
        if not poly.is_affine:
            raise ValueError("Hamiltonian is not affine in p")
        n = poly.n
        coeffs = poly.p_coefficients()
        zero = None
        f_poly = coeffs.get((0,) * n)
        g_polys = []
        for i in range(n):
            e = tuple(1 if j == i else 0 for j in range(n))
            g_polys.append(coeffs.get(e))
        zeros = np.zeros(n)

        def g(x, u, t):
            return [gp.evaluate(x, u, zeros) if gp is not None else 0.0
                    for gp in g_polys]

        def f(x, u, t):
            return f_poly.evaluate(x, u, zeros) if f_poly is not None else 0.0

        return cls(g=g, f=f, label=f"base[{poly}]")

    def rhs(self, t, vec):
        """Stacked (x..., u) right-hand side on generic scalars."""
        x, u = vec[:-1], vec[-1]
        gv = self.g(x, u, t)
        out = np.empty(len(vec), dtype=object)
        out[:-1] = gv
        out[-1] = -self.f(x, u, t)
        return out


@dataclass(frozen=True)
class JacobianBlocks:
    """Blocks of the base-map Jacobian in (x, u) order."""

    j_xx: np.ndarray   # dxbar/dx, (n, n)
    j_xu: np.ndarray   # dxbar/du, (n,)
    j_ux: np.ndarray   # dubar/dx, (n,)
    j_uu: object       # dubar/du, scalar

    @classmethod
    def from_matrix(cls, jac, n: int) -> "JacobianBlocks":
        return cls(j_xx=jac[:n, :n], j_xu=jac[:n, n],
                   j_ux=jac[n, :n], j_uu=jac[n, n])

    @classmethod
    def identity(cls, n: int) -> "JacobianBlocks":
        return cls(np.eye(n), np.zeros(n), np.zeros(n), 1.0)


def prolong_momentum(blocks: JacobianBlocks, p):
    """Transport momenta through a base-map Jacobian by the chain rule.

    Solves  M^T pbar = D_x(ubar)  with  M = j_xx + j_xu p^T  and total
    derivative D_x(ubar) = j_ux + p j_uu.  Raises when M is numerically
    singular relative to the size of its entries.
    """
    n = len(p)
    rhs = [blocks.j_ux[i] + p[i] * blocks.j_uu for i in range(n)]
    mat = [[blocks.j_xx[i][j] + blocks.j_xu[i] * p[j] for j in range(n)]
           for i in range(n)]
    vals = np.array([[value(e) for e in row] for row in mat], dtype=float)
    gauge = np.array([[abs(value(blocks.j_xx[i][j])) +
                       abs(value(blocks.j_xu[i])) * abs(value(p[j]))
                       for j in range(n)] for i in range(n)])
    scale = max(float(np.max(gauge)), 1e-300)
    if n == 1:
        if abs(vals[0, 0]) < SINGULARITY_RTOL * max(scale, 1.0):
            raise ProlongationSingularityError(
                f"prolongation denominator {vals[0, 0]:.3e} below "
                f"{SINGULARITY_RTOL:g} of scale {scale:.3e}")
    else:
        svals = np.linalg.svd(vals, compute_uv=False)
        if svals[-1] < SINGULARITY_RTOL * max(svals[0], scale, 1.0):
            raise ProlongationSingularityError(
                f"prolongation matrix nearly singular "
                f"(sigma_min={svals[-1]:.3e})")
    matT = [[mat[j][i] for j in range(n)] for i in range(n)]
    sol = duals.solve_linear(matT, rhs)
    if sol is None:
        raise ProlongationSingularityError("prolongation matrix is singular")
    if any(isinstance(s, Dual) for s in sol):
        return np.array(sol, dtype=object)
    return np.array([float(s) for s in sol])


def rk4_base_step(Y: BaseVectorField, x, u, t: float, h: float):
    """One classical four-stage step of the base ODE with its exact
    numerical-map Jacobian (dual transport through the stages)."""
    n = len(x)
    vec0 = np.empty(n + 1, dtype=object)
    vec0[:n] = x
    vec0[n] = u

    def step(v):
        k1 = Y.rhs(t, v)
        k2 = Y.rhs(t + h / 2.0, v + (h / 2.0) * k1)
        k3 = Y.rhs(t + h / 2.0, v + (h / 2.0) * k2)
        k4 = Y.rhs(t + h, v + h * k3)
        return v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    vals, jac = duals.jacobian(step, vec0)
    _check_finite_base(vals)
    return vals[:n], vals[n], JacobianBlocks.from_matrix(jac, n)


# Dormand-Prince 5(4) pair: 5th-order propagated solution, embedded
# 4th-order error estimate, seven stages.
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
          187 / 2100, 1 / 40)
_DP_ORDER = 5
SAFETY = 0.9
STEP_RATIO_MIN = 0.2
STEP_RATIO_MAX = 5.0


def adaptive_base_step(Y: BaseVectorField, x, u, t: float, h_try: float,
                       rtol: float, atol: float):
    """One embedded 5(4) step with error control and Jacobian transport.

    Returns ((xbar, ubar), blocks, h_next, accepted).  The controller is
    the standard one: h_next = 0.9 h (1/err)^(1/(q+1)) with q the order of
    the accepted solution, ratio clamped to [0.2, 5].
    """
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    n = len(x)
    vec0 = np.empty(n + 1, dtype=object)
    vec0[:n] = x
    vec0[n] = u

    err_box = {}

    def step(v):
        ks = []
        for i in range(7):
            vi = v
            for j, a in enumerate(_DP_A[i]):
                if a != 0.0:
                    vi = vi + (h_try * a) * ks[j]
            ks.append(Y.rhs(t + _DP_C[i] * h_try, vi))
        v5 = v
        diff = None
        for i in range(7):
            if _DP_B5[i] != 0.0:
                v5 = v5 + (h_try * _DP_B5[i]) * ks[i]
            db = _DP_B5[i] - _DP_B4[i]
            if db != 0.0:
                diff = (h_try * db) * ks[i] if diff is None \
                    else diff + (h_try * db) * ks[i]
        err_box["e"] = diff
        return v5

    vals, jac = duals.jacobian(step, vec0)
    _check_finite_base(vals)
    y0 = np.array([value(v) for v in vec0], dtype=float)
    y1 = np.array([value(v) for v in vals], dtype=float)
    e = np.array([value(v) for v in err_box["e"]], dtype=float)
    scale_vec = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    err_norm = float(np.sqrt(np.mean((e / scale_vec) ** 2)))
    accepted = err_norm <= 1.0
    if err_norm == 0.0:
        ratio = STEP_RATIO_MAX
    else:
        ratio = SAFETY * err_norm ** (-1.0 / (_DP_ORDER + 1))
        ratio = min(max(ratio, STEP_RATIO_MIN), STEP_RATIO_MAX)
    h_next = h_try * ratio
    return (vals[:n], vals[n]), JacobianBlocks.from_matrix(jac, n), \
        h_next, accepted


def lifted_step(Y: BaseVectorField, method: str, z: JetPoint, t: float,
                h: float, rtol: float = 1e-10, atol: float = 1e-12) -> JetPoint:
    """One contact step: advance the base pair, prolong the momenta.

    ``method`` is "rk4" (single fixed step) or "adaptive" (internal
    substepping over [t, t+h] with the Jacobian accumulated by the chain
    rule before a single prolongation).
    """
    n = z.n
    if h == 0.0:
        return z
    if method == "rk4":
        xb, ub, blocks = rk4_base_step(Y, z.x, z.u, t, h)
    elif method == "adaptive":
        xb, ub, blocks = _adaptive_span(Y, z.x, z.u, t, h, rtol, atol)
    else:
        raise ValueError(f"unknown base method {method!r}")
    pb = prolong_momentum(blocks, z.p)
    return JetPoint(_as_state(xb), ub if isinstance(ub, Dual) else float(ub),
                    _as_state(pb))


def _adaptive_span(Y, x, u, t, h, rtol, atol):
    """Adaptive sub-integration across [t, t+h] with Jacobian accumulation."""
    n = len(x)
    direction = 1.0 if h > 0 else -1.0
    t_end = t + h
    t_cur = t
    h_sub = h
    jac_total = None
    steps = 0
    while direction * (t_end - t_cur) > 1e-15 * abs(h):
        remaining = t_end - t_cur
        if abs(h_sub) > abs(remaining):
            h_sub = remaining
        if abs(h_sub) < 1e-14 * abs(h):
            raise StiffnessError(
                f"adaptive step underflow at t={t_cur}; span too stiff")
        (xb, ub), blocks, h_next, accepted = adaptive_base_step(
            Y, x, u, t_cur, h_sub, rtol, atol)
        if accepted:
            x, u = xb, ub
            t_cur += h_sub
            jac_step = _blocks_matrix(blocks, n)
            jac_total = jac_step if jac_total is None \
                else np.dot(jac_step, jac_total)
        h_sub = h_next
        steps += 1
        if steps > 1_000_000:
            raise StiffnessError("adaptive step budget exhausted")
    if jac_total is None:
        return x, u, JacobianBlocks.identity(n)
    return x, u, JacobianBlocks.from_matrix(jac_total, n)


def _blocks_matrix(blocks: JacobianBlocks, n: int):
    m = np.empty((n + 1, n + 1), dtype=object)
    m[:n, :n] = blocks.j_xx
    m[:n, n] = blocks.j_xu
    m[n, :n] = blocks.j_ux
    m[n, n] = blocks.j_uu
    return m


def lifted_contact_step(Y: BaseVectorField, method: str = "rk4",
                        rtol: float = 1e-10, atol: float = 1e-12,
                        label: str | None = None) -> ContactStep:
    """Wrap a lifted integrator as a catalog substep.

    No analytic conformal increment is attached; the runner measures it by
    pullback when asked.
    """

    def apply(z, t, h):
        return lifted_step(Y, method, z, t, h, rtol=rtol, atol=atol)

    return ContactStep(label or f"lifted-{method}[{Y.label}]", apply,
                       sigma=None, advances_time=True)


def full_system_rk4(H: Hamiltonian, z: JetPoint, t: float, h: float) -> JetPoint:
    """Classical four-stage step on the full contact ODE.

    Deliberately not a contactomorphism; serves as the non-structure-
    preserving baseline.
    """
    n = z.n

    def rhs(tt, flat):
        zz = JetPoint.from_array(flat, n)
        xdot, udot, pdot = contact_vector_field(H, zz, tt)
        out = np.empty(2 * n + 1, dtype=object)
        out[:n] = xdot
        out[n] = udot
        out[n + 1:] = pdot
        return out

    y0 = z.as_array()
    k1 = rhs(t, y0)
    k2 = rhs(t + h / 2.0, y0 + (h / 2.0) * k1)
    k3 = rhs(t + h / 2.0, y0 + (h / 2.0) * k2)
    k4 = rhs(t + h, y0 + h * k3)
    y1 = y0 + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return JetPoint.from_array(y1, n)


def full_system_rk4_step(H: Hamiltonian, label: str = "rk4-full") -> ContactStep:
    return ContactStep(label, lambda z, t, h: full_system_rk4(H, z, t, h),
                       sigma=None, advances_time=True)


# ---------------------------------------------------------------------------
# reference solver (test oracle)
# ---------------------------------------------------------------------------


class DenseSolution:
    """Dense trajectory wrapper: call with a time (scalar or array)."""

    def __init__(self, sol, n: Optional[int] = None):
        self._sol = sol
        self._n = n

    def __call__(self, t):
        return self._sol.sol(t)

    def jet(self, t) -> JetPoint:
        if self._n is None:
            raise ValueError("not a contact-system solution")
        y = self._sol.sol(t)
        return JetPoint.of(y[:self._n], y[self._n], y[self._n + 1:])

    @property
    def t(self):
        return self._sol.t

    @property
    def y(self):
        return self._sol.y


def reference_solve(rhs: Callable, y0: Sequence[float], t_span,
                    rtol: float = 1e-12, atol: float = 1e-14,
                    t_eval=None, n: Optional[int] = None,
                    max_step: float = np.inf) -> DenseSolution:
    """High-order adaptive reference integration with dense output.

    Tries an explicit order-8 method first and falls back to a stiff solver
    when the explicit one fails; raises with guidance when both fail.
    """
    last = None
    for method in ("DOP853", "Radau"):
        sol = solve_ivp(rhs, t_span, np.asarray(y0, dtype=float),
                        method=method, rtol=rtol, atol=atol,
                        dense_output=True, t_eval=t_eval, max_step=max_step)
        if sol.success:
            return DenseSolution(sol, n=n)
        last = sol
    raise StiffnessError(
        "reference solve failed; shorten the time span or loosen the "
        f"tolerance (solver message: {last.message})")


def contact_rhs(H: Hamiltonian) -> Callable:
    """Flat (x..., u, p...) right-hand side of the contact ODE of H."""

    def rhs(t, y):
        m = (len(y) - 1) // 2
        z = JetPoint(np.asarray(y[:m], dtype=float), float(y[m]),
                     np.asarray(y[m + 1:], dtype=float))
        xdot, udot, pdot = contact_vector_field(H, z, t)
        return np.concatenate([np.asarray(xdot, dtype=float), [udot],
                               np.asarray(pdot, dtype=float)])

    return rhs


def base_rhs(Y: BaseVectorField) -> Callable:
    """Flat (x..., u) right-hand side of the base ODE of Y."""

    def rhs(t, y):
        x, u = y[:-1], y[-1]
        g = np.asarray(Y.g(x, u, t), dtype=float)
        return np.concatenate([g, [-float(Y.f(x, u, t))]])

    return rhs


def _as_state(vec):
    if any(isinstance(v, Dual) for v in vec):
        return np.asarray(vec, dtype=object)
    return np.asarray(vec, dtype=float)


def _check_finite_base(vals):
    for v in vals:
        if not isinstance(v, Dual) and not math.isfinite(value(v)):
            raise EvaluationError("non-finite base integrator stage")
