"""Jet-space states, contact vector fields, and conformal-factor checks.

States live on the first jet space of R^n with Darboux coordinates
(x, u, p) and reference one-form du - p.dx.  The conformal scale of a
one-step map is extracted from the pullback of that form through the map's
Jacobian, obtained by forward-mode dual transport of the map itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .duals import Dual, value, tangent
from .errors import EvaluationError, OrientationError


@dataclass(frozen=True)
class JetPoint:
    """A point (x, u, p): base position, fiber value, momenta."""

    x: np.ndarray
    u: float
    p: np.ndarray

    @classmethod
    def of(cls, x, u, p) -> "JetPoint":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        p = np.atleast_1d(np.asarray(p, dtype=float))
        u = float(u)
        if x.shape != p.shape or x.ndim != 1 or x.size < 1:
            raise ValueError("x and p must be 1-d arrays of equal length >= 1")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))
                and math.isfinite(u)):
            raise EvaluationError("non-finite jet point")
        return cls(x, u, p)

    @property
    def n(self) -> int:
        return len(self.x)

    def as_array(self) -> np.ndarray:
        """Flatten to (x..., u, p...) order."""
        out = np.empty(2 * self.n + 1, dtype=object)
        out[:self.n] = self.x
        out[self.n] = self.u
        out[self.n + 1:] = self.p
        return out

    @classmethod
    def from_array(cls, arr, n: int) -> "JetPoint":
        x = np.array(arr[:n], dtype=object)
        p = np.array(arr[n + 1:], dtype=object)
        if not isinstance(arr[n], Dual) and not any(
                isinstance(v, Dual) for v in arr[:n]):
            return cls(np.asarray(arr[:n], dtype=float), float(arr[n]),
                       np.asarray(arr[n + 1:], dtype=float))
        return cls(x, arr[n], p)

    def primal(self) -> "JetPoint":
        """Strip dual parts, keeping the primal floats."""
        return JetPoint(np.array([value(v) for v in self.x], dtype=float),
                        value(self.u),
                        np.array([value(v) for v in self.p], dtype=float))

    def isclose(self, other: "JetPoint", tol: float = 1e-10) -> bool:
        return (np.max(np.abs(self.x - other.x)) <= tol
                and abs(self.u - other.u) <= tol
                and np.max(np.abs(self.p - other.p)) <= tol)


class Hamiltonian:
    """A scalar function H(z, t) with dual-derived partial derivatives.

    ``fn`` must be written with generic arithmetic (and the helpers in
    :mod:`contactlab.duals` for transcendentals) so that it evaluates on
    dual-seeded states as well as on plain floats.
    """

    def __init__(self, fn: Callable[[JetPoint, float], float], label: str = "H"):
        self.fn = fn
        self.label = label

    def __call__(self, z: JetPoint, t: float = 0.0):
        return self.fn(z, t)

    def partials(self, z: JetPoint, t: float = 0.0):
        """(dH/dx, dH/du, dH/dp) at (z, t), by one forward dual pass."""
        n = z.n
        ndir = 2 * n + 1
        xs = np.array([Dual.seed(z.x[i], i, ndir) for i in range(n)],
                      dtype=object)
        us = Dual.seed(z.u, n, ndir)
        ps = np.array([Dual.seed(z.p[i], n + 1 + i, ndir) for i in range(n)],
                      dtype=object)
        out = self.fn(JetPoint(xs, us, ps), t)
        grad = tangent(out, ndir)
        dx = np.array(grad[:n], dtype=object)
        du = grad[n]
        dp = np.array(grad[n + 1:], dtype=object)
        if not isinstance(out, Dual) or not any(
                isinstance(g, Dual) for g in grad):
            dx = dx.astype(float)
            dp = dp.astype(float)
            du = float(du)
            bad = [lbl for lbl, v in (("dH/dx", dx), ("dH/dp", dp))
                   if not np.all(np.isfinite(v))]
            if not math.isfinite(du):
                bad.append("dH/du")
            if bad:
                raise EvaluationError(
                    f"non-finite partials of {self.label}: {', '.join(bad)}")
        return dx, du, dp


def contact_vector_field(H: Hamiltonian, z: JetPoint, t: float = 0.0):
    """(xdot, udot, pdot) of the contact Hamiltonian vector field at (z, t).

    xdot_i = dH/dp_i, pdot_i = -(dH/dx_i + p_i dH/du),
    udot = p.dH/dp - H.
    """
    dx, du, dp = H.partials(z, t)
    xdot = dp
    pdot = -(dx + z.p * du)
    udot = sum(z.p[i] * dp[i] for i in range(z.n)) - H(z, t)
    return xdot, udot, pdot


def conformal_rate(H: Hamiltonian, z: JetPoint, t: float = 0.0):
    """Instantaneous log-conformal rate of the flow of H: -dH/du."""
    _, du, _ = H.partials(z, t)
    return -du


@dataclass(frozen=True)
class ConformalReport:
    """Log-conformal factor of a map at a point, plus proportionality defect.

    ``sigma`` is log of the pulled-back form evaluated on the fiber
    direction; ``residual`` is the max-norm deviation of the full pulled-back
    covector from exp(sigma) times the reference form at the source point.
    ``scale`` is the max-norm of that reference covector (useful for
    relative comparisons at large momenta).
    """

    sigma: float
    residual: float
    scale: float = 1.0


def map_jacobian(map_fn: Callable[[JetPoint], JetPoint], z: JetPoint):
    """Image point and (2n+1)x(2n+1) Jacobian of a jet-space map at z.

    The Jacobian is the exact derivative of the evaluated map (dual
    transport), in (x, u, p) block order.
    """
    n = z.n
    ndir = 2 * n + 1
    seeded = JetPoint(
        np.array([Dual.seed(z.x[i], i, ndir) for i in range(n)], dtype=object),
        Dual.seed(z.u, n, ndir),
        np.array([Dual.seed(z.p[i], n + 1 + i, ndir) for i in range(n)],
                 dtype=object))
    img = map_fn(seeded)
    flat = img.as_array()
    vals = np.array([value(v) for v in flat], dtype=float)
    jac = np.array([[value(g) for g in tangent(v, ndir)] for v in flat],
                   dtype=float)
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(jac))):
        raise EvaluationError("non-finite map Jacobian")
    return JetPoint(vals[:n], vals[n], vals[n + 1:]), jac


def pullback_conformal_factor(map_fn: Callable[[JetPoint], JetPoint],
                              z: JetPoint) -> ConformalReport:
    """Conformal data of a one-step map at z via Jacobian pullback.

    Pulls du - p.dx at the image back through the Jacobian; sigma is the
    log of the fiber component (the coefficient of du), and the residual
    measures how far the pulled-back covector is from exp(sigma) times the
    form at the source.
    """
    n = z.n
    img, jac = map_jacobian(map_fn, z)
    alpha_img = np.concatenate([-img.p, [1.0], np.zeros(n)])
    w = jac.T @ alpha_img
    w_u = w[n]
    if w_u <= 0.0:
        raise OrientationError(
            f"pulled-back form has non-positive fiber component {w_u!r}")
    sigma = math.log(w_u)
    alpha_src = np.concatenate([-z.p, [1.0], np.zeros(n)])
    residual = float(np.max(np.abs(w - w_u * alpha_src)))
    scale = float(max(1.0, w_u * np.max(np.abs(alpha_src))))
    return ConformalReport(sigma=sigma, residual=residual, scale=scale)


@dataclass(frozen=True)
class ContactCheck:
    passed: bool
    worst_residual: float
    worst_point: JetPoint | None
    n_samples: int
    warning: str | None = None


def verify_contactomorphism(map_fn: Callable[[JetPoint], JetPoint],
                            samples: Sequence[JetPoint],
                            tol: float = 1e-10,
                            relative: bool = False) -> ContactCheck:
    """Check the pullback residual of a map at every sample point.

    With ``relative=True`` each residual is divided by the magnitude of the
    scaled reference covector before comparison, which keeps the check
    meaningful at very large momenta.
    """
    if len(samples) == 0:
        return ContactCheck(True, 0.0, None, 0,
                            warning="no samples supplied; vacuous pass")
    worst = -1.0
    worst_z = None
    for z in samples:
        rep = pullback_conformal_factor(map_fn, z)
        res = rep.residual / rep.scale if relative else rep.residual
        if res > worst:
            worst, worst_z = res, z
    return ContactCheck(worst <= tol, worst, worst_z, len(samples))
