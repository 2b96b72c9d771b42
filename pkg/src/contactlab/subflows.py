"""Closed-form contact subflows: the exact building blocks of every scheme.

Each factory returns a :class:`ContactStep` whose ``apply(z, t, h)`` is the
exact time-h contact flow of the named Hamiltonian (signed h; compositions
with negative substeps are first-class).  Where the log-conformal increment
of a substep is available analytically it is attached; otherwise callers
fall back to the Jacobian pullback.

All flow bodies use generic arithmetic so they transport dual numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from . import duals
from .algebra import JetPoly, parse_poly
from .core import JetPoint, pullback_conformal_factor
from .duals import exp, sqrt, value
from .errors import BlowupError


@dataclass(frozen=True)
class ContactStep:
    """A labelled one-step map with its conformal bookkeeping.

    ``apply(z, t_start, h)`` maps a jet point over a signed duration h;
    ``sigma`` (when set) returns the exact log-conformal increment of that
    step; ``advances_time`` marks substeps that consume physical time in a
    time-dependent composition.
    """

    label: str
    apply: Callable[[JetPoint, float, float], JetPoint]
    sigma: Optional[Callable[[JetPoint, float, float], float]] = None
    advances_time: bool = False

    def at(self, t: float, h: float) -> Callable[[JetPoint], JetPoint]:
        """Bind (t, h), giving a plain map for verification utilities."""
        return lambda z: self.apply(z, t, h)

    def sigma_increment(self, z: JetPoint, t: float, h: float) -> float:
        if self.sigma is not None:
            return self.sigma(z, t, h)
        return pullback_conformal_factor(self.at(t, h), z).sigma


def _grad_via_duals(fn):
    def grad(vec):
        _, jac = duals.jacobian(lambda v: [fn(v)], vec)
        return jac[0]
    return grad


def _vec(g, z):
    """Gradient sequence as a state-compatible array (float or dual mode)."""
    if _any_dual(z) or any(isinstance(v, duals.Dual) for v in g):
        return np.asarray(g, dtype=object)
    return np.asarray(g, dtype=float)


# ---------------------------------------------------------------------------
# strict flows (preserve the form exactly; sigma = 0)
# ---------------------------------------------------------------------------


def drift_flow(T, grad_T=None, label: str | None = None) -> ContactStep:
    """Exact flow of a momentum-only Hamiltonian T(p).

    x += h grad T(p), p fixed, u += h (p.grad T - T).
    """
    gT = grad_T if grad_T is not None else _grad_via_duals(T)

    def apply(z, t, h):
        g = gT(z.p)
        val = T(z.p)
        pdotg = sum(z.p[i] * g[i] for i in range(len(g)))
        return JetPoint(z.x + h * _vec(g, z), z.u + h * (pdotg - val), z.p)

    return ContactStep(label or "drift", apply, sigma=_zero_sigma)


def kick_flow(V, grad_V=None, label: str | None = None) -> ContactStep:
    """Exact flow of a position-only Hamiltonian V(x).

    p -= h grad V(x), x fixed, u -= h V(x).
    """
    gV = grad_V if grad_V is not None else _grad_via_duals(V)

    def apply(z, t, h):
        return JetPoint(z.x, z.u - h * V(z.x), z.p - h * _vec(gV(z.x), z))

    return ContactStep(label or "kick", apply, sigma=_zero_sigma)


def harmonic_strict_flow(label: str = "harmonic") -> ContactStep:
    """Exact flow of (p^2 + x^2)/2 in one dimension.

    (x, p) rotate by angle h; the fiber picks up the closed-form integral
    of (p^2 - x^2)/2 along the rotation.
    """

    def apply(z, t, h):
        x, p = z.x[0], z.p[0]
        c, s = duals.cos(h), duals.sin(h)
        xb = x * c + p * s
        pb = p * c - x * s
        du = (p * p - x * x) * duals.sin(2 * h) / 4.0 \
            + x * p * (duals.cos(2 * h) - 1.0) / 2.0
        return JetPoint(_pack(xb, z), z.u + du, _pack(pb, z))

    return ContactStep(label, apply, sigma=_zero_sigma)


def legendre_map(f, eta, k, z: JetPoint, grad_f=None) -> JetPoint:
    """Momentum-position exchange lifted strictly through its generating
    function: (x, u, p) -> (p + eta, u - x.p + f(p) + k, -x + grad f(p))."""
    gf = grad_f if grad_f is not None else _grad_via_duals(f)
    xdotp = sum(z.x[i] * z.p[i] for i in range(len(z.x)))
    return JetPoint(z.p + eta, z.u - xdotp + f(z.p) + k,
                    -z.x + _vec(gf(z.p), z))


def gradient_step(f, z: JetPoint, grad_f=None) -> JetPoint:
    """Prolonged descent map: (x, u, p) -> (x, u - f(x), p - grad f(x))."""
    gf = grad_f if grad_f is not None else _grad_via_duals(f)
    return JetPoint(z.x, z.u - f(z.x), z.p - _vec(gf(z.x), z))


# ---------------------------------------------------------------------------
# affine-in-p (lifted base) flows
# ---------------------------------------------------------------------------


def reeb_scaling_flow(gamma: float, label: str | None = None) -> ContactStep:
    """Exact flow of gamma * u: uniform exponential scaling of (u, p)."""

    def apply(z, t, h):
        s = exp(-gamma * h)
        return JetPoint(z.x, z.u * s, z.p * s)

    return ContactStep(label or f"reeb({gamma})", apply,
                       sigma=lambda z, t, h: -gamma * h)


def quad_u_flow(c: float, label: str | None = None) -> ContactStep:
    """Exact flow of c * u^2: u -> u/(1 + c u h), p -> p (1 + c u h)^-2.

    Leaves its domain when 1 + c u h <= 0 (finite-time blow-up).
    """

    def apply(z, t, h):
        den = 1.0 + c * z.u * h
        if value(den) <= 0.0:
            cu = c * value(z.u)
            tcrit = (-1.0 / cu) if cu != 0 else None
            raise BlowupError(
                f"quadratic-u flow blows up before h={value(h)} "
                f"(critical time {tcrit})", critical_time=tcrit)
        return JetPoint(z.x, z.u / den, z.p / (den * den))

    def sigma(z, t, h):
        den = 1.0 + c * z.u * h
        if den <= 0.0:
            raise BlowupError("quadratic-u flow left its domain")
        return -2.0 * np.log(den)

    return ContactStep(label or f"quadu({c})", apply, sigma=sigma)


def bernoulli_B_flow(sigma_coef: float, label: str | None = None) -> ContactStep:
    """Exact flow of sigma * p^2 * u (cubic Bernoulli step; p u invariant).

    p -> p/sqrt(D), u -> u sqrt(D), x -> x + 2 sigma p u h with
    D = 1 + 2 sigma p^2 h.
    """

    def apply(z, t, h):
        p, u = z.p[0], z.u
        D = 1.0 + 2.0 * sigma_coef * p * p * h
        if value(D) <= 0.0:
            denom = 2.0 * sigma_coef * value(p) ** 2
            tcrit = (-1.0 / denom) if denom != 0 else None
            raise BlowupError(
                f"Bernoulli p^2 u flow blows up before h={value(h)}",
                critical_time=tcrit)
        root = sqrt(D)
        xb = z.x[0] + 2.0 * sigma_coef * p * u * h
        return JetPoint(_pack(xb, z), u * root, _pack(p / root, z))

    def sig(z, t, h):
        den = 1.0 + 2.0 * sigma_coef * z.p[0] ** 2 * h
        if den <= 0.0:
            raise BlowupError("Bernoulli p^2 u flow left its domain")
        return -0.5 * np.log(den)

    return ContactStep(label or f"bernoulliB({sigma_coef})", apply, sigma=sig)


def bernoulli_T_flow(sigma_coef: float, label: str | None = None) -> ContactStep:
    """Exact flow of (1 + 2 sigma u) p^2 / 2; (1 + 2 sigma u) p invariant.

    Degenerates to the plain p^2/2 drift at sigma = 0, which callers should
    use directly instead.
    """
    if sigma_coef == 0:
        raise ValueError("sigma = 0 degenerates; use drift_flow with p^2/2")

    def apply(z, t, h):
        p, u = z.p[0], z.u
        D2 = 1.0 + 2.0 * sigma_coef * p * p * h
        if value(D2) <= 0.0:
            denom = 2.0 * sigma_coef * value(p) ** 2
            tcrit = (-1.0 / denom) if denom != 0 else None
            raise BlowupError(
                f"Bernoulli kinetic flow blows up before h={value(h)}",
                critical_time=tcrit)
        D = sqrt(D2)
        w = 1.0 + 2.0 * sigma_coef * u
        xb = z.x[0] + w * p * h
        ub = (w * D - 1.0) / (2.0 * sigma_coef)
        return JetPoint(_pack(xb, z), ub, _pack(p / D, z))

    def sig(z, t, h):
        den = 1.0 + 2.0 * sigma_coef * z.p[0] ** 2 * h
        if den <= 0.0:
            raise BlowupError("Bernoulli kinetic flow left its domain")
        return -0.5 * np.log(den)

    return ContactStep(label or f"bernoulliT({sigma_coef})", apply, sigma=sig)


def linear_u_flow(a, da, label: str | None = None) -> ContactStep:
    """Exact flow of a(x) * u: x fixed, u scales, p shears.

    u -> u e^{-a h}, p -> e^{-a h} (p - a'(x) u h), one dimension.
    """

    def apply(z, t, h):
        ax = a(z.x[0])
        s = exp(-ax * h)
        ub = z.u * s
        pb = s * (z.p[0] - da(z.x[0]) * z.u * h)
        return JetPoint(z.x, ub, _pack(pb, z))

    return ContactStep(label or "linu", apply,
                       sigma=lambda z, t, h: -a(z.x[0]) * h)


def exp_kick_flow(gamma: float, V, grad_V, label: str | None = None) -> ContactStep:
    """Exact flow of gamma * u + V(x): a kick with exponential relaxation.

    x fixed; u and p relax toward the forced equilibrium at rate gamma.
    Reduces to the plain kick as gamma -> 0.
    """

    def apply(z, t, h):
        if gamma == 0:
            return JetPoint(z.x, z.u - h * V(z.x),
                            z.p - h * _vec(grad_V(z.x), z))
        s = exp(-gamma * h)
        fac = (1.0 - s) / gamma
        return JetPoint(z.x, s * z.u - fac * V(z.x),
                        s * z.p - fac * _vec(grad_V(z.x), z))

    return ContactStep(label or f"expkick({gamma})", apply,
                       sigma=lambda z, t, h: -gamma * h)


def u_drift_flow(c: float, label: str | None = None,
                 wrap: bool = False) -> ContactStep:
    """Exact flow of c * u * p in one dimension.

    u fixed, x += c u h, p -> p/(1 + c p h).  The momentum update is a
    Moebius map with a pole at 1 + c p h = 0 where the affine coordinate p
    passes through infinity while (x, u) stay finite.  By default crossing
    the pole raises; with ``wrap=True`` the formula value (the projective
    continuation of the flow) is returned instead, and only an exact pole
    hit raises.
    """

    def apply(z, t, h):
        den = 1.0 + c * z.p[0] * h
        if (value(den) <= 0.0 and not wrap) or value(den) == 0.0:
            cp = c * value(z.p[0])
            tcrit = (-1.0 / cp) if cp != 0 else None
            raise BlowupError(
                f"u-transport momentum pole before h={value(h)}",
                critical_time=tcrit)
        return JetPoint(_pack(z.x[0] + c * z.u * h, z), z.u,
                        _pack(z.p[0] / den, z))

    def sig(z, t, h):
        den = 1.0 + c * z.p[0] * h
        if den <= 0.0:
            raise BlowupError("log-conformal increment undefined across the "
                              "momentum pole (coorientation flip)")
        return -np.log(den)

    return ContactStep(label or f"udrift({c})", apply, sigma=sig)


def forcing_flow(amp: float, omega: float, label: str | None = None) -> ContactStep:
    """Exact flow of the state-independent forcing amp * cos(omega t).

    Only the fiber moves: u -= amp * integral of cos(omega s) over the step.
    Strict, and the only catalog substep that consumes physical time.
    """

    def apply(z, t, h):
        if omega == 0.0:
            du = amp * h
        else:
            du = amp / omega * (duals.sin(omega * (t + h)) -
                                duals.sin(omega * t))
        return JetPoint(z.x, z.u - du, z.p)

    return ContactStep(label or "forcing", apply, sigma=_zero_sigma,
                       advances_time=True)


def vdp_substep_flows(eps: float, amp: float, omega: float,
                      restoring: str = "linear") -> Dict[str, ContactStep]:
    """The four exact substeps of the forced Lienard-type oscillator.

    ``restoring="linear"`` is the classical forced Van der Pol
    contactization  u*p - eps*(1-x^2)*u + x - amp*cos(omega t), whose base
    pair is  xdot = u, udot = eps*(1-x^2)*u - x + amp*cos(omega t)  and
    whose response is the textbook bounded (limit-cycle or chaotic)
    attractor at these parameters.  ``restoring="quadratic"`` swaps the
    linear term for -x^2/2 (and the forcing sign), which drives a slow
    secular escape of the base point instead of a limit cycle.
    """
    if restoring == "linear":
        B = kick_flow(lambda x: x[0], lambda x: [1.0], label="vdpB")
        F = forcing_flow(-amp, omega, label="vdpF")
    elif restoring == "quadratic":
        B = kick_flow(lambda x: -0.5 * x[0] * x[0],
                      lambda x: [-x[0]], label="vdpB")
        F = forcing_flow(amp, omega, label="vdpF")
    else:
        raise ValueError(f"unknown restoring term {restoring!r}")
    return {
        # long runs cross the momentum pole; continue projectively
        "C": u_drift_flow(1.0, label="vdpC", wrap=True),
        "A": linear_u_flow(lambda x: -eps * (1.0 - x * x),
                           lambda x: 2.0 * eps * x, label="vdpA"),
        "B": B,
        "F": F,
    }


# ---------------------------------------------------------------------------
# polynomial-backed callables and the label catalog
# ---------------------------------------------------------------------------


def poly_momentum_fn(poly: JetPoly):
    """(T, grad T) callables for a momentum-only polynomial."""
    if any(any(xe) or up for (xe, up, _) in poly.terms):
        raise ValueError("drift generator must depend on p only")
    zeros = np.zeros(poly.n)
    grads = [poly.diff_p(i) for i in range(poly.n)]
    return (lambda p: poly.evaluate(zeros, 0.0, p),
            lambda p: [g.evaluate(zeros, 0.0, p) for g in grads])


def poly_position_fn(poly: JetPoly):
    """(V, grad V) callables for a position-only polynomial."""
    if any(up or any(pe) for (_, up, pe) in poly.terms):
        raise ValueError("kick generator must depend on x only")
    zeros = np.zeros(poly.n)
    grads = [poly.diff_x(i) for i in range(poly.n)]
    return (lambda x: poly.evaluate(x, 0.0, zeros),
            lambda x: [g.evaluate(x, 0.0, zeros) for g in grads])


def step_from_label(spec: str) -> ContactStep:
    """Resolve a catalog label like ``drift:T=0.5*p^2`` or
    ``bernoulliB:sigma=1`` into its exact substep.

    Grammar: ``name`` or ``name:key=value,...``; polynomial values use the
    textual form of :func:`contactlab.algebra.parse_poly`.  A trailing
    ``->prolonged`` marker on a kick is accepted and ignored.
    """
    spec = spec.strip().replace("→", "->")
    if spec.endswith("->prolonged"):
        spec = spec[: -len("->prolonged")].strip()
    name, _, argstr = spec.partition(":")
    name = name.strip().lower()
    args: Dict[str, str] = {}
    if argstr:
        for piece in argstr.split(","):
            key, _, val = piece.partition("=")
            if not val:
                raise ValueError(f"malformed substep argument {piece!r}")
            args[key.strip()] = val.strip()

    if name == "drift":
        poly = parse_poly(args["T"])
        T, gT = poly_momentum_fn(poly)
        return drift_flow(T, gT, label=f"drift:{poly}")
    if name == "kick":
        poly = parse_poly(args["V"])
        gamma = poly.terms.get(((0,) * poly.n, 1, (0,) * poly.n))
        if gamma is not None:
            rest = poly - JetPoly.u(poly.n) * gamma
            V, gV = poly_position_fn(rest)
            return exp_kick_flow(float(gamma), V, gV,
                                 label=f"kick:{poly}")
        V, gV = poly_position_fn(poly)
        return kick_flow(V, gV, label=f"kick:{poly}")
    if name == "reeb":
        return reeb_scaling_flow(float(args["gamma"]))
    if name == "quadu":
        return quad_u_flow(float(args["c"]))
    if name in ("bernoullib", "bernoulli_b"):
        return bernoulli_B_flow(float(args["sigma"]))
    if name in ("bernoullit", "bernoulli_t"):
        return bernoulli_T_flow(float(args["sigma"]))
    if name == "harmonic":
        return harmonic_strict_flow()
    if name == "udrift":
        return u_drift_flow(float(args["c"]))
    if name == "linu":
        poly = parse_poly(args["a"])
        grads = poly.diff_x(0)
        return linear_u_flow(lambda xv: poly.evaluate([xv], 0.0, [0.0]),
                             lambda xv: grads.evaluate([xv], 0.0, [0.0]),
                             label=f"linu:{poly}")
    if name == "forcing":
        return forcing_flow(float(args["amp"]), float(args["omega"]))
    raise ValueError(f"unknown substep label {name!r}")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _zero_sigma(z, t, h) -> float:
    return 0.0


def _any_dual(z: JetPoint) -> bool:
    return z.x.dtype == object or isinstance(z.u, duals.Dual)


def _pack(scalar, z: JetPoint):
    """One-element state array matching the (float vs dual) mode of z."""
    out = np.empty(1, dtype=object if (_any_dual(z) or
                                       isinstance(scalar, duals.Dual))
                   else float)
    out[0] = scalar
    return out
