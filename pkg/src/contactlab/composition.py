"""Scheme combinators: product formulas, commutator gadgets, and runners.

A :class:`Scheme` is an ordered list of (substep, coefficient) factors; one
application advances a jet point by h, applying each factor for its
coefficient times h.  Product formulas (sequential, palindromic, triple
jump) compose exact substeps; commutator gadgets approximate the flow of a
contact-Jacobi bracket from the flows of its two generators; the universal
builder turns a depth-one representation into a runnable scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .algebra import DepthOneRepresentation, JetPoly
from .core import Hamiltonian, JetPoint
from .errors import BlowupError
from .lifting import BaseVectorField, lifted_contact_step
from .subflows import (ContactStep, drift_flow, exp_kick_flow, kick_flow,
                       linear_u_flow, poly_momentum_fn, poly_position_fn,
                       quad_u_flow, reeb_scaling_flow, u_drift_flow)

YOSHIDA_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
YOSHIDA_W0 = 1.0 - 2.0 * YOSHIDA_W1


@dataclass
class Scheme:
    """An ordered composition of weighted substeps.

    For splitting schemes the coefficients of each distinct substep sum to
    one (consistency); gadget-bearing schemes are exempt because the gadget
    carries its own calibration.
    """

    factors: List[Tuple[ContactStep, float]]
    declared_order: int
    label: str
    check_consistency: bool = True

    def __post_init__(self):
        if self.check_consistency:
            sums: dict[int, float] = {}
            names: dict[int, str] = {}
            for step, coeff in self.factors:
                sums[id(step)] = sums.get(id(step), 0.0) + coeff
                names[id(step)] = step.label
            bad = {names[k]: v for k, v in sums.items()
                   if abs(v - 1.0) > 1e-12}
            if bad:
                raise ValueError(f"factor coefficients do not sum to 1: {bad}")

    def apply(self, z: JetPoint, t: float, h: float) -> JetPoint:
        clock = t
        for step, coeff in self.factors:
            z = step.apply(z, clock, coeff * h)
            if step.advances_time:
                clock += coeff * h
        return z

    def apply_with_sigma(self, z: JetPoint, t: float, h: float):
        """Apply one step, returning the state and the summed log-conformal
        increment (analytic per factor where available, pullback otherwise)."""
        clock = t
        sigma = 0.0
        for step, coeff in self.factors:
            sigma += step.sigma_increment(z, clock, coeff * h)
            z = step.apply(z, clock, coeff * h)
            if step.advances_time:
                clock += coeff * h
        return z, sigma

    def at(self, t: float, h: float) -> Callable[[JetPoint], JetPoint]:
        return lambda z: self.apply(z, t, h)

    def as_step(self) -> ContactStep:
        return ContactStep(self.label, self.apply,
                           sigma=lambda z, t, h:
                           self.apply_with_sigma(z, t, h)[1],
                           advances_time=True)

    def is_palindromic(self) -> bool:
        seq = [(id(s), c) for s, c in self.factors]
        return seq == seq[::-1]


def lie_trotter(parts: Sequence[ContactStep], label: str | None = None) -> Scheme:
    """Sequential first-order composition; every part at full weight."""
    parts = list(parts)
    if len(parts) < 1:
        raise ValueError("need at least one part")
    if len(parts) == 1:
        import warnings
        warnings.warn("single-part composition degenerates to the part itself")
    return Scheme([(p, 1.0) for p in parts], declared_order=1,
                  label=label or "lie-trotter(%s)" % ",".join(
                      p.label for p in parts))


def strang(parts: Sequence[ContactStep], label: str | None = None) -> Scheme:
    """Palindromic second-order composition, first-listed part outermost.

    Two parts give A(h/2) B(h) A(h/2); more parts nest recursively, e.g.
    C, B, A compose as C(h/2) B(h/2) A(h) B(h/2) C(h/2).
    """
    parts = list(parts)
    if len(parts) < 1:
        raise ValueError("need at least one part")
    factors: List[Tuple[ContactStep, float]] = []
    for p in parts[:-1]:
        factors.append((p, 0.5))
    factors.append((parts[-1], 1.0))
    for p in reversed(parts[:-1]):
        factors.append((p, 0.5))
    return Scheme(factors, declared_order=2,
                  label=label or "strang(%s)" % ",".join(
                      p.label for p in parts))


def yoshida4(base2: Scheme, label: str | None = None) -> Scheme:
    """Triple jump over a palindromic second-order scheme.

    Runs the base at w1 h, w0 h, w1 h with w1 = 1/(2 - 2^(1/3)) and
    w0 = 1 - 2 w1; the negative middle leg requires substeps that accept
    signed durations.
    """
    if base2.declared_order != 2 or not base2.is_palindromic():
        raise ValueError("triple jump needs a palindromic order-2 base")
    factors: List[Tuple[ContactStep, float]] = []
    for w in (YOSHIDA_W1, YOSHIDA_W0, YOSHIDA_W1):
        factors.extend((s, c * w) for s, c in base2.factors)
    return Scheme(factors, declared_order=4,
                  label=label or f"yoshida4({base2.label})")


# ---------------------------------------------------------------------------
# commutator gadgets
# ---------------------------------------------------------------------------


def _gadget(seq_fn: Callable[[float], list], label: str,
            substeps_per_call: int) -> ContactStep:
    def apply(z, t, h):
        if h < 0:
            raise ValueError("gadget durations must be non-negative")
        if h == 0.0:
            return z
        for step, dt in seq_fn(h):
            z = step.apply(z, t, dt)
        return z

    def sigma(z, t, h):
        if h == 0.0:
            return 0.0
        total = 0.0
        for step, dt in seq_fn(h):
            total += step.sigma_increment(z, t, dt)
            z = step.apply(z, t, dt)
        return total

    step = ContactStep(label, apply, sigma=sigma)
    object.__setattr__(step, "substeps_per_call", substeps_per_call)
    return step


def _commutator_cycle(A: ContactStep, B: ContactStep, eps: float) -> list:
    # A first at +eps realizes +[A_ham, B_ham] (group commutator of flows)
    return [(A, eps), (B, eps), (A, -eps), (B, -eps)]


def gadget_basic(A: ContactStep, B: ContactStep,
                 label: str | None = None) -> ContactStep:
    """Four-factor group commutator approximating the bracket flow.

    Applied for duration t_c it runs each generator for +/- sqrt(t_c) and
    matches the flow of [A, B] to local order t_c^(3/2).
    """
    return _gadget(lambda h: _commutator_cycle(A, B, math.sqrt(h)),
                   label or f"gadget[{A.label},{B.label}]", 4)


def gadget_symmetric(A: ContactStep, B: ContactStep, m: int = 4,
                     label: str | None = None) -> ContactStep:
    """Symmetrized gadget (G(-s) after G(s), m times): odd error terms
    cancel, local commutator error t_c^2; 8m substeps per call."""
    if m < 1:
        raise ValueError("substep count must be >= 1")

    def seq(h):
        s = math.sqrt(h / (2.0 * m))
        out = []
        for _ in range(m):
            out += _commutator_cycle(A, B, s)
            out += _commutator_cycle(A, B, -s)
        return out

    return _gadget(seq, label or f"gadget-sym[{A.label},{B.label};m={m}]",
                   8 * m)


GADGET_G1 = 1.0 / math.sqrt(2.0 + 2.0 ** (2.0 / 3.0))
GADGET_G0 = -(2.0 ** (1.0 / 3.0)) * GADGET_G1


def gadget_yoshida(A: ContactStep, B: ContactStep, m: int = 4,
                   label: str | None = None) -> ContactStep:
    """Triple-jump gadget cancelling the cubic error term; 12m substeps.

    Coefficients g1 = 1/sqrt(2 + 2^(2/3)), g0 = -2^(1/3) g1 satisfy
    2 g1^2 + g0^2 = 1 (duration) and 2 g1^3 + g0^3 = 0 (cancellation);
    both are checked at construction.
    """
    if m < 1:
        raise ValueError("substep count must be >= 1")
    if abs(2 * GADGET_G1 ** 2 + GADGET_G0 ** 2 - 1.0) > 1e-14 or \
            abs(2 * GADGET_G1 ** 3 + GADGET_G0 ** 3) > 1e-14:
        raise AssertionError("triple-jump coefficient identities violated")

    def seq(h):
        eps = math.sqrt(h / m)
        out = []
        for _ in range(m):
            out += _commutator_cycle(A, B, GADGET_G1 * eps)
            out += _commutator_cycle(A, B, GADGET_G0 * eps)
            out += _commutator_cycle(A, B, GADGET_G1 * eps)
        return out

    return _gadget(seq, label or f"gadget-yosh[{A.label},{B.label};m={m}]",
                   12 * m)


GADGET_FACTORIES = {
    "basic": lambda A, B, m: gadget_basic(A, B),
    "symmetric": gadget_symmetric,
    "yoshida": gadget_yoshida,
}


# ---------------------------------------------------------------------------
# universal scheme from a depth-one representation
# ---------------------------------------------------------------------------


def realize_strict(s0: JetPoly) -> List[ContactStep]:
    """Exact substeps for strict content: a momentum drift for the
    constant-coefficient p-part and a kick for the pure-x part."""
    out = []
    n = s0.n
    zeros = (0,) * n
    drift_terms = {k: c for k, c in s0.terms.items() if sum(k[2]) >= 1}
    kick_terms = {k: c for k, c in s0.terms.items() if sum(k[2]) == 0}
    if drift_terms:
        poly = JetPoly(n, drift_terms)
        for (xe, up, _pe) in drift_terms:
            if any(xe) or up:
                raise ValueError(
                    f"strict generator {poly} has non-constant momentum "
                    "coefficients; no elementary flow")
        T, gT = poly_momentum_fn(poly)
        out.append(drift_flow(T, gT, label=f"drift:{poly}"))
    if kick_terms:
        poly = JetPoly(n, kick_terms)
        V, gV = poly_position_fn(poly)
        out.append(kick_flow(V, gV, label=f"kick:{poly}"))
    return out


def realize_affine(d: JetPoly, realization: str = "exact-if-available",
                   method: str = "rk4") -> ContactStep:
    """Exact substep for an affine generator when its flow has a closed
    form in the catalog, else a lifted base integrator."""
    if not d.is_affine:
        raise ValueError(f"generator {d} is not affine in p")
    n = d.n
    zeros = (0,) * n
    if realization == "exact-if-available":
        coeffs = d.p_coefficients()
        f_part = coeffs.get(zeros, JetPoly.zero(n))
        p_parts = {pe: c for pe, c in coeffs.items() if any(pe)}
        if not p_parts:
            # H = f(x, u): try the closed forms
            u_free = {k: c for k, c in f_part.terms.items() if k[1] == 0}
            u_lin = {k: c for k, c in f_part.terms.items() if k[1] == 1}
            u_quad = {k: c for k, c in f_part.terms.items() if k[1] == 2}
            if len(u_free) + len(u_lin) + len(u_quad) == len(f_part.terms):
                pure_quad = {k: c for k, c in u_quad.items() if not any(k[0])}
                if u_quad and not u_lin and not u_free \
                        and pure_quad == u_quad and len(u_quad) == 1:
                    return quad_u_flow(float(next(iter(u_quad.values()))),
                                       label=f"quadu:{d}")
                if not u_quad and n == 1:
                    gamma_term = {k: c for k, c in u_lin.items()
                                  if not any(k[0])}
                    if u_lin and gamma_term == u_lin:
                        gamma = float(next(iter(u_lin.values())))
                        if not u_free:
                            return reeb_scaling_flow(gamma,
                                                     label=f"reeb:{d}")
                        vpoly = JetPoly(n, u_free)
                        V, gV = poly_position_fn(vpoly)
                        return exp_kick_flow(gamma, V, gV,
                                             label=f"expkick:{d}")
                    if u_lin and not u_free:
                        apoly = JetPoly(
                            n, {(k[0], 0, k[2]): c for k, c in u_lin.items()})
                        dapoly = apoly.diff_x(0)
                        return linear_u_flow(
                            lambda xv: apoly.evaluate([xv], 0.0, [0.0]),
                            lambda xv: dapoly.evaluate([xv], 0.0, [0.0]),
                            label=f"linu:{d}")
                    if u_free and not u_lin:
                        vpoly = JetPoly(n, u_free)
                        V, gV = poly_position_fn(vpoly)
                        return kick_flow(V, gV, label=f"kick:{d}")
        elif f_part.is_zero() and n == 1:
            coeff = p_parts.get((1,))
            if coeff is not None and len(p_parts) == 1:
                key = ((0,), 1, (0,))
                if set(coeff.terms) == {key}:
                    return u_drift_flow(float(coeff.terms[key]),
                                        label=f"udrift:{d}")
                if coeff.is_strict and not any(
                        any(k[0]) for k in coeff.terms):
                    T, gT = poly_momentum_fn(coeff * JetPoly.p(0, n))
                    return drift_flow(T, gT, label=f"drift:{d}")
    return lifted_contact_step(BaseVectorField.from_affine_poly(d),
                               method=method, label=f"lifted:{d}")


def build_universal_scheme(rep: DepthOneRepresentation, outer_order: int = 2,
                           gadget: str = "symmetric",
                           prolonged_realization: str = "exact-if-available",
                           m: int = 4, label: str | None = None) -> Scheme:
    """Runnable scheme for s0 + d0 + sum [s_i, d_i].

    Strict content becomes drift/kick substeps, affine content becomes an
    exact catalog flow (or a lifted integrator), and every bracket pair
    becomes one commutator gadget.  The outer composition is sequential
    (order 1) or palindromic (order 2); overall accuracy is gadget-limited
    when pairs are present.
    """
    if outer_order not in (1, 2):
        raise ValueError("outer composition order must be 1 or 2")
    if gadget not in GADGET_FACTORIES:
        raise ValueError(f"unknown gadget kind {gadget!r}")
    rep.validate()
    parts: List[ContactStep] = []
    parts.extend(realize_strict(rep.s0))
    if not rep.d0.is_zero():
        parts.append(realize_affine(rep.d0, prolonged_realization))
    has_gadgets = bool(rep.pairs)
    for s, d in rep.pairs:
        s_steps = realize_strict(s)
        if len(s_steps) != 1:
            raise ValueError(f"pair generator {s} is not a single strict flow")
        d_step = realize_affine(d, prolonged_realization)
        parts.append(GADGET_FACTORIES[gadget](s_steps[0], d_step, m))
    if not parts:
        raise ValueError("empty representation")
    scheme = lie_trotter(parts) if outer_order == 1 else strang(parts)
    scheme.check_consistency = not has_gadgets
    scheme.label = label or f"universal-{outer_order}-{gadget}"
    return scheme


# ---------------------------------------------------------------------------
# trajectory runner
# ---------------------------------------------------------------------------


@dataclass
class RunRecord:
    """A sampled trajectory with conformal and energy diagnostics.

    ``sigma_cum[k]`` is the prefix sum of per-step log-conformal increments
    through step k; ``blowup_time`` is set when a substep left its domain
    and the record was truncated there.
    """

    times: np.ndarray
    states: List[JetPoint]
    H_values: Optional[np.ndarray]
    sigma_cum: np.ndarray
    blowup_time: Optional[float] = None
    label: str = ""
    contact_residual: Optional[float] = None  # worst spot-checked residual

    @property
    def x(self) -> np.ndarray:
        return np.array([s.x for s in self.states])

    @property
    def u(self) -> np.ndarray:
        return np.array([s.u for s in self.states])

    @property
    def p(self) -> np.ndarray:
        return np.array([s.p for s in self.states])

    def endpoint(self) -> JetPoint:
        return self.states[-1]


def run_trajectory(scheme, z0: JetPoint, t0: float, h: float, T: float,
                   H_diag: Optional[Hamiltonian] = None,
                   track_sigma: bool = True) -> RunRecord:
    """Iterate a scheme (or single substep) over ceil(T/h) steps.

    Records every state, the diagnostic Hamiltonian value when supplied,
    and the cumulative log-conformal factor.  A blow-up inside a substep
    truncates the record and stamps ``blowup_time`` instead of raising.
    """
    if h <= 0 or T <= 0:
        raise ValueError("h and T must be positive")
    if isinstance(scheme, ContactStep):
        scheme = Scheme([(scheme, 1.0)], declared_order=0,
                        label=scheme.label, check_consistency=False)
    # T < h leaves no room for a full step: initial sample only
    n_steps = 0 if T < h else math.ceil(T / h - 1e-9)
    times = [t0]
    states = [z0]
    sigmas = [0.0]
    H_vals = [H_diag(z0, t0)] if H_diag is not None else None
    z = z0
    blowup = None
    for k in range(n_steps):
        t = t0 + k * h
        try:
            if track_sigma:
                z, ds = scheme.apply_with_sigma(z, t, h)
            else:
                z = scheme.apply(z, t, h)
                ds = 0.0
        except BlowupError:
            blowup = t
            break
        times.append(t + h)
        states.append(z)
        sigmas.append(sigmas[-1] + ds)
        if H_vals is not None:
            H_vals.append(H_diag(z, t + h))
    return RunRecord(times=np.asarray(times), states=states,
                     H_values=None if H_vals is None else np.asarray(H_vals),
                     sigma_cum=np.asarray(sigmas), blowup_time=blowup,
                     label=getattr(scheme, "label", ""))
