"""Product formulas, gadgets, the universal builder, and the runner."""

import math

import numpy as np
import pytest

from contactlab import (JetPoint, bernoulli_B_flow,
                        build_universal_scheme, depth_one_decompose,
                        drift_flow, gadget_basic, gadget_symmetric,
                        gadget_yoshida, kick_flow, lie_trotter, parse_poly,
                        quad_u_flow, reeb_scaling_flow, run_trajectory,
                        strang, verify_contactomorphism, yoshida4)
from contactlab.composition import GADGET_G0, GADGET_G1, Scheme, YOSHIDA_W0, \
    YOSHIDA_W1
from contactlab.scenarios import state_error
from contactlab.subflows import ContactStep


def jp(x, u, p):
    return JetPoint.of([x], u, [p])


def half_p2():
    return drift_flow(lambda p: 0.5 * p[0] ** 2, lambda p: [p[0]],
                      label="drift:p^2/2")


def half_x2():
    return kick_flow(lambda x: 0.5 * x[0] ** 2, lambda x: [x[0]],
                     label="kick:x^2/2")


IDENT = ContactStep("id", lambda z, t, h: z, sigma=lambda z, t, h: 0.0)


def test_lie_trotter_basic():
    sch = lie_trotter([half_p2(), half_x2()])
    assert sch.declared_order == 1
    assert [c for _, c in sch.factors] == [1.0, 1.0]
    with pytest.warns(UserWarning):
        lie_trotter([half_p2()])


def test_lie_trotter_identity_part_is_noop():
    a, b = half_p2(), half_x2()
    with_id = lie_trotter([a, IDENT, b])
    without = lie_trotter([a, b])
    z = jp(0.4, -0.1, 0.8)
    assert state_error(with_id.apply(z, 0.0, 0.3),
                       without.apply(z, 0.0, 0.3)) == 0.0


def test_strang_structure_and_identity_case():
    a, b = half_p2(), half_x2()
    sch = strang([a, b])
    assert [(s.label, c) for s, c in sch.factors] == \
        [("drift:p^2/2", 0.5), ("kick:x^2/2", 1.0), ("drift:p^2/2", 0.5)]
    reduced = strang([IDENT, b])
    z = jp(1.0, 0.2, -0.3)
    assert state_error(reduced.apply(z, 0.0, 0.25),
                       b.apply(z, 0.0, 0.25)) == 0.0


def test_strang_multi_part_palindrome():
    parts = [half_p2(), half_x2(), reeb_scaling_flow(0.3)]
    sch = strang(parts)
    labels = [s.label for s, _ in sch.factors]
    assert labels == labels[::-1]
    assert sch.is_palindromic()
    coeffs = [c for _, c in sch.factors]
    assert coeffs == [0.5, 0.5, 1.0, 0.5, 0.5]


def test_yoshida4_coefficients():
    assert YOSHIDA_W1 == pytest.approx(1.351207191959658, abs=1e-12)
    assert YOSHIDA_W0 + 2 * YOSHIDA_W1 == pytest.approx(1.0, abs=0.0)
    base = strang([half_p2(), half_x2()])
    sch = yoshida4(base)
    assert sch.declared_order == 4
    assert len(sch.factors) == 9
    with pytest.raises(ValueError):
        yoshida4(lie_trotter([half_p2(), half_x2()]))


def test_yoshida4_identity_base():
    other = ContactStep("id2", lambda z, t, h: z, sigma=lambda z, t, h: 0.0)
    base = strang([IDENT, other])
    sch = yoshida4(base)
    z = jp(0.3, 0.4, 0.5)
    assert state_error(sch.apply(z, 0.0, 0.7), z) == 0.0


def test_consistency_check():
    a = half_p2()
    with pytest.raises(ValueError):
        Scheme([(a, 0.5), (a, 0.4)], declared_order=1, label="bad")


def test_gadget_identities_and_degenerate_cases():
    assert 2 * GADGET_G1 ** 2 + GADGET_G0 ** 2 == pytest.approx(1.0,
                                                                abs=1e-15)
    assert 2 * GADGET_G1 ** 3 + GADGET_G0 ** 3 == pytest.approx(0.0,
                                                                abs=1e-15)
    assert GADGET_G1 == pytest.approx(1.0 / math.sqrt(2 + 2 ** (2 / 3)))
    A = quad_u_flow(-0.5, label="A")
    B = drift_flow(lambda p: p[0] ** 2, lambda p: [2 * p[0]], label="B")
    z = jp(0.3, 0.7, 0.9)
    for gadget in (gadget_basic(A, B), gadget_symmetric(A, B, 2),
                   gadget_yoshida(A, B, 2)):
        assert state_error(gadget.apply(z, 0.0, 0.0), z) == 0.0
        with pytest.raises(ValueError):
            gadget.apply(z, 0.0, -0.1)


def bracket_pair():
    # [p^2, u^2/2] = u p^2, whose exact flow is the cubic Bernoulli step
    s = drift_flow(lambda p: p[0] ** 2, lambda p: [2 * p[0]], label="p^2")
    d = quad_u_flow(0.5, label="u^2/2")
    return s, d, bernoulli_B_flow(1.0)


def fitted_rate(gadget, reference, eps_list, z):
    errs = [state_error(gadget.apply(z, 0.0, e * e),
                        reference.apply(z, 0.0, e * e)) for e in eps_list]
    return np.polyfit(np.log(eps_list), np.log(errs), 1)[0]


def test_gadget_local_rates():
    s, d, ref = bracket_pair()
    z = jp(0.3, 0.7, 0.9)
    eps = 10.0 ** np.linspace(-1.0, -2.0, 7)
    assert abs(fitted_rate(gadget_basic(s, d), ref, eps, z) - 3.0) <= 0.3
    assert abs(fitted_rate(gadget_symmetric(s, d, 4), ref, eps, z)
               - 4.0) <= 0.1
    assert abs(fitted_rate(gadget_yoshida(s, d, 4), ref, eps, z)
               - 4.0) <= 0.1


def test_gadget_substep_doubling_improves():
    s, d, ref = bracket_pair()
    z = jp(0.3, 0.7, 0.9)
    tc = 0.05
    exact = ref.apply(z, 0.0, tc)
    prev = None
    for m in (1, 2, 4, 8):
        err = state_error(gadget_symmetric(s, d, m).apply(z, 0.0, tc), exact)
        if prev is not None:
            assert err <= prev
        prev = err


def test_universal_dho_reduces_to_plain_splitting():
    rep = depth_one_decompose(parse_poly("1/2*p^2 + 1/2*x^2 + 3/10*u"))
    sch = build_universal_scheme(rep, outer_order=2)
    assert rep.pairs == []
    assert sch.check_consistency
    labels = [s.label for s, _ in sch.factors]
    assert not any("gadget" in lbl for lbl in labels)
    # second order against the closed-form reference
    from contactlab.scenarios import dho_exact_reference
    z0 = jp(1.0, 0.0, 0.0)
    errs, hs = [], [0.1, 0.05, 0.025, 0.0125]
    for h in hs:
        rec = run_trajectory(sch, z0, 0.0, h, 2.0, track_sigma=False)
        errs.append(state_error(rec.endpoint(),
                                dho_exact_reference(0.3, z0,
                                                    rec.times[-1])))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert abs(slope - 2.0) <= 0.2


def test_universal_up2_approaches_exact_bernoulli():
    rep = depth_one_decompose(parse_poly("u*p^2"))
    sch = build_universal_scheme(rep, outer_order=2, gadget="symmetric", m=4)
    z0 = jp(0.2, 0.6, 0.8)
    exact = bernoulli_B_flow(1.0)
    T = 0.5
    ref = exact.apply(z0, 0.0, T)
    errs = []
    for h in (0.05, 0.025, 0.0125, 0.00625):
        rec = run_trajectory(sch, z0, 0.0, h, T, track_sigma=False)
        errs.append(state_error(rec.endpoint(), ref))
    assert errs[-1] < errs[0]
    assert errs[-1] <= 5e-3


def test_universal_missing_realization_error():
    from contactlab.algebra import DepthOneRepresentation, JetPoly
    bad = DepthOneRepresentation(
        s0=parse_poly("x*p^2"),  # strict but not drift/kick realizable
        d0=JetPoly.zero(1), pairs=[])
    with pytest.raises(ValueError, match="x1\\*p1\\^2"):
        build_universal_scheme(bad)


def test_exact_scheme_contactness_and_self_adjointness():
    rng = np.random.default_rng(31)
    sch = strang([half_p2(), half_x2(), reeb_scaling_flow(0.3)])
    samples = [jp(*rng.uniform(-1, 1, 3)) for _ in range(100)]
    assert verify_contactomorphism(sch.at(0.0, 0.1), samples, 1e-10).passed
    for z in samples[:20]:
        there = sch.apply(z, 0.0, 0.2)
        back = sch.apply(there, 0.2, -0.2)
        assert state_error(back, z) <= 1e-10


def test_strict_scheme_sigma_is_zero():
    sch = strang([half_p2(), half_x2()])
    rec = run_trajectory(sch, jp(1.0, 0.0, 0.5), 0.0, 0.05, 3.0)
    assert np.max(np.abs(rec.sigma_cum)) == 0.0


def test_run_trajectory_sigma_tracks_exact_conformal_factor():
    gamma, h, T = 0.3, 0.1, 50.0
    from contactlab.scenarios import make_dho_scheme
    sch = make_dho_scheme(1, "strang", gamma)
    rec = run_trajectory(sch, jp(1.0, 0.0, 0.0), 0.0, h, T)
    dev = np.max(np.abs(rec.sigma_cum - (-gamma * rec.times)))
    assert dev <= 10.0 * h ** 2 * T


def test_run_trajectory_short_horizon_single_sample():
    rec = run_trajectory(lie_trotter([half_p2(), half_x2()]),
                         jp(1.0, 0.0, 0.0), 0.0, 0.5, 0.3)
    assert len(rec.times) == 1


def test_run_trajectory_records_blowup():
    sch = lie_trotter([quad_u_flow(-0.5), IDENT])
    rec = run_trajectory(sch, jp(0.0, 1.0, 0.0), 0.0, 0.5, 5.0)
    assert rec.blowup_time is not None
    assert rec.blowup_time < 2.5
    assert len(rec.states) >= 2


def test_run_trajectory_H_decay():
    from contactlab.scenarios import dho_hamiltonian, make_dho_scheme
    H = dho_hamiltonian(0.3)
    rec = run_trajectory(make_dho_scheme(1, "strang", 0.3), jp(1.0, 0.0, 0.0),
                         0.0, 0.1, 10.0, H_diag=H)
    expect = 0.5 * np.exp(-0.3 * rec.times)
    assert np.max(np.abs(rec.H_values / expect - 1.0)) <= 0.01
