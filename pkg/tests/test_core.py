"""Contact vector field, conformal rates, and pullback verification."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from contactlab import (Hamiltonian, JetPoint, contact_vector_field,
                        conformal_rate, drift_flow, gradient_step, kick_flow,
                        pullback_conformal_factor, reeb_scaling_flow, strang,
                        verify_contactomorphism)
from contactlab.errors import EvaluationError, OrientationError
from contactlab.lifting import contact_rhs, full_system_rk4, reference_solve


def jp(x, u, p):
    return JetPoint.of([x], u, [p])


GAMMA_U = Hamiltonian(lambda z, t: 0.3 * z.u, "0.3u")
KINETIC = Hamiltonian(lambda z, t: 0.5 * z.p[0] ** 2, "p^2/2")
DHO = Hamiltonian(lambda z, t: 0.5 * z.p[0] ** 2 + 0.5 * z.x[0] ** 2
                  + 0.3 * z.u, "dho")


def test_vector_field_reeb_scaling():
    z = jp(1.0, 2.0, 3.0)
    xd, ud, pd = contact_vector_field(GAMMA_U, z)
    assert xd[0] == 0.0
    assert ud == pytest.approx(-0.3 * 2.0)
    assert pd[0] == pytest.approx(-0.3 * 3.0)


def test_vector_field_free_particle():
    xd, ud, pd = contact_vector_field(KINETIC, jp(1.0, 0.0, 2.0))
    assert (xd[0], ud, pd[0]) == (2.0, 2.0, 0.0)


def test_vector_field_zero_hamiltonian():
    H0 = Hamiltonian(lambda z, t: 0.0 * z.u, "0")
    xd, ud, pd = contact_vector_field(H0, jp(0.3, -1.0, 0.9))
    assert xd[0] == 0.0 and ud == 0.0 and pd[0] == 0.0


def test_udot_identity_random():
    # udot = p . xdot - H exactly, for arbitrary H
    rng = np.random.default_rng(0)
    H = Hamiltonian(lambda z, t: z.x[0] * z.p[0] ** 2
                    + 0.5 * z.u ** 2 * z.p[0] - z.x[0] ** 3, "mixed")
    for _ in range(25):
        z = jp(*rng.uniform(-1, 1, 3))
        xd, ud, pd = contact_vector_field(H, z)
        assert ud == pytest.approx(z.p[0] * xd[0] - H(z, 0.0), abs=1e-12)


def test_conformal_rate_examples():
    assert conformal_rate(GAMMA_U, jp(0.5, 1.0, -2.0)) == pytest.approx(-0.3)
    H_strict = Hamiltonian(lambda z, t: 0.5 * z.p[0] ** 2
                           + 0.5 * z.x[0] ** 2, "ho")
    assert conformal_rate(H_strict, jp(1.0, 5.0, 2.0)) == 0.0
    H_b = Hamiltonian(lambda z, t: z.p[0] ** 2 * z.u, "p^2 u")
    assert conformal_rate(H_b, jp(0.0, 0.0, 2.0)) == pytest.approx(-4.0)


def test_partials_nonfinite_raises():
    bad = Hamiltonian(lambda z, t: 1.0 / z.x[0], "1/x")
    with pytest.raises(EvaluationError):
        bad.partials(jp(0.0, 0.0, 1.0))


def test_pullback_identity():
    rep = pullback_conformal_factor(lambda z: z, jp(0.4, -0.2, 1.3))
    assert rep.sigma == 0.0
    assert rep.residual == 0.0


def test_pullback_gradient_step_is_strict():
    f = lambda x: 0.5 * x[0] ** 2
    gf = lambda x: [x[0]]
    rng = np.random.default_rng(1)
    for _ in range(10):
        z = jp(*rng.uniform(-2, 2, 3))
        rep = pullback_conformal_factor(
            lambda zz: gradient_step(f, zz, grad_f=gf), z)
        assert abs(rep.sigma) <= 1e-12
        assert rep.residual <= 1e-12


def test_pullback_reeb_scaling():
    step = reeb_scaling_flow(0.3)
    for t in (0.5, 1.0, 2.0):
        rep = pullback_conformal_factor(step.at(0.0, t), jp(1.0, 1.0, 1.0))
        assert rep.sigma == pytest.approx(-0.3 * t, abs=1e-12)
        assert rep.residual <= 1e-12


def test_pullback_orientation_error():
    flip = lambda z: JetPoint(z.x, -z.u, z.p)
    with pytest.raises(OrientationError):
        pullback_conformal_factor(flip, jp(0.0, 1.0, 0.0))


def test_verify_strang_composition():
    drift = drift_flow(lambda p: 0.5 * p[0] ** 2, lambda p: [p[0]])
    kick = kick_flow(lambda x: 0.5 * x[0] ** 2, lambda x: [x[0]])
    sch = strang([drift, kick, reeb_scaling_flow(0.3)])
    rng = np.random.default_rng(7)
    samples = [jp(*rng.uniform(-1, 1, 3)) for _ in range(100)]
    check = verify_contactomorphism(sch.at(0.0, 0.1), samples, tol=1e-10)
    assert check.passed, check.worst_residual


def test_verify_full_system_rk4_fails():
    check = verify_contactomorphism(
        lambda z: full_system_rk4(DHO, z, 0.0, 0.1),
        [jp(1.0, 0.0, 0.5), jp(0.2, 0.4, -0.7)], tol=1e-10)
    assert not check.passed
    assert check.worst_residual > 1e-10


def test_verify_empty_samples_vacuous():
    check = verify_contactomorphism(lambda z: z, [], tol=1e-10)
    assert check.passed
    assert check.warning is not None


def test_integrated_rate_matches_pullback_sigma():
    # integral of -dH/du along the flow == sigma of the flow map (1e-6)
    t_end = 0.8
    H = Hamiltonian(lambda z, t: 0.5 * z.p[0] ** 2 + 0.5 * z.x[0] ** 2
                    + 0.25 * z.u ** 2, "quad-u dho")
    z0 = jp(0.8, 0.3, -0.4)
    sol = reference_solve(contact_rhs(H), [0.8, 0.3, -0.4], (0.0, t_end),
                          n=1)
    lam = quad(lambda s: conformal_rate(H, sol.jet(s)), 0.0, t_end,
               epsabs=1e-12, epsrel=1e-12)[0]

    # a dual-transportable stand-in for the exact flow map
    def fine_map(z):
        steps = 400
        hh = t_end / steps
        for k in range(steps):
            z = full_system_rk4(H, z, k * hh, hh)
        return z

    rep = pullback_conformal_factor(fine_map, z0)
    assert rep.sigma == pytest.approx(lam, abs=1e-6)


def test_composition_residual_bound():
    # residual of a J-factor composition stays below J * eps * (1 + scale)
    eps = 1e-12
    drift = drift_flow(lambda p: 0.5 * p[0] ** 2, lambda p: [p[0]])
    kick = kick_flow(lambda x: 0.25 * x[0] ** 4, lambda x: [x[0] ** 3])
    reeb = reeb_scaling_flow(0.5)
    parts = [drift, kick, reeb, drift, kick, reeb]
    rng = np.random.default_rng(5)
    for _ in range(20):
        z = jp(*rng.uniform(-1, 1, 3))

        def comp(zz):
            for s in parts:
                zz = s.apply(zz, 0.0, 0.05)
            return zz

        rep = pullback_conformal_factor(comp, z)
        bound = len(parts) * eps * (1.0 + math.exp(abs(rep.sigma)))
        assert rep.residual <= bound


def test_jetpoint_validation():
    with pytest.raises(EvaluationError):
        JetPoint.of([math.nan], 0.0, [0.0])
    with pytest.raises(ValueError):
        JetPoint.of([1.0, 2.0], 0.0, [0.0])


def test_partials_match_finite_differences():
    # dual partial derivatives against central differences, rel tol 1e-6
    def smooth(z, t):
        from contactlab import duals
        return z.x[0] * z.p[0] ** 2 + duals.exp(0.3 * z.u) * z.p[0] \
            - 0.5 * z.x[0] ** 3

    H = Hamiltonian(smooth, "mixed")
    rng = np.random.default_rng(17)
    for _ in range(20):
        z = jp(*rng.uniform(-1, 1, 3))
        dx, du, dp = H.partials(z)
        flat = np.concatenate([z.x, [z.u], z.p])
        got = np.array([dx[0], du, dp[0]])
        for i in range(3):
            step = 1e-6 * max(1.0, abs(flat[i]))
            zp, zm = flat.copy(), flat.copy()
            zp[i] += step
            zm[i] -= step
            fd = (H(JetPoint.of([zp[0]], zp[1], [zp[2]]), 0.0)
                  - H(JetPoint.of([zm[0]], zm[1], [zm[2]]), 0.0)) / (2 * step)
            assert got[i] == pytest.approx(fd, rel=1e-6, abs=1e-9)
