"""Base integrators, Jacobian transport, prolongation, and the oracle."""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from contactlab import (Hamiltonian, JetPoint, adaptive_base_step,
                        full_system_rk4, lifted_step, prolong_momentum,
                        reeb_scaling_flow, rk4_base_step,
                        verify_contactomorphism)
from contactlab.duals import value
from contactlab.errors import ProlongationSingularityError
from contactlab.lifting import (BaseVectorField, JacobianBlocks, base_rhs,
                                contact_rhs, lifted_contact_step,
                                reference_solve)
from contactlab.scenarios import (dho_exact_reference, state_error,
                                  vdp_base_field)


def jp(x, u, p):
    return JetPoint.of([x], u, [p])


REEB_BASE = BaseVectorField(g=lambda x, u, t: [0.0],
                            f=lambda x, u, t: 0.3 * u, label="reeb")
VDP_BASE = vdp_base_field(5.0, 0.0, 1.0)


def test_prolong_identity_blocks():
    blocks = JacobianBlocks.identity(1)
    assert prolong_momentum(blocks, np.array([2.3]))[0] == 2.3
    blocks2 = JacobianBlocks.identity(3)
    p = np.array([0.1, -0.5, 2.0])
    assert np.allclose(prolong_momentum(blocks2, p), p)


def test_prolong_gradient_step_blocks():
    # base map (x, u) -> (x, u - f(x)) reproduces p - grad f
    grad = np.array([0.7])
    blocks = JacobianBlocks(j_xx=np.eye(1), j_xu=np.zeros(1),
                            j_ux=-grad, j_uu=1.0)
    out = prolong_momentum(blocks, np.array([1.5]))
    assert out[0] == pytest.approx(1.5 - 0.7)


def test_prolong_swap_map():
    blocks = JacobianBlocks(j_xx=np.zeros((1, 1)), j_xu=np.ones(1),
                            j_ux=np.ones(1), j_uu=0.0)
    assert prolong_momentum(blocks, np.array([2.0]))[0] == pytest.approx(0.5)


def test_prolong_singularity():
    blocks = JacobianBlocks(j_xx=np.array([[1e-12]]), j_xu=np.zeros(1),
                            j_ux=np.ones(1), j_uu=1.0)
    with pytest.raises(ProlongationSingularityError):
        prolong_momentum(blocks, np.array([0.0]))


def test_rk4_linear_matches_taylor4():
    # xdot = u, udot = -x: one step equals the degree-4 Taylor propagator
    Y = BaseVectorField(g=lambda x, u, t: [u], f=lambda x, u, t: x[0],
                        label="rot")
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    h = 0.05
    taylor = sum(np.linalg.matrix_power(A * h, k) / math.factorial(k)
                 for k in range(5))
    v0 = np.array([0.3, -0.8])
    xb, ub, blocks = rk4_base_step(Y, v0[:1], v0[1], 0.0, h)
    got = np.array([value(xb[0]), value(ub)])
    assert np.allclose(got, taylor @ v0, atol=1e-15)
    exact = expm(A * h) @ v0
    assert np.max(np.abs(got - exact)) <= 2.0 * h ** 5
    assert np.allclose([[value(blocks.j_xx[0][0]), value(blocks.j_xu[0])],
                        [value(blocks.j_ux[0]), value(blocks.j_uu)]],
                       taylor, atol=1e-15)


def test_rk4_zero_field_identity():
    Y = BaseVectorField(g=lambda x, u, t: [0.0], f=lambda x, u, t: 0.0)
    xb, ub, blocks = rk4_base_step(Y, np.array([1.0]), 2.0, 0.0, 0.3)
    assert value(xb[0]) == 1.0 and value(ub) == 2.0
    assert value(blocks.j_xx[0][0]) == 1.0 and value(blocks.j_uu) == 1.0
    assert value(blocks.j_xu[0]) == 0.0 and value(blocks.j_ux[0]) == 0.0


def _fd_base_jacobian(step_vals, v0, h_fd=1e-6):
    out = np.zeros((2, 2))
    for j in range(2):
        vp, vm = v0.copy(), v0.copy()
        dj = h_fd * max(1.0, abs(v0[j]))
        vp[j] += dj
        vm[j] -= dj
        out[:, j] = (step_vals(vp) - step_vals(vm)) / (2 * dj)
    return out


@pytest.mark.parametrize("field", [REEB_BASE, VDP_BASE], ids=["reeb", "vdp"])
def test_rk4_jacobian_matches_finite_differences(field):
    rng = np.random.default_rng(21)
    for _ in range(50):
        v0 = rng.uniform(-1, 1, 2)

        def step_vals(v):
            xb, ub, _ = rk4_base_step(field, v[:1], v[1], 0.0, 0.05)
            return np.array([value(xb[0]), value(ub)])

        fd = _fd_base_jacobian(step_vals, v0)
        _, _, blocks = rk4_base_step(field, v0[:1], v0[1], 0.0, 0.05)
        got = np.array([[value(blocks.j_xx[0][0]), value(blocks.j_xu[0])],
                        [value(blocks.j_ux[0]), value(blocks.j_uu)]])
        assert np.allclose(got, fd, rtol=1e-5, atol=1e-7)


def test_adaptive_zero_field_accepts():
    Y = BaseVectorField(g=lambda x, u, t: [0.0], f=lambda x, u, t: 0.0)
    (xb, ub), blocks, h_next, accepted = adaptive_base_step(
        Y, np.array([1.0]), 2.0, 0.0, 0.5, 1e-10, 1e-12)
    assert accepted
    assert value(xb[0]) == 1.0 and value(ub) == 2.0
    assert value(blocks.j_uu) == 1.0


def test_adaptive_linear_decay_endpoint():
    Y = BaseVectorField(g=lambda x, u, t: [0.0], f=lambda x, u, t: u)
    z = jp(0.0, 1.0, 0.0)
    out = lifted_step(Y, "adaptive", z, 0.0, 1.0, rtol=1e-10, atol=1e-12)
    assert abs(out.u - math.exp(-1.0)) <= 1e-9


def test_adaptive_tolerance_scaling_on_vdp():
    z = jp(1.0, 0.5, 0.0)
    ref = lifted_step(VDP_BASE, "adaptive", z, 0.0, 1.0, rtol=1e-12,
                      atol=1e-14)
    loose = lifted_step(VDP_BASE, "adaptive", z, 0.0, 1.0, rtol=1e-4,
                        atol=1e-6)
    tight = lifted_step(VDP_BASE, "adaptive", z, 0.0, 1.0, rtol=1e-6,
                        atol=1e-8)
    err_loose = abs(loose.u - ref.u) + abs(loose.x[0] - ref.x[0])
    err_tight = abs(tight.u - ref.u) + abs(tight.x[0] - ref.x[0])
    assert err_loose >= 10.0 * err_tight


def test_adaptive_tolerance_validation():
    with pytest.raises(ValueError):
        adaptive_base_step(REEB_BASE, np.array([0.0]), 1.0, 0.0, 0.1,
                           -1e-8, 1e-10)


def test_lifted_rk4_matches_exact_prolonged_flow():
    exact = reeb_scaling_flow(0.3)
    z = jp(1.0, 0.7, -1.2)
    h = 0.01
    out = lifted_step(REEB_BASE, "rk4", z, 0.0, h)
    ref = exact.apply(z, 0.0, h)
    assert state_error(out, ref) <= 5.0 * h ** 5


def test_lifted_global_order_four_on_exact_flow():
    exact = reeb_scaling_flow(0.3)
    z0 = jp(1.0, 0.7, -1.2)
    errs, hs = [], [0.2, 0.1, 0.05, 0.025, 0.0125]
    for h in hs:
        z = z0
        n = int(round(1.0 / h))
        for k in range(n):
            z = lifted_step(REEB_BASE, "rk4", z, k * h, h)
        errs.append(state_error(z, exact.apply(z0, 0.0, 1.0)))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert abs(slope - 4.0) <= 0.3


def test_lifted_map_contactness():
    rng = np.random.default_rng(23)
    samples = [jp(*rng.uniform(-1, 1, 3)) for _ in range(30)]
    step = lifted_contact_step(VDP_BASE, method="rk4")
    check = verify_contactomorphism(step.at(0.0, 0.01), samples, tol=1e-9)
    assert check.passed, check.worst_residual


def test_lifted_zero_duration_is_identity():
    z = jp(0.3, -0.2, 0.9)
    assert lifted_step(VDP_BASE, "rk4", z, 0.0, 0.0) is z


def test_prolong_reproduces_exact_reeb_momentum():
    # exact base-flow Jacobian of the dissipative block: diag(1, e^{-gt})
    gamma, t = 0.3, 0.8
    blocks = JacobianBlocks(j_xx=np.eye(1), j_xu=np.zeros(1),
                            j_ux=np.zeros(1), j_uu=math.exp(-gamma * t))
    out = prolong_momentum(blocks, np.array([1.7]))
    assert out[0] == pytest.approx(1.7 * math.exp(-gamma * t), abs=1e-10)


def test_full_system_rk4_self_convergence():
    H = Hamiltonian(lambda z, t: 0.5 * z.p[0] ** 2 + 0.5 * z.x[0] ** 2
                    + 0.3 * z.u, "dho")
    z0 = jp(1.0, 0.0, 0.0)

    def endpoint(h):
        z = z0
        for k in range(int(round(2.0 / h))):
            z = full_system_rk4(H, z, k * h, h)
        return z

    hs = [0.2, 0.1, 0.05, 0.025]
    errs = [state_error(endpoint(h), endpoint(h / 2)) for h in hs]
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert abs(slope - 4.0) <= 0.2
    assert state_error(full_system_rk4(H, z0, 0.0, 0.0), z0) == 0.0


def test_reference_solve_dho_against_closed_form():
    gamma = 0.3
    z0 = jp(1.0, 0.0, 0.0)
    H = Hamiltonian(lambda z, t: 0.5 * z.p[0] ** 2 + 0.5 * z.x[0] ** 2
                    + gamma * z.u, "dho")
    sol = reference_solve(contact_rhs(H), [1.0, 0.0, 0.0], (0.0, 20.0), n=1)
    worst = max(state_error(sol.jet(t), dho_exact_reference(gamma, z0, t))
                for t in np.linspace(0.0, 20.0, 81))
    assert worst <= 1e-9


def test_reference_solve_zero_field():
    sol = reference_solve(lambda t, y: np.zeros_like(y), [1.0, 2.0, 3.0],
                          (0.0, 5.0))
    assert np.allclose(sol(5.0), [1.0, 2.0, 3.0])


def test_reference_solve_monotone_in_tolerance():
    rhs = base_rhs(VDP_BASE)
    tight = reference_solve(rhs, [1.0, 0.0], (0.0, 5.0),
                            rtol=1e-12, atol=1e-14)
    prev = None
    for rtol in (1e-6, 1e-8, 1e-10):
        sol = reference_solve(rhs, [1.0, 0.0], (0.0, 5.0),
                              rtol=rtol, atol=rtol * 1e-2)
        diff = float(np.max(np.abs(sol(5.0) - tight(5.0))))
        if prev is not None:
            assert diff <= prev * 1.0000001
        prev = diff


def test_adaptive_jacobian_matches_finite_differences():
    rng = np.random.default_rng(29)
    for _ in range(20):
        v0 = rng.uniform(-1, 1, 2)

        def step_vals(v):
            (xb, ub), _, _, _ = adaptive_base_step(
                VDP_BASE, v[:1], v[1], 0.0, 0.05, 1e-8, 1e-10)
            return np.array([value(xb[0]), value(ub)])

        fd = _fd_base_jacobian(step_vals, v0)
        (_, _), blocks, _, _ = adaptive_base_step(VDP_BASE, v0[:1], v0[1],
                                                  0.0, 0.05, 1e-8, 1e-10)
        got = np.array([[value(blocks.j_xx[0][0]), value(blocks.j_xu[0])],
                        [value(blocks.j_ux[0]), value(blocks.j_uu)]])
        assert np.allclose(got, fd, rtol=1e-5, atol=1e-7)


def test_singularity_event_recorded_as_blowup():
    from contactlab.composition import run_trajectory
    from contactlab.errors import BlowupError, ProlongationSingularityError
    assert issubclass(ProlongationSingularityError, BlowupError)
    # a base map whose prolongation denominator crosses zero quickly:
    # xdot = -u keeps j_xx + p j_xu heading through zero for p = 1
    Y = BaseVectorField(g=lambda x, u, t: [-u], f=lambda x, u, t: 0.0,
                        label="shear")
    step = lifted_contact_step(Y, method="rk4")
    rec = run_trajectory(step, jp(0.0, 1.0, 1.0), 0.0, 0.25, 2.0,
                         track_sigma=False)
    assert rec.blowup_time is not None
