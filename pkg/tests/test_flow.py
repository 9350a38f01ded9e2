import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jumpflow.errors import GridMismatch, NonFiniteState
from jumpflow.flow import (CoefficientSet, PerturbedCoefficientSet, flow_property_check, restart_flow,
                           simulate_flow, simulate_Y, stochastic_continuity_probe)
from jumpflow.levy import CompoundPoisson, TruncatedStable
from jumpflow.mc import MCEstimate, RandomStream, substream
from jumpflow.prm import JumpPath, generate_batch, generate_path

TS1 = TruncatedStable(1.0, 1.0)


def lin(a):
    return (lambda x: a * x, lambda x: a + 0 * x, lambda x: 0 * x)


def const(c):
    return (lambda x: c + 0 * x, lambda x: 0 * x, lambda x: 0 * x)


def smooth():
    return CoefficientSet.levy_driven(lambda x: np.sin(x), np.cos, lambda x: -np.sin(x),
                                      lambda x: 0.5 * np.cos(x), lambda x: -0.5 * np.sin(x),
                                      lambda x: -0.5 * np.cos(x))


def test_zero_coefficients_identity():
    p = generate_path(TS1, 0, 1, 0.05, RandomStream(0))
    r = simulate_flow(CoefficientSet.zero(), p, 0, 1, [-1.0, 0.3, 2.0], 7)
    assert np.array_equal(r.x_terminal, [-1.0, 0.3, 2.0])
    assert np.all(r.dx_terminal == 1.0) and np.all(r.d2x_terminal == 0.0)


def test_linear_drift_exponential_oracle():
    p = JumpPath(0, 1, 0.1, [], [], TS1)
    coeffs = CoefficientSet.levy_driven(*lin(1.0), *const(0.0))
    r = simulate_flow(coeffs, p, 0, 1, [1.0, 2.0], 10_000)
    assert np.max(np.abs(r.x_terminal / (np.array([1.0, 2.0]) * math.e) - 1)) < 5e-4
    assert r.dx_terminal[0] == pytest.approx(math.e, rel=5e-4)
    rk = simulate_flow(coeffs, p, 0, 1, [1.0], 100, scheme="rk4")
    assert rk.x_terminal[0] == pytest.approx(math.e, rel=1e-8)


def test_additive_noise_exact_direct_sum():
    cp = CompoundPoisson(4.0, sizes=[0.5, 1.5], probs=[0.5, 0.5])  # asymmetric: compensator drift 4
    p = generate_path(cp, 0, 2, 0.1, RandomStream(8))
    assert p.n_jumps > 0
    coeffs = CoefficientSet.levy_driven(*const(0.0), *const(1.0))
    r = simulate_flow(coeffs, p, 0.0, 2.0, [0.7], 13)
    oracle = 0.7 + p.sizes.sum() - 2.0 * cp.signed_tail_moment(1, 0.1)
    assert r.x_terminal[0] == pytest.approx(oracle, abs=1e-12)


def test_generic_sigma_compensator_by_quadrature():
    cp = CompoundPoisson(4.0, sizes=[0.5, 1.5], probs=[0.5, 0.5])
    p = generate_path(cp, 0, 1, 0.1, RandomStream(9))
    z2 = lambda r, x, z: z + 0 * x
    zero = lambda r, x, z: 0 * (x * z)
    c = CoefficientSet(lambda r, x: 0 * x, lambda r, x: 0 * x, lambda r, x: 0 * x, z2, zero, zero)
    r = simulate_flow(c, p, 0, 1, [0.0], 5)
    assert r.x_terminal[0] == pytest.approx(p.sizes.sum() - 4.0, abs=1e-12)


def test_jump_uses_left_limit():
    p = JumpPath(0, 1, 0.1, [0.5], [0.8], TS1)
    coeffs = CoefficientSet.levy_driven(*const(0.0), *lin(1.0))  # dX = X_- z
    r = simulate_flow(coeffs, p, 0, 1, [2.0], 4)
    assert r.x_terminal[0] == pytest.approx(2.0 * 1.8)
    assert r.dx_terminal[0] == pytest.approx(1.8)


def test_restart_conventions():
    p = JumpPath(0, 1, 0.1, [0.4], [0.9], TS1)
    coeffs = CoefficientSet.levy_driven(*const(0.0), *const(1.0))
    assert restart_flow(coeffs, p, 0.4, 1.0, [0.2], 8).x_terminal[0] == 0.2  # jump at r is excluded
    end = restart_flow(coeffs, p, 1.0, 1.0, [0.2], 8)
    assert end.x_terminal[0] == 0.2 and end.dx_terminal[0] == 1.0
    assert restart_flow(coeffs, p, 0.3, 1.0, [0.2], 8).x_terminal[0] == pytest.approx(1.1)


def test_simulate_y_matches_flow():
    p = generate_path(TS1, 0, 1, 0.05, RandomStream(2))
    c = smooth()
    pc = PerturbedCoefficientSet(*[getattr(c, f) for f in ("mu", "mu_x", "mu_xx", "sigma", "sigma_x", "sigma_xx")],
                                 c.jump_scale)
    y = simulate_Y(pc, p, 0.4, 32)
    assert y.terminal == simulate_flow(c, p, 0, 1, [0.4], 32).x_terminal[0]
    assert y.at(0.0) == 0.4
    with pytest.raises(GridMismatch):
        y.at(0.123456789)
    zero = simulate_Y(CoefficientSet.zero(), p, 1.3, 8)
    assert np.all(zero.values == 1.3)
    expo = simulate_Y(CoefficientSet.levy_driven(*lin(-0.5), *const(0.0)), p, 2.0, 10_000)
    assert expo.terminal == pytest.approx(2.0 * math.exp(-0.5), rel=5e-4)


@given(seed=st.integers(0, 2 ** 32), s=st.floats(0, 0.4), t=st.floats(0.4, 0.9), x=st.floats(-2, 2))
def test_flow_property_aligned(seed, s, t, x):
    p = generate_path(TS1, 0, 1, 0.05, substream(seed, 0))
    rep = flow_property_check(smooth(), p, s, t, 1.0, x, 40)
    assert rep.residual <= 1e-12


def test_flow_property_edge_cases():
    p = generate_path(TS1, 0, 1, 0.05, RandomStream(3))
    assert flow_property_check(smooth(), p, 0.3, 0.3, 1.0, 0.5, 20).residual == 0.0
    with pytest.raises(GridMismatch):
        flow_property_check(smooth(), p, 0.0, 0.37, 1.0, 0.5, 10, grid=np.linspace(0, 1, 11))
    mis = flow_property_check(smooth(), p, 0.0, 0.37, 1.0, 0.5, 10, aligned=False)
    assert mis.residual > 0  # discretisation gap, a diagnostic only


def test_tangent_flows_match_finite_differences():
    c = smooth()
    for i in range(10):
        p = generate_path(TS1, 0, 1, 0.05, substream(21, i))
        x, h = 0.3, 1e-5
        r = simulate_flow(c, p, 0, 1, [x - h, x, x + h], 64, scheme="rk4")
        xm, x0, xp = r.x_terminal
        fd1 = (xp - xm) / (2 * h)
        assert abs(r.dx_terminal[1] - fd1) <= 1e-3 * max(1.0, abs(fd1))
        h2 = 1e-4
        r2 = simulate_flow(c, p, 0, 1, [x - h2, x, x + h2], 64, scheme="rk4")
        fd2 = (r2.x_terminal[2] - 2 * r2.x_terminal[1] + r2.x_terminal[0]) / h2 ** 2
        assert abs(r2.d2x_terminal[1] - fd2) <= 1e-2 * max(1.0, abs(fd2))


def test_martingale_for_additive_symmetric_noise():
    batch = generate_batch(TS1, 0, 1, 0.05, 31, range(100_000))
    est = MCEstimate.from_samples(batch.padded()[1].sum(axis=1))  # X_T - x for mu = 0, sigma = z
    assert abs(est.z_score(0.0)) < 3


def test_euler_strong_error_halves():
    c = CoefficientSet.levy_driven(lambda x: -x + np.sin(x), lambda x: -1 + np.cos(x), lambda x: -np.sin(x),
                                   *const(0.2))
    ratios = []
    for i in range(5):
        p = generate_path(TS1, 0, 1, 0.1, substream(4, i))
        ref = simulate_flow(c, p, 0, 1, [1.0], 3200).x_terminal[0]
        e1 = abs(simulate_flow(c, p, 0, 1, [1.0], 400).x_terminal[0] - ref)
        e2 = abs(simulate_flow(c, p, 0, 1, [1.0], 800).x_terminal[0] - ref)
        ratios.append(e1 / e2)
    assert all(abs(r / 2 - 1) < 0.2 * 1.5 for r in ratios)  # 2x-finer reference inflates the ratio by 4/3 at most
    assert abs(np.median(ratios) - 7 / 3) < 0.2 * 7 / 3


def test_nonfinite_state_raises():
    c = CoefficientSet.levy_driven(lambda x: x ** 3, lambda x: 3 * x ** 2, lambda x: 6 * x, *const(0.0))
    p = JumpPath(0, 1, 0.1, [], [], TS1)
    with pytest.raises(NonFiniteState):
        simulate_flow(c, p, 0, 1, [50.0], 10)


def test_derivative_check_catches_mismatch():
    assert smooth().check_derivatives() < 1e-5
    bad = CoefficientSet.levy_driven(np.sin, np.sin, np.sin, *const(1.0))
    with pytest.raises(ValueError):
        bad.check_derivatives()


def test_continuity_probe_basic():
    c = CoefficientSet.levy_driven(lambda x: -0.5 * np.sin(x), lambda x: -0.5 * np.cos(x),
                                   lambda x: 0.5 * np.sin(x), *const(1.0))
    rep = stochastic_continuity_probe(c, TS1, 1.0, 0.0, 0.2, [0.05, 0.1], [0.05, 0.1], 2000, seed=3)
    assert rep.l2(0.0, 0.0) == 0.0
    assert rep.l2(0.0, 0.1) / rep.l2(0.0, 0.05) >= 1.8
    assert rep.l2(0.1, 0.0) / rep.l2(0.05, 0.0) >= math.sqrt(2) * 0.9
    assert rep.envelope_C > 0 and len(rep.to_dict()["rows"]) == 9
