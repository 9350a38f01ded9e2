import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from jumpflow.flow import CoefficientSet
from jumpflow.ito_check import (TestFunction, ito_random_functional_check, ito_residual, ito_terms,
                                ito_terms_batch)
from jumpflow.levy import CompoundPoisson, TruncatedStable
from jumpflow.mc import substream
from jumpflow.prm import JumpPath, PathBatch, generate_path

CP = CompoundPoisson(3.0, sizes=[1.0, -0.5], probs=[0.3, 0.7])
TS1 = TruncatedStable(1.0, 1.0)
ONE = (lambda x: 1.0 + 0 * x, lambda x: 0 * x, lambda x: 0 * x)
ZERO = (lambda x: 0 * x,) * 3
ADDITIVE = CoefficientSet.levy_driven(*ZERO, *ONE)
HAND = JumpPath(0, 1, 0.1, [0.2, 0.5, 0.9], [1.0, -0.5, 1.0], CP)


def sine_drift():
    return CoefficientSet.levy_driven(lambda x: -x, lambda x: -1 + 0 * x, lambda x: 0 * x, *ONE)


def square_oracle(x0, times, sizes, t):
    """Exact terms for f = x^2, A = 0, B = z: X is piecewise linear with slope -m1 between jumps."""
    r = sp.Symbol("r")
    m1 = sp.Rational(3) * (sp.Rational(3, 10) * 1 + sp.Rational(7, 10) * sp.Rational(-1, 2))
    m2 = sp.Rational(3) * (sp.Rational(3, 10) * 1 + sp.Rational(7, 10) * sp.Rational(1, 4))
    knots = [sp.nsimplify(v) for v in [0] + list(times) + [t]]
    level = sp.nsimplify(x0)
    jump_sum = comp = 0
    for k in range(len(knots) - 1):
        a, b = knots[k], knots[k + 1]
        X = level - m1 * (r - a)
        comp += sp.integrate(2 * m1 * X + m2, (r, a, b))  # ∫ (X+z)^2 - X^2 ν(dz)
        level = X.subs(r, b)
        if k < len(sizes):
            z = sp.nsimplify(sizes[k])
            jump_sum += (level + z) ** 2 - level ** 2
            level += z
    lhs = level ** 2 - sp.nsimplify(x0) ** 2
    nu = m2 * knots[-1]
    return {k: float(v) for k, v in dict(lhs=lhs, nu_term=nu, jump_sum=jump_sum, compensator=comp).items()}


def test_identity_function_collapses_to_sde():
    assert ito_residual(TestFunction.identity(), ADDITIVE, HAND, 0.3, 1.0, 100) < 1e-10
    p = generate_path(TS1, 0, 1, 0.05, substream(0, 1))
    drifted = CoefficientSet.levy_driven(lambda x: 0.7 + 0 * x, *ZERO[1:], *ONE)
    assert ito_residual(TestFunction.identity(), drifted, p, 0.3, 1.0, 100) < 1e-10


def test_state_dependent_drift_residual_is_first_order():
    # A is read along the Euler interpolant, so the residual is the scheme's freezing error
    p = generate_path(TS1, 0, 1, 0.05, substream(0, 1))
    r1 = ito_residual(TestFunction.identity(), sine_drift(), p, 0.3, 1.0, 100)
    r2 = ito_residual(TestFunction.identity(), sine_drift(), p, 0.3, 1.0, 200)
    assert 0 < r1 < 1e-2 and abs(r1 / r2 - 2) < 0.4


def test_square_on_hand_path_matches_symbolic_oracle():
    got = ito_terms(TestFunction.square(), ADDITIVE, HAND, 0.3, 1.0, 10_000)
    want = square_oracle(0.3, [0.2, 0.5, 0.9], [1.0, -0.5, 1.0], 1.0)
    for key, val in want.items():
        assert got[key] == pytest.approx(val, abs=1e-10), key
    assert got["drift"] == 0.0
    assert got["residual"] < 1e-8


def test_sine_residual_halves():
    f = TestFunction.sine()
    ratios = []
    for i in range(6):
        p = generate_path(TS1, 0, 1, 0.1, substream(3, i))
        r1 = ito_residual(f, sine_drift(), p, 0.4, 1.0, 1000)
        r2 = ito_residual(f, sine_drift(), p, 0.4, 1.0, 2000)
        ratios.append(r1 / r2)
    assert all(abs(q - 2.0) < 0.4 for q in ratios)


@given(c=st.floats(-50, 50), seed=st.integers(0, 1000))
def test_shift_invariance(c, seed):
    p = generate_path(TS1, 0, 1, 0.1, substream(seed, 0))
    f = TestFunction.sine()
    base = ito_residual(f, sine_drift(), p, 0.2, 1.0, 50)
    assert abs(ito_residual(f.shifted(c), sine_drift(), p, 0.2, 1.0, 50) - base) <= 1e-14 * (1 + abs(c))


@given(c=st.floats(-20, 20).filter(lambda v: abs(v) > 1e-3), seed=st.integers(0, 1000))
def test_linear_scaling(c, seed):
    p = generate_path(TS1, 0, 1, 0.1, substream(seed, 0))
    f = TestFunction.sine()
    base = ito_residual(f, sine_drift(), p, 0.2, 1.0, 50)
    scaled = ito_residual(f.scaled(c), sine_drift(), p, 0.2, 1.0, 50)
    assert scaled == pytest.approx(abs(c) * base, rel=1e-12, abs=1e-15 * abs(c))


def test_zero_frequency_functional_is_trivial():
    batch = PathBatch.from_paths([HAND])
    terms = ito_terms_batch(TestFunction.sine(np.zeros((1, 1))), ADDITIVE, batch, 0.3, 0.0, 0.5, 100, CP)
    assert terms.residual[0] == 0.0 and terms.lhs[0] == 0.0


def test_random_functional_hand_path():
    path = JumpPath(0, 1, 0.1, [0.3, 0.7], [1.0, -0.5], CP)
    theta = 1.0 - 0.5 * 3.0  # one jump in (0.5, 1], compensated
    batch = PathBatch.from_paths([path])
    terms = ito_terms_batch(TestFunction.sine(np.array([[theta]])), ADDITIVE, batch, 0.3, 0.0, 0.5, 10_000, CP)
    x_minus = 0.3 + 0.15 * 0.3
    x_end = x_minus + 1.0 + 0.15 * 0.2
    assert terms.jump_sum[0] == pytest.approx(math.sin(theta * (x_minus + 1)) - math.sin(theta * x_minus), abs=1e-12)
    assert terms.lhs[0] == pytest.approx(math.sin(theta * x_end) - math.sin(theta * 0.3), abs=1e-12)
    assert terms.residual[0] < 1e-8


def test_random_functional_check_and_swap():
    rep = ito_random_functional_check(ADDITIVE, CP, 0.5, 200, 4000, eps=0.1, seed=1)
    assert rep.passed and rep.max_residual < rep.tolerance
    assert rep.swap_max_residual < 1e-8 * (1 + rep.max_scale + 10)
    with pytest.raises(ValueError):
        ito_random_functional_check(ADDITIVE, CP, 1.0, 10, 10)


def test_test_function_checks():
    assert TestFunction.sine(2.0).check_derivatives() < 1e-6
    assert TestFunction.square().growth_ok() and TestFunction.sine().growth_ok()
    bad = TestFunction(np.sin, np.sin, np.sin)
    with pytest.raises(ValueError):
        bad.check_derivatives()
    assert not TestFunction(lambda x: x ** 3, lambda x: 3 * x ** 2, lambda x: 6 * x, 1.0, 1.0).growth_ok()
