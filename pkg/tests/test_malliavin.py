import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from jumpflow.errors import AdaptednessViolation, KernelOutOfHorizon
from jumpflow.levy import CompoundPoisson, TruncatedStable
from jumpflow.malliavin import (AdaptedIntegrand, TrigSmoothRV, characteristic_functional, chasles_check,
                                derivative, evaluate_rv, ipp_check, ipp_closed_form, ito_by_jumps, plus_point,
                                random_adapted_integrand, random_kernel, random_rv, skorohod_adapted,
                                skorohod_adapted_batch, skorohod_by_duality, skorohod_ito_residual)
from jumpflow.mc import MCEstimate, RandomStream, substream
from jumpflow.prm import JumpPath, Rectangle, StepKernel, generate_batch, generate_path, integrate_compensated

TS1 = TruncatedStable(1.0, 1.0)
EPS = 0.1
SIZES = ["(0.1,0.3]", "(0.3,0.6]", "(0.6,1]", "[-1,-0.4)", "[-0.4,-0.1)", "(0,0.5]"]
PHI = StepKernel.single(0.0, 1.0, ["(0.2,1]"], 0.7)


def path(seed=0, i=0):
    return generate_path(TS1, 0, 1, EPS, substream(seed, i))


def pairing_oracle(F, phi, p, measure=TS1, eps=EPS):
    """∫∫ φ(t,z) (F(ω + δ_(t,z)) - F(ω)) dt ν(dz) by nested quadrature over re-evaluated paths."""
    base = F.evaluate(p)
    kernels = F.kernels() + [phi]
    tedges = sorted({e for k in kernels for e in k.time_edges()})
    zedges = sorted({e for k in kernels for e in k.size_edges()} | {-eps, eps})
    total = 0j
    for rect in phi.rectangles:
        ts = [rect.t0] + [e for e in tedges if rect.t0 < e < rect.t1] + [rect.t1]
        for a, b in zip(ts[:-1], ts[1:]):
            tm = 0.5 * (a + b)  # F⁺ is constant in t between edges
            for piece in (q for s in rect.sizes for q in s.cut_beyond(eps)):
                zs = [piece.lo] + [e for e in zedges if piece.lo < e < piece.hi] + [piece.hi]
                for lo, hi in zip(zs[:-1], zs[1:]):
                    for part in (np.real, np.imag):
                        val = integrate.quad(lambda z: part(plus_point(F, p, tm, z) - base) * measure.density(z),
                                             lo, hi, limit=100, epsabs=1e-13, epsrel=1e-12)[0]
                        total += (b - a) * rect.weight * val * (1j if part is np.imag else 1.0)
    return total


def test_constant_rv():
    F = TrigSmoothRV.constant(1.0)
    assert evaluate_rv(F, path()) == 1.0 and F.is_deterministic
    D = derivative(F)
    assert D(path(), 0.5, 0.7) == 0.0
    assert D.pairing(path(), PHI) == 0.0


def test_exp_on_empty_path():
    F = TrigSmoothRV.exp_i(1.3, PHI)
    empty = JumpPath(0, 1, EPS, [], [], TS1)
    comp = 0.7 * (1 / 0.2 - 1)  # 0.7 * ∫_{0.2}^1 z^-2 dz
    assert evaluate_rv(F, empty) == pytest.approx(cmath.exp(-1.3j * comp), abs=1e-14)


def test_bound_holds():
    rng = np.random.default_rng(0)
    F = random_rv(rng, 0, 1, SIZES, n_terms=3)
    vals = F.evaluate_batch(generate_batch(TS1, 0, 1, EPS, 1, range(500)))
    assert np.all(np.abs(vals) <= F.bound + 1e-12)


def test_batch_matches_single():
    rng = np.random.default_rng(1)
    F = random_rv(rng, 0, 1, SIZES)
    batch = generate_batch(TS1, 0, 1, EPS, 2, range(20))
    single = [F.evaluate(batch.path(i)) for i in range(20)]
    assert np.allclose(F.evaluate_batch(batch), single, atol=1e-13)


def test_derivative_matches_plus_point():
    rng = np.random.default_rng(2)
    F = random_rv(rng, 0, 1, SIZES)
    p = path(3)
    D = derivative(F)
    for t, z in rng.uniform([0, 0.1], [1, 1], (20, 2)) * [1, rng.choice([-1, 1])]:
        assert D(p, t, z) == pytest.approx(plus_point(F, p, t, z) - F.evaluate(p), abs=1e-12)


def test_locality():
    F = TrigSmoothRV.exp_i(2.0, StepKernel.single(0.0, 0.5, ["(0.3,1]"]))
    D = derivative(F)
    p = path(4)
    assert D(p, 0.7, 0.5) == 0 and D(p, 0.2, 0.2) == 0 and D(p, 0.2, -0.5) == 0
    assert D(p, 0.2, 0.5) != 0


@settings(max_examples=25)
@given(seed=st.integers(0, 2 ** 31))
def test_product_rule(seed):
    rng = np.random.default_rng(seed)
    F, G = random_rv(rng, 0, 1, SIZES), random_rv(rng, 0, 1, SIZES)
    p = path(seed % 1000)
    t, z = rng.uniform(0, 1), rng.uniform(0.1, 1) * rng.choice([-1, 1])
    DF, DG, DFG = (derivative(X)(p, t, z) for X in (F, G, F * G))
    f, g = F.evaluate(p), G.evaluate(p)
    assert abs(DFG - (f * DG + g * DF + DF * DG)) < 1e-12


@pytest.mark.parametrize("case", range(3))
def test_pairing_matches_quadrature_oracle(case):
    rng = np.random.default_rng([5, case])
    F = random_rv(rng, 0, 1, SIZES, n_terms=2, n_factors=1)
    phi = random_kernel(rng, 0, 1, SIZES)
    p = path(6, case)
    assert derivative(F).pairing(p, phi) == pytest.approx(pairing_oracle(F, phi, p), abs=1e-9)


def test_pairing_with_atoms():
    cp = CompoundPoisson(2.0, sizes=[0.5, -0.3, 1.0], probs=[0.5, 0.3, 0.2])
    F = TrigSmoothRV.exp_i(0.9, StepKernel.single(0.0, 0.6, ["(0.2,0.5]"]))
    phi = StepKernel.single(0.3, 1.0, ["[0.5,1]"], 1.5)
    p = generate_path(cp, 0, 1, 0.1, RandomStream(1))
    # only the atom at 0.5 lies in both kernels; the atom at 1.0 lies only in phi
    e = F.evaluate(p, cp)
    want = e * 1.5 * 2.0 * (0.3 * 0.5 * (cmath.exp(0.9j) - 1))
    assert derivative(F).pairing(p, phi, cp) == pytest.approx(want, abs=1e-13)


def test_characteristic_functional_mc():
    batch = generate_batch(TS1, 0, 1, EPS, 8, range(100_000))
    vals = TrigSmoothRV.exp_i(0.8, PHI).evaluate_batch(batch)
    want = characteristic_functional(0.8, PHI, TS1, EPS)
    assert abs(MCEstimate.from_samples(vals.real).z_score(want.real)) < 3
    assert abs(MCEstimate.from_samples(vals.imag).z_score(want.imag)) < 3


def test_characteristic_functional_quadrature_oracle():
    inner = integrate.quad(lambda z: (cmath.exp(0.8j * 0.7) - 1 - 0.8j * 0.7).real * z ** -2, 0.2, 1)[0]
    inner_im = integrate.quad(lambda z: (cmath.exp(0.8j * 0.7) - 1 - 0.8j * 0.7).imag * z ** -2, 0.2, 1)[0]
    assert characteristic_functional(0.8, PHI, TS1, EPS) == pytest.approx(cmath.exp(inner + 1j * inner_im), abs=1e-12)


def test_ipp_closed_form_case():
    F = TrigSmoothRV.exp_i(0.8, PHI)
    rep = ipp_check(F, PHI, TS1, 50_000, seed=9, eps=EPS)
    assert rep.passed
    want = ipp_closed_form(0.8, PHI, TS1, EPS)
    assert abs(rep.rhs - want) < 5 * rep.stderr + 1e-3


def test_ipp_deterministic_and_disjoint():
    rep = ipp_check(TrigSmoothRV.constant(2.0), PHI, TS1, 5000, seed=1, eps=EPS)
    assert rep.rhs == 0 and rep.passed
    F = TrigSmoothRV.exp_i(1.1, StepKernel.single(0.0, 0.5, ["(0.1,1]"]))
    later = StepKernel.single(0.5, 1.0, ["(0.1,1]"])
    rep = ipp_check(F, later, TS1, 20_000, seed=2, eps=EPS)
    assert rep.rhs == 0 and rep.passed


def test_adapted_integrals_agree():
    rng = np.random.default_rng(7)
    for i in range(20):
        u = random_adapted_integrand(rng, 0, 1, SIZES)
        p = path(8, i)
        assert skorohod_ito_residual(p, u) < 1e-12
        assert abs(skorohod_adapted(p, u) - ito_by_jumps(p, u)) < 1e-12
        s, t = np.sort(rng.uniform(0, 1, 2))
        assert chasles_check(p, u, s, t) < 1e-12
        assert chasles_check(p, u, s, s) < 1e-12


def test_deterministic_integrand_is_compensated_integral():
    rect = Rectangle(0.1, 0.8, ["(0.3,1]"], -0.4)
    p = path(9)
    u = AdaptedIntegrand(((rect, None),))
    assert skorohod_adapted(p, u) == pytest.approx(integrate_compensated(p, StepKernel([rect])), abs=1e-15)
    assert chasles_check(p, AdaptedIntegrand(()), 0.2, 0.6) == 0.0


def test_anticipating_integrand_rejected():
    later = TrigSmoothRV.exp_i(1.0, StepKernel.single(0.5, 0.9, ["(0.1,1]"]))
    with pytest.raises(AdaptednessViolation):
        AdaptedIntegrand(((Rectangle(0.2, 0.6, ["(0.1,1]"]), later),))


def test_skorohod_mean_zero():
    rng = np.random.default_rng(10)
    u = random_adapted_integrand(rng, 0, 1, SIZES)
    vals = skorohod_adapted_batch(generate_batch(TS1, 0, 1, EPS, 11, range(100_000)), u)
    assert abs(MCEstimate.from_samples(vals.real).z_score()) < 3
    assert abs(MCEstimate.from_samples(vals.imag).z_score()) < 3


def test_kernel_outside_horizon():
    with pytest.raises(KernelOutOfHorizon):
        TrigSmoothRV.exp_i(1.0, StepKernel.single(0.5, 2.0, ["(0.1,1]"]))
