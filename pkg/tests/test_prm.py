import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from jumpflow.errors import DivergentCompensator, KernelOutOfHorizon
from jumpflow.levy import CompoundPoisson, TruncatedStable
from jumpflow.mc import MCEstimate, RandomStream, substream
from jumpflow.prm import (JumpPath, PathBatch, Rectangle, SizeInterval, StepKernel, compensator_integral,
                          generate_batch, generate_path, integrate_compensated, integrate_N, interval,
                          read_paths_csv, write_paths_csv)

TS1 = TruncatedStable(1.0, 1.0)


# -- size sets and kernels --------------------------------------------------------------

def test_interval_parsing_and_membership():
    s = interval("(0.5,1]")
    assert (s.lo, s.hi, s.lo_closed, s.hi_closed) == (0.5, 1.0, False, True)
    assert list(s.contains([0.5, 0.7, 1.0, 1.1])) == [False, True, True, False]
    t = interval("[-1,-0.5)")
    assert list(t.contains([-1.0, -0.5, -0.7])) == [True, False, True]
    with pytest.raises(ValueError):
        interval("0.5,1")


def test_zero_never_in_size_set():
    assert not interval("[-1,1]").contains(0.0)


def test_cut_beyond_eps():
    pieces = interval("(-1,1]").cut_beyond(0.2)
    assert sorted((p.lo, p.hi) for p in pieces) == [(-1.0, -0.2), (0.2, 1.0)]
    assert interval("(0,0.1]").cut_beyond(0.2) == []


def test_overlapping_rectangles_rejected():
    with pytest.raises(ValueError):
        StepKernel([Rectangle(0, 0.5, ["(0.1,1]"]), Rectangle(0.2, 0.7, ["(0.5,2]"])])
    StepKernel([Rectangle(0, 0.5, ["(0.1,1]"]), Rectangle(0.5, 0.7, ["(0.5,2]"])])  # touching is fine
    with pytest.raises(ValueError):
        Rectangle(0, 1, ["(0.1,0.5]", "(0.4,0.6]"])


def test_kernel_evaluation():
    k = StepKernel([Rectangle(0.0, 0.5, ["(0.5,1]"], 2.0), Rectangle(0.5, 1.0, ["[-1,-0.5)"], -1.0)])
    assert k(0.2, 0.7) == 2.0 and k(0.5, 0.7) == 0.0 and k(0.7, -0.6) == -1.0 and k(0.7, 0.6) == 0.0
    assert k.time_edges() == [0.0, 0.5, 1.0]
    assert k.size_edges() == [-1.0, -0.5, 0.5, 1.0]


# -- integrals ------------------------------------------------------------------------

def test_integrate_n_hand_examples():
    empty = JumpPath(0, 1, 0.1, [], [], TS1)
    k1 = StepKernel.single(0, 1, ["(0.5,1]"])
    assert integrate_N(empty, k1) == 0.0
    assert integrate_N(JumpPath(0, 1, 0.1, [0.3], [0.7]), k1) == 1.0
    p2 = JumpPath(0, 1, 0.1, [0.3, 0.6], [0.7, -0.8])
    assert integrate_N(p2, StepKernel.single(0.5, 1, ["[-1,-0.5)"], 2.0)) == 2.0


def test_compensator_examples():
    assert compensator_integral(TS1, StepKernel.single(0, 1, ["(0.5,1]"])) == pytest.approx(1.0, rel=1e-14)
    assert compensator_integral(TS1, StepKernel.single(0, 1, ["(0.5,1]"], 0.0)) == 0.0
    with pytest.raises(DivergentCompensator):
        compensator_integral(TS1, StepKernel.single(0, 1, ["(0,1]"]))
    # restricted to |z| > eps the same kernel is finite
    assert compensator_integral(TS1, StepKernel.single(0, 1, ["(0,1]"]), eps=0.5) == pytest.approx(1.0)


def test_compensator_matches_quadrature_oracle():
    from scipy import integrate
    k = StepKernel([Rectangle(0.1, 0.4, ["(0.2,0.6]"], 1.5), Rectangle(0.4, 0.9, ["[-0.9,-0.3)"], -0.5)])
    ref = 0.3 * 1.5 * integrate.quad(lambda z: z ** -2, 0.2, 0.6)[0] - 0.5 * 0.5 * integrate.quad(lambda z: z ** -2, 0.3, 0.9)[0]
    assert compensator_integral(TS1, k) == pytest.approx(ref, rel=1e-10)


def test_kernel_out_of_horizon():
    p = JumpPath(0.2, 1.0, 0.1, [], [])
    with pytest.raises(KernelOutOfHorizon):
        integrate_N(p, StepKernel.single(0.0, 0.5, ["(0.5,1]"]))


def test_atoms_counted_in_closed_sets():
    cp = CompoundPoisson(2.0, sizes=[1.0])
    assert compensator_integral(cp, StepKernel.single(0, 1, ["(0.5,1]"])) == pytest.approx(2.0)
    assert compensator_integral(cp, StepKernel.single(0, 1, ["(0.5,1)"])) == 0.0


@given(w1=st.floats(-3, 3), w2=st.floats(-3, 3), seed=st.integers(0, 2 ** 32))
def test_compensated_integral_additive_over_disjoint_kernels(w1, w2, seed):
    p = generate_path(TS1, 0, 1, 0.2, RandomStream(seed))
    k1 = StepKernel.single(0.0, 0.6, ["(0.2,1]"], w1)
    k2 = StepKernel.single(0.3, 1.0, ["[-1,-0.2)"], w2)
    total = integrate_compensated(p, k1 + k2)
    assert total == pytest.approx(integrate_compensated(p, k1) + integrate_compensated(p, k2), abs=1e-12)


@given(c=st.floats(-5, 5))
def test_compensator_linear_in_weight(c):
    k = StepKernel.single(0.2, 0.7, ["(0.3,1]"], 1.0)
    assert compensator_integral(TS1, k.scaled(c)) == pytest.approx(c * compensator_integral(TS1, k), abs=1e-14)


# -- path generation --------------------------------------------------------------------

def test_zero_tail_gives_empty_paths():
    for i in range(20):
        assert generate_path(TS1, 0, 1, 1.0, substream(0, i)).n_jumps == 0


def test_degenerate_horizon_rejected():
    with pytest.raises(ValueError):
        generate_path(TS1, 1.0, 1.0, 0.5, RandomStream(0))


def test_path_invariants():
    p = generate_path(TS1, 0.0, 2.0, 0.05, RandomStream(4))
    assert np.all(np.diff(p.times) > 0) and np.all(np.abs(p.sizes) > 0.05)
    assert p.times[0] > 0 and p.times[-1] <= 2.0
    with pytest.raises(ValueError):
        p.times[0] = 0.5  # read-only
    with pytest.raises(ValueError):
        JumpPath(0, 1, 0.1, [0.5, 0.4], [1.0, 1.0])
    with pytest.raises(ValueError):
        JumpPath(0, 1, 0.1, [0.5], [0.05])


def test_mean_count_matches_tail_mass():
    counts = generate_batch(TS1, 0.0, 1.0, 0.5, 3, range(10_000)).counts
    est = MCEstimate.from_samples(counts.astype(float))
    assert abs(est.z_score(2.0)) < 3


def test_count_law_chi_square():
    lam = TS1.tail_mass(0.2) * 1.0  # 8
    counts = generate_batch(TS1, 0.0, 1.0, 0.2, 17, range(10_000)).counts
    edges = np.arange(0, 21)
    obs = np.array([np.sum(counts == k) for k in edges[:-1]] + [np.sum(counts >= 20)])
    probs = np.append(stats.poisson.pmf(edges[:-1], lam), stats.poisson.sf(19, lam))
    exp = probs * counts.size
    # merge sparse cells
    keep = exp >= 5
    obs_m = np.append(obs[keep], obs[~keep].sum())
    exp_m = np.append(exp[keep], exp[~keep].sum())
    chi2 = np.sum((obs_m - exp_m) ** 2 / exp_m)
    assert stats.chi2.sf(chi2, obs_m.size - 1) > 1e-3


def test_compensated_integral_centred_and_isometric():
    batch = generate_batch(TS1, 0.0, 1.0, 0.1, 21, range(100_000))
    jt, jz = batch.padded()
    k = StepKernel.single(0, 1, ["(0.5,1]", "[-1,-0.5)"])
    vals = np.sum(k(jt, jz), axis=1) - compensator_integral(TS1, k, 0.1)
    est = MCEstimate.from_samples(vals)
    assert abs(est.z_score(0.0)) < 3
    sq = MCEstimate.from_samples((vals - vals.mean()) ** 2)
    assert abs(sq.z_score(k.l2_norm_sq(TS1))) < 3  # = 2.0


def test_disjoint_windows_uncorrelated():
    batch = generate_batch(TS1, 0.0, 1.0, 0.1, 22, range(50_000))
    jt, jz = batch.padded()
    ka = StepKernel.single(0, 0.4, ["(0.3,1]"])
    kb = StepKernel.single(0.4, 1.0, ["(0.3,1]"])
    a = np.sum(ka(jt, jz), axis=1) - compensator_integral(TS1, ka)
    b = np.sum(kb(jt, jz), axis=1) - compensator_integral(TS1, kb)
    assert abs(MCEstimate.from_samples(a * b).z_score(0.0)) < 3


def test_batch_reproduces_single_paths():
    b = generate_batch(TS1, 0, 1, 0.1, 5, [3, 7, 11])
    for j, i in enumerate([3, 7, 11]):
        p = generate_path(TS1, 0, 1, 0.1, substream(5, i))
        assert np.array_equal(b.path(j).times, p.times) and np.array_equal(b.path(j).sizes, p.sizes)
    tt, zz = b.padded()
    assert tt.shape[0] == 3 and np.all(np.isinf(tt[zz == 0]))


def test_with_points_inserts_in_order():
    p = JumpPath(0, 1, 0.1, [0.2, 0.8], [0.5, -0.5])
    q = p.with_points([0.5], [0.9])
    assert list(q.times) == [0.2, 0.5, 0.8] and list(q.sizes) == [0.5, 0.9, -0.5]
    assert p.window(0.2, 0.8)[0].tolist() == [0.8]


def test_csv_round_trip():
    paths = [generate_path(TS1, 0, 1, 0.2, substream(1, i)) for i in range(5)]
    paths.append(JumpPath(0, 1, 0.2, [], [], TS1))
    buf = io.StringIO()
    write_paths_csv(paths, buf)
    assert buf.getvalue().splitlines()[0] == "path_id,t,z"
    back = read_paths_csv(io.StringIO(buf.getvalue()), 0, 1, 0.2, TS1, n_paths=len(paths))
    for a, b in zip(paths, back):
        assert np.array_equal(a.times, b.times) and np.array_equal(a.sizes, b.sizes)


def test_size_interval_mass_touching_zero_finite_activity():
    cp = CompoundPoisson(3.0, sizes=[-1.0, 0.5, 1.0])
    assert SizeInterval(0.0, 1.0).mass(cp) == pytest.approx(2.0)
    assert math.isclose(PathBatch.from_paths([JumpPath(0, 1, 0.1, [0.5], [1.0])]).counts[0], 1)
