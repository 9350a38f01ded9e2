"""Monte Carlo engine: counter-based substreams, path farming and streaming moments.

Every sample is a pure function of ``(seed, path_index)``.  Work is cut into
blocks whose boundaries depend only on the path index, and reductions use a
fixed pairwise tree over the index-ordered samples, so thread count never
changes a reported number.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .errors import AbortBudgetExceeded, NonFiniteState

MASK64 = (1 << 64) - 1
DEFAULT_BLOCK = 1024
DEFAULT_ABORT_BUDGET = 1e-3


class RandomStream:
    """A reproducible random stream identified by ``(seed, stream_index)``.

    Backed by a Philox counter-based generator keyed with the 128-bit pair
    ``(seed, stream_index)``; distinct keys give independent streams without
    any sequential state shared between them.  ``child(k)`` gives further
    independent streams under the same key by offsetting the high counter word.
    """

    __slots__ = ("seed", "stream_index", "child_index", "_gen")

    def __init__(self, seed: int, stream_index: int = 0, child_index: int = 0):
        self.seed = int(seed) & MASK64
        self.stream_index = int(stream_index) & MASK64
        self.child_index = int(child_index) & MASK64
        key = self.seed | (self.stream_index << 64)
        bitgen = np.random.Philox(key=key, counter=[0, 0, 0, self.child_index])
        self._gen = np.random.Generator(bitgen)

    def __repr__(self) -> str:
        return (f"RandomStream(seed={self.seed}, stream_index={self.stream_index}, "
                f"child_index={self.child_index})")

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def child(self, k: int) -> "RandomStream":
        return RandomStream(self.seed, self.stream_index, self.child_index + 1 + int(k))

    def random(self, size=None):
        return self._gen.random(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def exponential(self, scale=1.0, size=None):
        return self._gen.exponential(scale, size)

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def poisson(self, lam=1.0, size=None):
        return self._gen.poisson(lam, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def choice(self, a, size=None, p=None):
        return self._gen.choice(a, size=size, p=p)


def substream(seed: int, index: int) -> RandomStream:
    """Return the substream for path ``index`` under master ``seed``."""
    return RandomStream(seed, index)


def default_threads() -> int:
    value = os.environ.get("JUMPFLOW_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


@dataclass(frozen=True)
class MCEstimate:
    """Mean and centred second moment of ``n`` samples.

    ``m2`` is the running sum of squared deviations, so the sample variance is
    ``m2 / (n - 1)`` and the standard error ``sqrt(m2 / (n (n - 1)))``.
    """

    mean: float
    m2: float
    n: int
    n_aborted: int = 0

    @property
    def variance(self) -> float:
        if self.n < 2:
            raise ValueError("variance needs at least two samples")
        return self.m2 / (self.n - 1)

    @property
    def stderr(self) -> float:
        if self.n < 2:
            raise ValueError("stderr needs at least two samples")
        return math.sqrt(max(self.m2, 0.0) / (self.n * (self.n - 1)))

    def ci(self, level: float = 0.95) -> tuple[float, float]:
        half = stats.norm.ppf(0.5 + level / 2) * self.stderr
        return self.mean - half, self.mean + half

    def z_score(self, target: float = 0.0) -> float:
        diff = self.mean - target
        se = self.stderr
        if se == 0.0:
            return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return diff / se

    def merge(self, other: "MCEstimate") -> "MCEstimate":
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return MCEstimate(mean, m2, n, self.n_aborted + other.n_aborted)

    def scaled(self, c: float) -> "MCEstimate":
        return MCEstimate(c * self.mean, c * c * self.m2, self.n, self.n_aborted)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr if self.n >= 2 else None,
                "n": self.n, "n_aborted": self.n_aborted}

    @classmethod
    def from_samples(cls, samples, n_aborted: int = 0, leaf: int = 256) -> "MCEstimate":
        """Pairwise (tree) reduction with a shape fixed by sample order."""
        x = np.asarray(samples, dtype=float).ravel()
        n = x.size
        if n == 0:
            return cls(math.nan, 0.0, 0, n_aborted)
        nleaf = -(-n // leaf)
        counts = np.full(nleaf, leaf, dtype=float)
        counts[-1] = n - leaf * (nleaf - 1)
        padded = np.zeros(nleaf * leaf)
        padded[:n] = x
        blocks = padded.reshape(nleaf, leaf)
        means = blocks.sum(axis=1) / counts
        dev = blocks - means[:, None]
        if n % leaf:
            dev[-1, int(counts[-1]):] = 0.0
        m2s = (dev * dev).sum(axis=1)
        while means.size > 1:
            odd = means.size % 2
            if odd:
                tail = (means[-1:], m2s[-1:], counts[-1:])
                means, m2s, counts = means[:-1], m2s[:-1], counts[:-1]
            ma, mb = means[0::2], means[1::2]
            na, nb = counts[0::2], counts[1::2]
            tot = na + nb
            delta = mb - ma
            means_new = ma + delta * nb / tot
            m2s = m2s[0::2] + m2s[1::2] + delta * delta * na * nb / tot
            means, counts = means_new, tot
            if odd:
                means = np.concatenate([means, tail[0]])
                m2s = np.concatenate([m2s, tail[1]])
                counts = np.concatenate([counts, tail[2]])
        return cls(float(means[0]), float(m2s[0]), n, n_aborted)


def independent_stderr(a: MCEstimate, b: MCEstimate) -> float:
    """Standard error of ``a - b`` when the two estimates share no noise."""
    return math.hypot(a.stderr, b.stderr)


def _blocks(n_paths: int, block_size: int):
    return [np.arange(lo, min(lo + block_size, n_paths)) for lo in range(0, n_paths, block_size)]


def _screen(samples: np.ndarray, abort_budget: float):
    flat = samples.reshape(samples.shape[0], -1)
    ok = np.all(np.isfinite(flat), axis=1)
    n_bad = int(samples.shape[0] - ok.sum())
    if samples.shape[0] and n_bad / samples.shape[0] > abort_budget:
        raise AbortBudgetExceeded(
            f"{n_bad} of {samples.shape[0]} paths aborted (budget {abort_budget:.3%})")
    return samples[ok], n_bad


def farm_samples(batch_task: Callable[[np.ndarray], np.ndarray], n_paths: int,
                 threads: int | None = None, block_size: int = DEFAULT_BLOCK,
                 abort_budget: float = DEFAULT_ABORT_BUDGET) -> tuple[np.ndarray, int]:
    """Run ``batch_task`` over fixed index blocks and return screened samples.

    ``batch_task(indices)`` must return an array whose first axis matches
    ``indices`` and whose rows depend only on the index (and whatever seed the
    task closes over).  Rows with a non-finite entry are dropped and counted;
    a hard failure is raised above ``abort_budget``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    threads = default_threads() if threads is None else max(1, int(threads))
    blocks = _blocks(n_paths, block_size)
    if threads == 1:
        parts = [np.asarray(batch_task(b), dtype=float) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = [np.asarray(p, dtype=float) for p in pool.map(batch_task, blocks)]
    samples = np.concatenate(parts, axis=0)
    return _screen(samples, abort_budget)


def _per_path(task, seed):
    def batch(indices):
        out = []
        for i in indices:
            try:
                out.append(task(int(i), substream(seed, int(i))))
            except NonFiniteState:
                out.append(math.nan)
        return np.asarray(out, dtype=float)
    return batch


def farm(task: Callable[[int, RandomStream], float], n_paths: int, seed: int,
         threads: int | None = None, block_size: int = DEFAULT_BLOCK,
         abort_budget: float = DEFAULT_ABORT_BUDGET) -> MCEstimate:
    """Estimate ``E[task]`` with one substream per path index.

    ``task(index, stream)`` receives ``substream(seed, index)``.  A task may
    raise :class:`NonFiniteState`; such paths count against the abort budget.
    """
    samples, n_bad = farm_samples(_per_path(task, seed), n_paths, threads,
                                  block_size, abort_budget)
    return MCEstimate.from_samples(samples, n_aborted=n_bad)


def paired_difference(task_a, task_b, n_paths: int, seed: int,
                      threads: int | None = None, block_size: int = DEFAULT_BLOCK,
                      abort_budget: float = DEFAULT_ABORT_BUDGET) -> MCEstimate:
    """Estimate ``E[A - B]`` with both tasks on identical substreams (common random numbers)."""
    def diff(index, stream):
        a = task_a(index, stream)
        b = task_b(index, substream(seed, index))
        return a - b
    return farm(diff, n_paths, seed, threads, block_size, abort_budget)
