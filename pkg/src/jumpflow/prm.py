"""Poisson random measure paths with small-jump truncation, and step-kernel integrals.

A path holds the marked points ``(t_i, z_i)`` of N on ``(S, T] x {|z| > eps}``.
Integrals against the compensated measure use the intensity actually
simulated, ``dt ⊗ ν`` restricted to ``{|z| > eps}``, so that ``Ñ(φ)`` is
exactly centred for every step kernel.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DivergentCompensator, KernelOutOfHorizon
from .levy import LevyMeasure
from .mc import RandomStream, substream


# -- size sets and step kernels -------------------------------------------------

@dataclass(frozen=True)
class SizeInterval:
    """Interval of jump sizes with open/closed ends; the point 0 is never included."""

    lo: float
    hi: float
    lo_closed: bool = False
    hi_closed: bool = True

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval ({self.lo}, {self.hi})")
        if math.isinf(self.lo):
            object.__setattr__(self, "lo_closed", False)
        if math.isinf(self.hi):
            object.__setattr__(self, "hi_closed", False)

    def __str__(self):
        return f"{'[' if self.lo_closed else '('}{self.lo:g},{self.hi:g}{']' if self.hi_closed else ')'}"

    def contains(self, z):
        z = np.asarray(z, dtype=float)
        left = (z >= self.lo) if self.lo_closed else (z > self.lo)
        right = (z <= self.hi) if self.hi_closed else (z < self.hi)
        return left & right & (z != 0.0)

    def touches_zero(self) -> bool:
        return self.lo <= 0.0 <= self.hi

    def cut_beyond(self, eps: float) -> list["SizeInterval"]:
        """Pieces of this interval lying in ``{|z| > eps}``."""
        pieces = []
        if self.hi > eps:
            lo, closed = (self.lo, self.lo_closed) if self.lo > eps else (eps, False)
            pieces.append(SizeInterval(lo, self.hi, closed, self.hi_closed))
        if self.lo < -eps:
            hi, closed = (self.hi, self.hi_closed) if self.hi < -eps else (-eps, False)
            pieces.append(SizeInterval(self.lo, hi, self.lo_closed, closed))
        return [p for p in pieces if p.lo < p.hi or (p.lo_closed and p.hi_closed)]

    def mass(self, measure: LevyMeasure) -> float:
        if self.touches_zero() and measure.infinite_activity:
            raise DivergentCompensator(f"size set {self} touches 0 where {measure!r} has infinite mass")
        return measure.interval_mass(self.lo, self.hi, self.lo_closed, self.hi_closed)

    def intersect(self, other: "SizeInterval") -> "SizeInterval | None":
        def end(x, xc, y, yc, pick):
            if x == y:
                return x, xc and yc
            return (x, xc) if pick(x, y) == x else (y, yc)
        lo, lo_c = end(self.lo, self.lo_closed, other.lo, other.lo_closed, max)
        hi, hi_c = end(self.hi, self.hi_closed, other.hi, other.hi_closed, min)
        if lo < hi or (lo == hi and lo_c and hi_c):
            return SizeInterval(lo, hi, lo_c, hi_c)
        return None


_INTERVAL = re.compile(r"^\s*([\[(])\s*([^,]+?)\s*,\s*([^\])]+?)\s*([\])])\s*$")


def interval(text: str) -> SizeInterval:
    """Parse interval notation such as ``"(0.5,1]"`` or ``"[-1,-0.5)"``."""
    m = _INTERVAL.match(text)
    if not m:
        raise ValueError(f"cannot parse interval {text!r}")
    return SizeInterval(float(m.group(2)), float(m.group(3)), m.group(1) == "[", m.group(4) == "]")


def _as_sizes(sizes) -> tuple[SizeInterval, ...]:
    if isinstance(sizes, (SizeInterval, str)):
        sizes = [sizes]
    out = tuple(interval(s) if isinstance(s, str) else s for s in sizes)
    for i, a in enumerate(out):
        for b in out[i + 1:]:
            if a.intersect(b) is not None:
                raise ValueError(f"size intervals {a} and {b} overlap")
    return out


@dataclass(frozen=True)
class Rectangle:
    """``weight * 1_{[t0, t1)}(t) * 1_{sizes}(z)``."""

    t0: float
    t1: float
    sizes: tuple
    weight: float = 1.0

    def __post_init__(self):
        if not self.t0 <= self.t1:
            raise ValueError("time interval must have t0 <= t1")
        if not math.isfinite(self.weight):
            raise ValueError("weight must be finite")
        object.__setattr__(self, "sizes", _as_sizes(self.sizes))

    def contains(self, t, z):
        t = np.asarray(t, dtype=float)
        z = np.asarray(z, dtype=float)
        inside = np.zeros(np.broadcast(t, z).shape, dtype=bool)
        for s in self.sizes:
            inside |= s.contains(z)
        return inside & (t >= self.t0) & (t < self.t1)

    def size_mass(self, measure: LevyMeasure, eps: float | None = None) -> float:
        if eps is None:
            return sum(s.mass(measure) for s in self.sizes)
        return sum(p.mass(measure) for s in self.sizes for p in s.cut_beyond(eps))

    def overlaps(self, other: "Rectangle") -> bool:
        if min(self.t1, other.t1) <= max(self.t0, other.t0):
            return False
        return any(a.intersect(b) is not None for a in self.sizes for b in other.sizes)


class StepKernel:
    """Finite sum of weighted rectangles with pairwise-disjoint supports."""

    def __init__(self, rectangles: Iterable[Rectangle] = ()):
        rects = tuple(r for r in rectangles if r.t1 > r.t0)
        for i, a in enumerate(rects):
            for b in rects[i + 1:]:
                if a.overlaps(b):
                    raise ValueError("rectangles of a step kernel must be disjoint")
        self.rectangles = rects

    def __repr__(self):
        parts = ", ".join(f"{r.weight:g}·[{r.t0:g},{r.t1:g})×{'∪'.join(map(str, r.sizes))}"
                          for r in self.rectangles)
        return f"StepKernel({parts})"

    @classmethod
    def single(cls, t0, t1, sizes, weight=1.0) -> "StepKernel":
        return cls([Rectangle(t0, t1, sizes, weight)])

    def __add__(self, other: "StepKernel") -> "StepKernel":
        return StepKernel(self.rectangles + other.rectangles)

    def scaled(self, c: float) -> "StepKernel":
        return StepKernel(Rectangle(r.t0, r.t1, r.sizes, c * r.weight) for r in self.rectangles)

    def restrict_time(self, a: float, b: float) -> "StepKernel":
        """The kernel multiplied by ``1_{[a, b)}(t)``."""
        out = []
        for r in self.rectangles:
            lo, hi = max(r.t0, a), min(r.t1, b)
            if hi > lo:
                out.append(Rectangle(lo, hi, r.sizes, r.weight))
        return StepKernel(out)

    def __call__(self, t, z):
        t = np.asarray(t, dtype=float)
        z = np.asarray(z, dtype=float)
        out = np.zeros(np.broadcast(t, z).shape)
        for r in self.rectangles:
            out = out + np.where(r.contains(t, z), r.weight, 0.0)
        return out

    @property
    def time_support(self) -> tuple[float, float]:
        if not self.rectangles:
            return (math.inf, -math.inf)
        return (min(r.t0 for r in self.rectangles), max(r.t1 for r in self.rectangles))

    def time_edges(self) -> list[float]:
        return sorted({e for r in self.rectangles for e in (r.t0, r.t1)})

    def size_edges(self) -> list[float]:
        return sorted({e for r in self.rectangles for s in r.sizes for e in (s.lo, s.hi)
                       if math.isfinite(e)})

    def l2_norm_sq(self, measure: LevyMeasure, eps: float | None = None) -> float:
        """``∫∫ φ² dt ν(dz)`` (rectangles are disjoint, so squares add)."""
        return sum(r.weight ** 2 * (r.t1 - r.t0) * r.size_mass(measure, eps) for r in self.rectangles)

    def check_horizon(self, S: float, T: float):
        lo, hi = self.time_support
        if self.rectangles and (lo < S or hi > T):
            raise KernelOutOfHorizon(f"kernel time support [{lo}, {hi}) leaves horizon ({S}, {T}]")


# -- paths ----------------------------------------------------------------------

@dataclass(frozen=True)
class JumpPath:
    """Marked points of N on ``(S, T] x {|z| > eps}`` sorted by time."""

    S: float
    T: float
    eps: float
    times: np.ndarray
    sizes: np.ndarray
    measure: LevyMeasure | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.S < self.T:
            raise ValueError("path horizon needs S < T")
        t = np.array(self.times, dtype=float)
        z = np.array(self.sizes, dtype=float)
        if t.shape != z.shape or t.ndim != 1:
            raise ValueError("times and sizes must be matching 1-D arrays")
        if t.size and (np.any(np.diff(t) <= 0) or t[0] <= self.S or t[-1] > self.T):
            raise ValueError("jump times must be strictly increasing inside (S, T]")
        if np.any(np.abs(z) <= self.eps):
            raise ValueError("every jump must satisfy |z| > eps")
        t.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "sizes", z)

    @property
    def n_jumps(self) -> int:
        return int(self.times.size)

    @property
    def measure_id(self) -> str:
        return repr(self.measure)

    def window(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        """Jumps with ``a < t <= b``."""
        sel = (self.times > a) & (self.times <= b)
        return self.times[sel], self.sizes[sel]

    def with_points(self, times, sizes) -> "JumpPath":
        t = np.concatenate([self.times, np.atleast_1d(times)])
        z = np.concatenate([self.sizes, np.atleast_1d(sizes)])
        order = np.argsort(t, kind="stable")
        return JumpPath(self.S, self.T, self.eps, t[order], z[order], self.measure)


def _poisson_times(rate: float, length: float, rng) -> np.ndarray:
    """Arrival times in (0, length] of a rate-``rate`` Poisson process, by exponential spacings."""
    if rate <= 0.0:
        return np.empty(0)
    mean = rate * length
    chunk = int(mean + 6.0 * math.sqrt(mean) + 8)
    arrivals = np.cumsum(rng.exponential(1.0 / rate, chunk))
    while arrivals[-1] <= length:
        more = arrivals[-1] + np.cumsum(rng.exponential(1.0 / rate, chunk))
        arrivals = np.concatenate([arrivals, more])
    return arrivals[arrivals <= length]


def generate_path(measure: LevyMeasure, S: float, T: float, eps: float,
                  rng: RandomStream) -> JumpPath:
    """Simulate N on ``(S, T] x {|z| > eps}``: exponential spacings, then i.i.d. tail marks."""
    if not S < T:
        raise ValueError("generate_path needs S < T")
    if not eps > 0:
        raise ValueError("eps must be positive")
    rate = measure.tail_mass(eps)
    while True:
        t = S + _poisson_times(rate, T - S, rng)
        if t.size < 2 or np.all(np.diff(t) > 0):
            break
    z = measure.sample_tail(eps, rng, t.size) if t.size else np.empty(0)
    return JumpPath(S, T, eps, t, z, measure)


@dataclass(frozen=True)
class PathBatch:
    """Many paths in compressed row storage: path ``p`` owns ``times[offsets[p]:offsets[p+1]]``."""

    S: float
    T: float
    eps: float
    offsets: np.ndarray
    times: np.ndarray
    sizes: np.ndarray
    measure: LevyMeasure | None = field(default=None, compare=False)

    def __len__(self):
        return self.offsets.size - 1

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def path(self, p: int) -> JumpPath:
        a, b = self.offsets[p], self.offsets[p + 1]
        return JumpPath(self.S, self.T, self.eps, self.times[a:b], self.sizes[a:b], self.measure)

    def padded(self, fill_time: float = math.inf) -> tuple[np.ndarray, np.ndarray]:
        """``(P, K)`` arrays of jump times and sizes, padded with ``fill_time`` and 0."""
        counts = self.counts
        K = int(counts.max()) if counts.size else 0
        tt = np.full((len(self), max(K, 1)), fill_time)
        zz = np.zeros((len(self), max(K, 1)))
        rows = np.repeat(np.arange(len(self)), counts)
        cols = np.arange(self.times.size) - np.repeat(self.offsets[:-1], counts)
        tt[rows, cols] = self.times
        zz[rows, cols] = self.sizes
        return tt, zz

    @classmethod
    def from_paths(cls, paths: Sequence[JumpPath]) -> "PathBatch":
        first = paths[0]
        counts = np.array([p.n_jumps for p in paths])
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return cls(first.S, first.T, first.eps, offsets,
                   np.concatenate([p.times for p in paths]),
                   np.concatenate([p.sizes for p in paths]), first.measure)


def generate_batch(measure: LevyMeasure, S: float, T: float, eps: float, seed: int,
                   indices: Iterable[int]) -> PathBatch:
    """One path per index, each from ``substream(seed, index)``."""
    return PathBatch.from_paths([generate_path(measure, S, T, eps, substream(seed, int(i)))
                                 for i in indices])


# -- integrals ------------------------------------------------------------------

def integrate_N(path: JumpPath, kernel: StepKernel) -> float:
    """``N(φ) = Σ_i φ(t_i, z_i)``, an exact finite sum."""
    kernel.check_horizon(path.S, path.T)
    if path.n_jumps == 0:
        return 0.0
    return float(np.sum(kernel(path.times, path.sizes)))


def compensator_integral(measure: LevyMeasure, kernel: StepKernel, eps: float | None = None) -> float:
    """``∫∫ φ(t, z) dt ν(dz)``, optionally with ν restricted to ``{|z| > eps}``.

    Raises
    ------
    DivergentCompensator
        Without ``eps``, if a size set reaches 0 where ν has infinite mass.
    """
    return float(sum(r.weight * (r.t1 - r.t0) * r.size_mass(measure, eps)
                     for r in kernel.rectangles if r.weight != 0.0))


def integrate_compensated(path: JumpPath, kernel: StepKernel,
                          measure: LevyMeasure | None = None) -> float:
    """``Ñ(φ) = N(φ) - ∫∫ φ dt ν_eps(dz)`` on the simulated (truncated) intensity."""
    measure = path.measure if measure is None else measure
    if measure is None:
        raise ValueError("path carries no measure; pass one explicitly")
    return integrate_N(path, kernel) - compensator_integral(measure, kernel, path.eps)


# -- CSV dump ---------------------------------------------------------------------

def write_paths_csv(paths: Sequence[JumpPath], fh) -> None:
    """Write ``path_id,t,z`` rows, times ascending within each path."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["path_id", "t", "z"])
    for pid, p in enumerate(paths):
        for t, z in zip(p.times, p.sizes):
            w.writerow([pid, repr(float(t)), repr(float(z))])


def read_paths_csv(fh, S: float, T: float, eps: float, measure: LevyMeasure | None = None,
                   n_paths: int | None = None) -> list[JumpPath]:
    reader = csv.DictReader(fh)
    if reader.fieldnames != ["path_id", "t", "z"]:
        raise ValueError(f"unexpected header {reader.fieldnames}")
    rows: dict[int, list] = {}
    for row in reader:
        rows.setdefault(int(row["path_id"]), []).append((float(row["t"]), float(row["z"])))
    count = (max(rows) + 1 if rows else 0) if n_paths is None else n_paths
    out = []
    for pid in range(count):
        pts = rows.get(pid, [])
        t = np.array([a for a, _ in pts])
        z = np.array([b for _, b in pts])
        out.append(JumpPath(S, T, eps, t, z, measure))
    return out
