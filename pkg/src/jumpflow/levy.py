"""Lévy measures on R \\ {0}: truncated and tempered stable laws, compound Poisson.

Each measure exposes its total and interval masses, absolute and signed
moments, an exact sampler for the region ``{|z| > eps}`` and a quadrature rule
for integrals ``∫_{|z|>eps} h(z) ν(dz)``.  Closed forms are used where they
exist; everything else goes through adaptive Gauss–Kronrod quadrature split at
the origin and at the support edges.
"""
from __future__ import annotations

import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special, stats

from .errors import DivergentMoment, EmptyTail

QUAD_ABS = 1e-14
QUAD_REL = 1e-12


def _quad(fn: Callable[[float], float], a: float, b: float, points=None) -> float:
    """Adaptive quadrature returning ``inf`` when the integral evidently diverges."""
    if not a < b:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            kw = {"epsabs": QUAD_ABS, "epsrel": QUAD_REL, "limit": 400}
            if points is not None and math.isfinite(a) and math.isfinite(b):
                pts = [p for p in points if a < p < b]
                if pts:
                    kw["points"] = pts
            value, _ = integrate.quad(fn, a, b, **kw)
        except (integrate.IntegrationWarning, ZeroDivisionError, OverflowError):
            return math.inf
    return value if math.isfinite(value) else math.inf


def upper_gamma(s: float, x: float) -> float:
    """Upper incomplete gamma ``Γ(s, x)`` for real ``s`` (negative allowed) and ``x > 0``."""
    if x <= 0:
        raise ValueError("x must be positive")
    if s > 0:
        return float(special.gammaincc(s, x) * special.gamma(s))
    if s == 0:
        return float(special.exp1(x))
    # Γ(s, x) = (Γ(s + 1, x) - x^s e^{-x}) / s
    return (upper_gamma(s + 1, x) - x ** s * math.exp(-x)) / s


def _gauss_legendre(n: int, a: float, b: float):
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


class LevyMeasure(ABC):
    """Jump intensity ν on R \\ {0} with ``∫ min(1, z²) ν(dz) < ∞``."""

    kind: str = "abstract"
    symmetric: bool = False
    infinite_activity: bool = False

    # -- masses --------------------------------------------------------------
    @abstractmethod
    def positive_mass(self, a: float, b: float) -> float:
        """ν((a, b)) for ``0 <= a < b <= inf``."""

    @abstractmethod
    def negative_mass(self, a: float, b: float) -> float:
        """ν((-b, -a)) for ``0 <= a < b <= inf``."""

    def atom(self, z: float) -> float:
        return 0.0

    def open_mass(self, lo: float, hi: float) -> float:
        """ν((lo, hi)), infinite when the interval accumulates at 0 for infinite activity."""
        if not lo < hi:
            return 0.0
        total = 0.0
        if hi > 0:
            total += self.positive_mass(max(lo, 0.0), hi)
        if lo < 0:
            total += self.negative_mass(max(-hi, 0.0), -lo)
        return total

    def interval_mass(self, lo: float, hi: float, left_closed: bool = False,
                      right_closed: bool = True) -> float:
        total = self.open_mass(lo, hi)
        if left_closed and lo != 0 and math.isfinite(lo):
            total += self.atom(lo)
        if right_closed and hi != 0 and math.isfinite(hi) and hi != lo:
            total += self.atom(hi)
        return total

    def tail_mass(self, eps: float) -> float:
        if eps <= 0:
            raise ValueError("eps must be positive")
        return self.positive_mass(eps, math.inf) + self.negative_mass(eps, math.inf)

    # -- moments -------------------------------------------------------------
    @abstractmethod
    def moment(self, eta: float) -> float:
        """∫ |z|^eta ν(dz); raises :class:`DivergentMoment` when infinite."""

    @abstractmethod
    def inner_moment(self, eta: float, eps: float) -> float:
        """∫_{0<|z|<=eps} |z|^eta ν(dz)."""

    @abstractmethod
    def signed_tail_moment(self, k: int, eps: float) -> float:
        """∫_{|z|>eps} z^k ν(dz) evaluated with signs (integer ``k``)."""

    # -- simulation ----------------------------------------------------------
    @abstractmethod
    def _sample_tail(self, eps: float, rng, n: int) -> np.ndarray:
        ...

    def sample_tail(self, eps: float, rng, size=None):
        if self.tail_mass(eps) <= 0.0:
            raise EmptyTail(f"no mass beyond eps={eps} for {self!r}")
        n = 1 if size is None else int(np.prod(size))
        z = self._sample_tail(eps, rng, n)
        return float(z[0]) if size is None else z.reshape(size)

    @abstractmethod
    def tail_quadrature(self, eps: float, n: int = 16) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights with ``Σ w h(z) ≈ ∫_{|z|>eps} h(z) ν(dz)``."""

    @abstractmethod
    def to_config(self) -> dict:
        ...

    def _check_levy_integrability(self):
        small = self.inner_moment(2.0, 1.0)
        large = self.positive_mass(1.0, math.inf) + self.negative_mass(1.0, math.inf)
        if not (math.isfinite(small) and math.isfinite(large)):
            raise ValueError(f"{self!r} violates ∫ min(1, z²) ν(dz) < ∞")


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")


class TruncatedStable(LevyMeasure):
    """Symmetric density ``|z|^{-(alpha+1)}`` on ``0 < |z| <= cutoff``."""

    kind = "truncated_stable"
    symmetric = True
    infinite_activity = True

    def __init__(self, alpha: float, cutoff: float = 1.0):
        _check_alpha(alpha)
        if not cutoff > 0:
            raise ValueError("cutoff must be positive")
        self.alpha = float(alpha)
        self.cutoff = float(cutoff)
        self._check_levy_integrability()

    def __repr__(self):
        return f"TruncatedStable(alpha={self.alpha}, cutoff={self.cutoff})"

    def density(self, z):
        z = np.abs(np.asarray(z, dtype=float))
        with np.errstate(divide="ignore"):
            d = np.where((z > 0) & (z <= self.cutoff), z ** (-self.alpha - 1.0), 0.0)
        return d

    def positive_mass(self, a, b):
        b = min(b, self.cutoff)
        if a >= b:
            return 0.0
        if a <= 0.0:
            return math.inf
        return (a ** -self.alpha - b ** -self.alpha) / self.alpha

    negative_mass = positive_mass

    def _branch_power(self, s: float, lo: float, hi: float) -> float:
        # ∫_lo^hi z^{s-1} dz
        if s == 0:
            return math.log(hi / lo)
        return (hi ** s - lo ** s) / s

    def moment(self, eta):
        if eta < 0:
            raise ValueError("eta must be nonnegative")
        if eta <= self.alpha:
            raise DivergentMoment(f"∫|z|^{eta} ν(dz) diverges at 0 for alpha={self.alpha}")
        return 2.0 * self.cutoff ** (eta - self.alpha) / (eta - self.alpha)

    def inner_moment(self, eta, eps):
        if eta <= self.alpha:
            raise DivergentMoment(f"∫_{{|z|<=eps}}|z|^{eta} ν(dz) diverges for alpha={self.alpha}")
        e = min(eps, self.cutoff)
        return 2.0 * e ** (eta - self.alpha) / (eta - self.alpha)

    def signed_tail_moment(self, k, eps):
        if eps >= self.cutoff:
            return 0.0
        if k % 2:
            right = self._branch_power(k - self.alpha, eps, self.cutoff)
            left = self._branch_power(k - self.alpha, eps, self.cutoff)
            return right - left
        return 2.0 * self._branch_power(k - self.alpha, eps, self.cutoff)

    def _sample_tail(self, eps, rng, n):
        u = rng.random((2, n))
        a = self.alpha
        lo, hi = eps ** -a, self.cutoff ** -a
        z = (lo - u[0] * (lo - hi)) ** (-1.0 / a)
        return np.where(u[1] < 0.5, z, -z)

    def tail_quadrature(self, eps, n=16):
        if eps >= self.cutoff:
            return np.empty(0), np.empty(0)
        u, w = _gauss_legendre(n, math.log(eps), math.log(self.cutoff))
        z = np.exp(u)
        wz = w * z ** -self.alpha
        return np.concatenate([-z[::-1], z]), np.concatenate([wz[::-1], wz])

    def to_config(self):
        return {"kind": self.kind, "alpha": self.alpha, "cutoff": self.cutoff}


class TemperedStable(LevyMeasure):
    """Symmetric density ``|z|^{-(alpha+1)} exp(-beta |z|)`` on R \\ {0}."""

    kind = "tempered_stable"
    symmetric = True
    infinite_activity = True

    def __init__(self, alpha: float, beta: float):
        _check_alpha(alpha)
        if not beta > 0:
            raise ValueError("beta must be positive")
        self.alpha = float(alpha)
        self.beta = float(beta)
        self._check_levy_integrability()

    def __repr__(self):
        return f"TemperedStable(alpha={self.alpha}, beta={self.beta})"

    def density(self, z):
        z = np.abs(np.asarray(z, dtype=float))
        with np.errstate(divide="ignore"):
            return np.where(z > 0, z ** (-self.alpha - 1.0) * np.exp(-self.beta * z), 0.0)

    def _branch(self, s: float, lo: float) -> float:
        # ∫_lo^∞ z^{s-1} e^{-βz} dz
        if lo <= 0:
            if s <= 0:
                return math.inf
            return special.gamma(s) * self.beta ** -s
        return self.beta ** -s * upper_gamma(s, self.beta * lo)

    def positive_mass(self, a, b):
        if a >= b:
            return 0.0
        if a <= 0.0:
            return math.inf
        upper = 0.0 if math.isinf(b) else self._branch(-self.alpha, b)
        return self._branch(-self.alpha, a) - upper

    negative_mass = positive_mass

    def moment(self, eta):
        if eta < 0:
            raise ValueError("eta must be nonnegative")
        if eta <= self.alpha:
            raise DivergentMoment(f"∫|z|^{eta} ν(dz) diverges at 0 for alpha={self.alpha}")
        return 2.0 * special.gamma(eta - self.alpha) * self.beta ** (self.alpha - eta)

    def inner_moment(self, eta, eps):
        if eta <= self.alpha:
            raise DivergentMoment(f"∫_{{|z|<=eps}}|z|^{eta} ν(dz) diverges for alpha={self.alpha}")
        s = eta - self.alpha
        return 2.0 * self.beta ** -s * special.gammainc(s, self.beta * eps) * special.gamma(s)

    def signed_tail_moment(self, k, eps):
        branch = self._branch(k - self.alpha, eps)
        if k % 2:
            return branch - branch
        return 2.0 * branch

    def _sample_tail(self, eps, rng, n):
        out = np.empty(n)
        filled = 0
        a, b = self.alpha, self.beta
        while filled < n:
            m = max(16, 2 * (n - filled))
            u = rng.random((3, m))
            z = eps * u[0] ** (-1.0 / a)
            keep = u[1] < np.exp(-b * (z - eps))
            z = np.where(u[2][keep] < 0.5, z[keep], -z[keep])
            take = min(z.size, n - filled)
            out[filled:filled + take] = z[:take]
            filled += take
        return out

    def tail_quadrature(self, eps, n=16):
        # log variable up to the tempering scale, then panels in z out to e^{-40}
        knee = max(eps, 1.0 / self.beta)
        zs, ws = [], []
        if eps < knee:
            u, w = _gauss_legendre(n, math.log(eps), math.log(knee))
            zs.append(np.exp(u))
            ws.append(w * np.exp(u) ** -self.alpha * np.exp(-self.beta * np.exp(u)))
        edges = knee + np.array([0.0, 2.0, 6.0, 14.0, 40.0]) / self.beta
        for a, b in zip(edges[:-1], edges[1:]):
            z, w = _gauss_legendre(n, a, b)
            zs.append(z)
            ws.append(w * self.density(z))
        z, wz = np.concatenate(zs), np.concatenate(ws)
        return np.concatenate([-z[::-1], z]), np.concatenate([wz[::-1], wz])

    def to_config(self):
        return {"kind": self.kind, "alpha": self.alpha, "beta": self.beta}


class CompoundPoisson(LevyMeasure):
    """Finite intensity ``rate * P_Z`` for a jump-size law with ``P(Z = 0) = 0``.

    The law is either discrete (``sizes`` with optional ``probs``) or a frozen
    continuous ``scipy.stats`` distribution passed as ``dist``.
    """

    kind = "compound_poisson"
    infinite_activity = False

    def __init__(self, rate: float, sizes=None, probs=None, dist=None, symmetric=None):
        if not rate >= 0:
            raise ValueError("rate must be nonnegative")
        if (sizes is None) == (dist is None):
            raise ValueError("give exactly one of sizes or dist")
        self.rate = float(rate)
        self.dist = dist
        if sizes is not None:
            sizes = np.atleast_1d(np.asarray(sizes, dtype=float))
            if probs is None:
                probs = np.full(sizes.size, 1.0 / sizes.size)
            probs = np.atleast_1d(np.asarray(probs, dtype=float))
            if probs.shape != sizes.shape or np.any(probs < 0) or not math.isclose(probs.sum(), 1.0):
                raise ValueError("probs must be a probability vector matching sizes")
            if np.any(sizes == 0):
                raise ValueError("jump sizes must be nonzero")
            uniq, inv = np.unique(sizes, return_inverse=True)
            self.sizes = uniq
            self.probs = np.bincount(inv, weights=probs)
            if symmetric is None:
                mirror = np.interp(-uniq[::-1], uniq, self.probs, left=-1, right=-1)
                symmetric = bool(np.array_equal(-uniq[::-1], uniq) and np.allclose(mirror, self.probs, rtol=0, atol=1e-15))
        else:
            self.sizes = self.probs = None
            if symmetric is None:
                xs = np.array([0.1, 0.5, 1.0, 2.0, 5.0])
                symmetric = bool(np.allclose(dist.cdf(-xs), dist.sf(xs), rtol=1e-12, atol=1e-15))
        self.symmetric = bool(symmetric)
        self._check_levy_integrability()

    def __repr__(self):
        if self.sizes is not None:
            return f"CompoundPoisson(rate={self.rate}, sizes={self.sizes.tolist()}, probs={self.probs.tolist()})"
        return f"CompoundPoisson(rate={self.rate}, dist={self.dist.dist.name})"

    @property
    def discrete(self) -> bool:
        return self.sizes is not None

    def positive_mass(self, a, b):
        if a >= b:
            return 0.0
        if self.discrete:
            sel = (self.sizes > a) & (self.sizes < b)
            return self.rate * float(self.probs[sel].sum())
        return self.rate * float(self.dist.cdf(b) - self.dist.cdf(a))

    def negative_mass(self, a, b):
        if a >= b:
            return 0.0
        if self.discrete:
            sel = (self.sizes > -b) & (self.sizes < -a)
            return self.rate * float(self.probs[sel].sum())
        return self.rate * float(self.dist.cdf(-a) - self.dist.cdf(-b))

    def atom(self, z):
        if not self.discrete:
            return 0.0
        hit = self.sizes == z
        return self.rate * float(self.probs[hit].sum())

    def _expect(self, fn, lo=0.0, hi=math.inf, sign=1) -> float:
        pdf = self.dist.pdf
        return self.rate * _quad(lambda x: fn(x) * pdf(sign * x), lo, hi)

    def moment(self, eta):
        if eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.discrete:
            return self.rate * float(np.sum(self.probs * np.abs(self.sizes) ** eta))
        value = self._expect(lambda x: x ** eta) + self._expect(lambda x: x ** eta, sign=-1)
        if not math.isfinite(value):
            raise DivergentMoment(f"∫|z|^{eta} ν(dz) diverges for {self!r}")
        return value

    def inner_moment(self, eta, eps):
        if self.discrete:
            sel = np.abs(self.sizes) <= eps
            return self.rate * float(np.sum(self.probs[sel] * np.abs(self.sizes[sel]) ** eta))
        return self._expect(lambda x: x ** eta, 0.0, eps) + self._expect(lambda x: x ** eta, 0.0, eps, -1)

    def signed_tail_moment(self, k, eps):
        if self.discrete:
            sel = np.abs(self.sizes) > eps
            return self.rate * float(np.sum(self.probs[sel] * self.sizes[sel] ** k))
        right = self._expect(lambda x: x ** k, eps)
        left = self._expect(lambda x: x ** k, eps, sign=-1)
        if k % 2 and self.symmetric:
            return 0.0
        return right + (-1) ** k * left

    def _sample_tail(self, eps, rng, n):
        if self.discrete:
            sel = np.abs(self.sizes) > eps
            p = self.probs[sel] / self.probs[sel].sum()
            idx = np.searchsorted(np.cumsum(p), rng.random(n), side="right")
            return self.sizes[sel][np.minimum(idx, p.size - 1)]
        pl, pr = float(self.dist.cdf(-eps)), float(self.dist.sf(eps))
        u = rng.random((2, n))
        left = u[0] < pl / (pl + pr)
        return np.where(left, self.dist.ppf(u[1] * pl), self.dist.isf(u[1] * pr))

    def tail_quadrature(self, eps, n=16):
        if self.discrete:
            sel = np.abs(self.sizes) > eps
            return self.sizes[sel].copy(), self.rate * self.probs[sel]
        zs, ws = [], []
        for sign in (-1.0, 1.0):
            # branch in x = sign * z, cut where the law has mass below 1e-17
            edge = self.dist.support()[1] if sign > 0 else -self.dist.support()[0]
            lo = eps
            hi = float(min(edge, self.dist.isf(1e-17) if sign > 0 else -self.dist.ppf(1e-17)))
            if not lo < hi:
                continue
            for a, b in zip(np.linspace(lo, hi, 9)[:-1], np.linspace(lo, hi, 9)[1:]):
                z, w = _gauss_legendre(n, a, b)
                zs.append(sign * z)
                ws.append(w * self.dist.pdf(sign * z))
        if not zs:
            return np.empty(0), np.empty(0)
        z, w = np.concatenate(zs), np.concatenate(ws)
        order = np.argsort(z)
        return z[order], self.rate * w[order]

    def to_config(self):
        if self.discrete:
            return {"kind": self.kind, "rate": self.rate, "sizes": self.sizes.tolist(),
                    "probs": self.probs.tolist()}
        return {"kind": self.kind, "rate": self.rate, "dist": self.dist.dist.name,
                "dist_args": list(self.dist.args), "dist_kwds": dict(self.dist.kwds)}


class DensityMeasure(LevyMeasure):
    """User-supplied density on ``support``; everything is computed by quadrature.

    ``zero_index`` / ``inf_index`` optionally declare power-law behaviour
    ``|z|^{-(index+1)}`` of the density near 0 and near infinity, which lets
    divergent moments be reported exactly instead of detected numerically.
    Sampling uses rejection from a uniform proposal and needs a bounded support.
    """

    kind = "density"

    def __init__(self, density: Callable, support=(-math.inf, math.inf), zero_index=None,
                 inf_index=None, symmetric: bool = False, name: str = "density"):
        self.density = density
        self.support = (float(support[0]), float(support[1]))
        self.zero_index = zero_index
        self.inf_index = inf_index
        self.symmetric = bool(symmetric)
        self.name = name
        touches_zero = self.support[0] <= 0 <= self.support[1]
        if zero_index is not None:
            self.infinite_activity = touches_zero and zero_index >= 0
        else:
            near = self.positive_mass(0.0, 1e-3) + self.negative_mass(0.0, 1e-3)
            self.infinite_activity = not math.isfinite(near)
        self._check_levy_integrability()

    def __repr__(self):
        return f"DensityMeasure({self.name}, support={self.support})"

    def _branch_integral(self, fn, a, b, sign):
        lo, hi = (a, b) if sign > 0 else (-b, -a)
        lo, hi = max(lo, self.support[0]), min(hi, self.support[1])
        if not lo < hi:
            return 0.0
        if sign > 0:
            return _quad(lambda x: fn(x) * self.density(x), max(a, lo), min(b, hi))
        return _quad(lambda x: fn(x) * self.density(-x), max(a, -hi), min(b, -lo))

    def positive_mass(self, a, b):
        if a >= b:
            return 0.0
        if a <= 0 and self.zero_index is not None and self.zero_index >= 0 and self.support[1] > 0:
            return math.inf
        return self._branch_integral(lambda x: 1.0, a, b, 1)

    def negative_mass(self, a, b):
        if a >= b:
            return 0.0
        if a <= 0 and self.zero_index is not None and self.zero_index >= 0 and self.support[0] < 0:
            return math.inf
        return self._branch_integral(lambda x: 1.0, a, b, -1)

    def _moment_diverges(self, eta, near_zero=True, near_inf=True) -> bool:
        if near_zero and self.zero_index is not None and eta <= self.zero_index:
            return True
        unbounded = math.isinf(self.support[0]) or math.isinf(self.support[1])
        if near_inf and unbounded and self.inf_index is not None and eta >= self.inf_index:
            return True
        return False

    def moment(self, eta):
        if eta < 0:
            raise ValueError("eta must be nonnegative")
        if self._moment_diverges(eta):
            raise DivergentMoment(f"∫|z|^{eta} ν(dz) diverges for {self!r}")
        value = (self._branch_integral(lambda x: x ** eta, 0.0, math.inf, 1)
                 + self._branch_integral(lambda x: x ** eta, 0.0, math.inf, -1))
        if not math.isfinite(value):
            raise DivergentMoment(f"∫|z|^{eta} ν(dz) diverges for {self!r}")
        return value

    def inner_moment(self, eta, eps):
        if self._moment_diverges(eta, near_inf=False):
            raise DivergentMoment(f"∫_{{|z|<=eps}}|z|^{eta} ν(dz) diverges for {self!r}")
        value = (self._branch_integral(lambda x: x ** eta, 0.0, eps, 1)
                 + self._branch_integral(lambda x: x ** eta, 0.0, eps, -1))
        if not math.isfinite(value):
            raise DivergentMoment(f"∫_{{|z|<=eps}}|z|^{eta} ν(dz) diverges for {self!r}")
        return value

    def signed_tail_moment(self, k, eps):
        right = self._branch_integral(lambda x: x ** k, eps, math.inf, 1)
        left = self._branch_integral(lambda x: x ** k, eps, math.inf, -1)
        if k % 2 and self.symmetric:
            return right - right
        return right + (-1) ** k * left

    def _sample_tail(self, eps, rng, n):
        lo, hi = self.support
        if math.isinf(lo) or math.isinf(hi):
            raise NotImplementedError("rejection sampling needs a bounded support")
        grid = np.concatenate([np.linspace(max(lo, -hi), -eps, 2001), np.linspace(eps, hi, 2001)])
        grid = grid[(grid >= lo) & (grid <= hi) & (np.abs(grid) > eps)]
        bound = 1.1 * float(np.max(self.density(grid)))
        width_r, width_l = max(hi - eps, 0.0), max(-eps - lo, 0.0)
        out = np.empty(n)
        filled = 0
        while filled < n:
            m = max(64, 4 * (n - filled))
            u = rng.random((3, m))
            z = np.where(u[0] < width_r / (width_r + width_l),
                         eps + u[1] * width_r, -eps - u[1] * width_l)
            keep = u[2] * bound < self.density(z)
            z = z[keep]
            take = min(z.size, n - filled)
            out[filled:filled + take] = z[:take]
            filled += take
        return out

    def tail_quadrature(self, eps, n=16):
        nodes, weights = [], []
        pieces = []
        if self.support[0] < -eps:
            pieces.append((max(self.support[0], -1e6), -eps))
        if self.support[1] > eps:
            pieces.append((eps, min(self.support[1], 1e6)))
        for a, b in pieces:
            z, w = _gauss_legendre(n, a, b)
            nodes.append(z)
            weights.append(w * self.density(z))
        if not nodes:
            return np.empty(0), np.empty(0)
        return np.concatenate(nodes), np.concatenate(weights)

    def to_config(self):
        return {"kind": self.kind, "name": self.name, "support": list(self.support)}


# -- module-level operations --------------------------------------------------

def nu_moment(measure: LevyMeasure, eta: float) -> float:
    """Return ``∫ |z|^eta ν(dz)``.

    Raises
    ------
    DivergentMoment
        If the integral is infinite (for stable-like laws: ``eta <= alpha``).
    """
    return measure.moment(eta)


def tail_mass(measure: LevyMeasure, eps: float) -> float:
    """Return ``ν({|z| > eps})``, the jump rate after truncation of small jumps."""
    return measure.tail_mass(eps)


def sample_tail(measure: LevyMeasure, eps: float, rng, size=None):
    """Draw jump sizes from ν restricted to ``{|z| > eps}`` and normalised."""
    return measure.sample_tail(eps, rng, size)


def small_jump_variance(measure: LevyMeasure, eps: float, duration: float = 1.0) -> float:
    """Variance ``duration * ∫_{|z|<=eps} z² ν(dz)`` of the dropped compensated small jumps."""
    return duration * measure.inner_moment(2.0, eps)


def default_eps(measure: LevyMeasure, budget: float = 1e-4) -> float:
    """Largest eps (to 1e-3 relative) whose small-jump variance rate is at most ``budget``."""
    lo, hi = 1e-12, 1.0
    while measure.inner_moment(2.0, hi) <= budget and hi < 1e6:
        hi *= 2.0
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if measure.inner_moment(2.0, mid) <= budget:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1.001:
            break
    return lo


@dataclass(frozen=True)
class HypothesisProfile:
    """Integrability exponents and growth constants of the moment hypotheses.

    Only ``p``, ``q``, ``k`` and the flow-moment exponents enter the range of
    jump-size moments required of ν; the remaining constants are carried for
    reporting.
    """

    p: float
    q: float
    k: float = 1.0
    m_X_p: float = 0.0
    m_X_p2: float = 0.0
    m_dX: float = 0.0
    m_dX2: float = 0.0
    m_d2X: float = 0.0
    m_d2X2: float = 0.0
    m_sigma: float = 0.0
    m_mu: float = 0.0
    C_mu: float = 1.0
    C_f: float = 1.0
    C_sigma: float = 1.0
    C_X: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.p > 4:
            raise ValueError("p must exceed 4")
        if not 0 < self.q < self.p / 2 - 2:
            raise ValueError("q must lie in (0, p/2 - 2)")
        if not self.k >= 1:
            raise ValueError("k must be >= 1")
        exps = [self.m_X_p, self.m_X_p2, self.m_dX, self.m_dX2, self.m_d2X, self.m_d2X2,
                self.m_sigma, self.m_mu]
        if any(not (math.isfinite(e) and e >= 0) for e in exps):
            raise ValueError("exponents must be finite and nonnegative")
        for name in ("C_mu", "C_f", "C_sigma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def eta_range(self) -> tuple[float, float]:
        p, q = self.p, self.q
        top = self.k * (2.0 + (2.0 * self.m_X_p * q + max(self.m_dX, self.m_d2X) * (p - 2.0 * (1.0 + q))) / p)
        return 2.0, top


@dataclass(frozen=True)
class NuMomentReport:
    entries: tuple  # (eta, power, value or None)
    satisfied: bool

    def to_dict(self):
        return {"satisfied": self.satisfied,
                "entries": [{"eta": e, "power": pw, "value": v} for e, pw, v in self.entries]}


def check_nu_moments(measure: LevyMeasure, profile: HypothesisProfile) -> NuMomentReport:
    """Evaluate ``∫|z|^eta`` and ``∫|z|^{2 eta}`` at both ends of the required eta range.

    The set of finite absolute moments is an interval (log-convexity), so the
    endpoints decide the whole range.  Divergences are reported, not raised.
    """
    lo, hi = profile.eta_range()
    entries = []
    for eta in sorted({lo, hi}):
        for power in (eta, 2.0 * eta):
            try:
                value = measure.moment(power)
            except DivergentMoment:
                value = None
            entries.append((eta, power, value))
    return NuMomentReport(tuple(entries), all(v is not None for _, _, v in entries))


def measure_from_config(cfg: dict) -> LevyMeasure:
    """Build a measure from its JSON config block (see ``to_config``)."""
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    if kind == "truncated_stable":
        return TruncatedStable(cfg.pop("alpha"), cfg.pop("cutoff", 1.0))
    if kind == "tempered_stable":
        return TemperedStable(cfg.pop("alpha"), cfg.pop("beta"))
    if kind == "compound_poisson":
        rate = cfg.pop("rate")
        if "sizes" in cfg:
            return CompoundPoisson(rate, sizes=cfg.pop("sizes"), probs=cfg.pop("probs", None))
        dist = getattr(stats, cfg.pop("dist"))(*cfg.pop("dist_args", []), **cfg.pop("dist_kwds", {}))
        return CompoundPoisson(rate, dist=dist)
    raise ValueError(f"unknown measure kind {kind!r}")
