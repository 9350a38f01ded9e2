"""Pathwise check of the Itô formula for jump-adapted Euler paths.

For ``X_t = x + ∫ A_r dr + ∫∫ B_{r,z} Ñ(dr, dz)`` simulated on a path with
finitely many retained jumps, the two sides

    f(X_t) - f(X_S)
    ∫ f'(X_r) A_r dr + ∫∫ (f(X_r + B) - f(X_r) - B f'(X_r)) ν(dz) dr
        + Σ_jumps (f(X_{r-} + B) - f(X_{r-})) - ∫∫ (f(X_r + B) - f(X_r)) ν(dz) dr

are computed separately.  The jump terms are exact sums; the Lebesgue terms
use the midpoint of each step of the piecewise-linear Euler interpolant in
``r`` and the tail quadrature of ν in ``z``.  ``A_r = A(r, X_r)`` and
``B_{r,z} = B(r, X_r, z)`` are evaluated along that interpolant, so the
residual measures the Euler scheme's freezing of the coefficients: it is
O(1/nsteps) for state-dependent drifts and at rounding level when the
coefficients do not vary along steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonFiniteState
from .flow import CoefficientSet, Dynamics, plan_events
from .levy import LevyMeasure
from .mc import substream
from .prm import JumpPath, PathBatch, generate_batch


@dataclass(frozen=True)
class TestFunction:
    """A C² test function with its two derivatives, all vectorised.

    ``C_f`` and ``q`` are the growth constants of
    ``|f|/(1+|x|) + |f'| + |f''| <= C_f (1 + |x|^q)``.
    """

    __test__ = False  # not a pytest class

    f: Callable
    df: Callable
    d2f: Callable
    C_f: float = 1.0
    q: float = 0.0
    name: str = "f"

    def __call__(self, x):
        return self.f(x)

    def check_derivatives(self, n: int = 100, seed: int = 0, scale: float = 3.0,
                          rtol: float = 1e-6) -> float:
        rng = np.random.default_rng(seed)
        x = rng.uniform(-scale, scale, n)
        h = 1e-5 * (1.0 + np.abs(x))
        worst = 0.0
        for g, dg in ((self.f, self.df), (self.df, self.d2f)):
            fd = (g(x + h) - g(x - h)) / (2.0 * h)
            an = dg(x)
            worst = max(worst, float(np.max(np.abs(fd - an) / np.maximum(1.0, np.abs(an)))))
        if not worst <= rtol:
            raise ValueError(f"{self.name}: derivative mismatch {worst:.3g} exceeds {rtol}")
        return worst

    def growth_ok(self, x_max: float = 1e3, n: int = 61) -> bool:
        x = np.concatenate([-np.logspace(-3, math.log10(x_max), n), np.logspace(-3, math.log10(x_max), n)])
        lhs = np.abs(self.f(x)) / (1.0 + np.abs(x)) + np.abs(self.df(x)) + np.abs(self.d2f(x))
        return bool(np.all(lhs <= self.C_f * (1.0 + np.abs(x) ** self.q) * (1.0 + 1e-12)))

    def scaled(self, c: float) -> "TestFunction":
        return TestFunction(lambda x: c * self.f(x), lambda x: c * self.df(x),
                            lambda x: c * self.d2f(x), abs(c) * self.C_f, self.q, f"{c}*{self.name}")

    def shifted(self, c: float) -> "TestFunction":
        return TestFunction(lambda x: self.f(x) + c, self.df, self.d2f, self.C_f + abs(c),
                            self.q, f"{self.name}+{c}")

    @classmethod
    def identity(cls):
        return cls(lambda x: 1.0 * x, lambda x: np.ones_like(x), lambda x: np.zeros_like(x), 2.0, 0.0, "x")

    @classmethod
    def square(cls):
        return cls(lambda x: x * x, lambda x: 2.0 * x, lambda x: np.full_like(x, 2.0), 4.0, 1.0, "x^2")

    @classmethod
    def sine(cls, freq=1.0):
        """``sin(freq x)``; ``freq`` may be an array broadcasting against the state."""
        w = np.asarray(freq, dtype=float)
        c = 1.0 + float(np.max(np.abs(w))) + float(np.max(w * w))
        return cls(lambda x: np.sin(w * x), lambda x: w * np.cos(w * x),
                   lambda x: -w * w * np.sin(w * x), c, 0.0, "sin")


@dataclass(frozen=True)
class ItoTerms:
    """Per-path terms of both sides; arrays of shape ``(P,)``."""

    lhs: np.ndarray
    drift: np.ndarray
    nu_term: np.ndarray
    jump_sum: np.ndarray
    compensator: np.ndarray

    @property
    def rhs(self) -> np.ndarray:
        return self.drift + self.nu_term + self.jump_sum - self.compensator

    @property
    def residual(self) -> np.ndarray:
        return np.abs(self.lhs - self.rhs)

    def row(self, p: int) -> dict:
        return {k: float(getattr(self, k)[p]) for k in
                ("lhs", "drift", "nu_term", "jump_sum", "compensator", "rhs", "residual")}


def ito_terms_batch(f: TestFunction, coeffs: CoefficientSet, batch: PathBatch, x0, S: float,
                    t: float, nsteps: int, measure: LevyMeasure | None = None,
                    z_nodes: int = 48) -> ItoTerms:
    """Both sides of the Itô formula on every path of ``batch`` over ``[S, t]``.

    ``f`` is evaluated on arrays of shape ``(P, k)`` so that a per-path random
    functional can broadcast its ``(P, 1)`` parameters.
    """
    measure = batch.measure if measure is None else measure
    dyn = Dynamics(coeffs, measure, batch.eps)
    zq, wq = measure.tail_quadrature(batch.eps, z_nodes)
    P = len(batch)
    jt, jz = batch.padded()
    plan = plan_events(np.linspace(S, t, int(nsteps) + 1), jt, jz, np.full((P, 1), S), t)
    times, sizes, is_jump = plan.times[:, 0], plan.sizes[:, 0], plan.is_jump[:, 0]
    x = np.broadcast_to(np.asarray(x0, dtype=float), (P,)).astype(float)[:, None]
    cur = np.full((P, 1), float(S))
    x_start = x.copy()
    drift = np.zeros((P, 1))
    nu_term = np.zeros((P, 1))
    comp = np.zeros((P, 1))
    jumps = np.zeros((P, 1))
    A, B = coeffs.mu, coeffs.sigma
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(times.shape[1]):
            tau = times[:, j:j + 1]
            live = np.isfinite(tau)
            h = np.where(live, tau - cur, 0.0)
            v = dyn.v(cur, x)
            # midpoint of the linear Euler piece
            rm = cur + 0.5 * h
            xm = x + 0.5 * h * v
            fm, dfm = f.f(xm), f.df(xm)
            drift += h * dfm * A(rm, xm)
            bz = B(rm, xm, zq)
            fshift = f.f(xm + bz)
            nu_term += h * np.sum(wq * (fshift - fm - bz * dfm), axis=1, keepdims=True)
            comp += h * np.sum(wq * (fshift - fm), axis=1, keepdims=True)
            x = x + v * h
            cur = np.where(live, tau, cur)
            jmask = is_jump[:, j:j + 1]
            if np.any(jmask):
                bj = B(cur, x, sizes[:, j:j + 1])
                xj = x + bj
                jumps += np.where(jmask, f.f(xj) - f.f(x), 0.0)
                x = np.where(jmask, xj, x)
    lhs = f.f(x) - f.f(x_start)
    out = ItoTerms(lhs[:, 0], drift[:, 0], nu_term[:, 0], jumps[:, 0], comp[:, 0])
    if not np.all(np.isfinite(out.rhs)) or not np.all(np.isfinite(out.lhs)):
        raise NonFiniteState("Itô terms overflowed")
    return out


def ito_residual(f: TestFunction, coeffs: CoefficientSet, path: JumpPath, x0: float, t: float,
                 nsteps: int, measure: LevyMeasure | None = None, S: float | None = None,
                 z_nodes: int = 48) -> float:
    """``|LHS - RHS|`` of the Itô formula for one path on ``[S, t]`` (``S`` defaults to the path start)."""
    S = path.S if S is None else S
    batch = PathBatch.from_paths([path])
    terms = ito_terms_batch(f, coeffs, batch, x0, S, t, nsteps, measure, z_nodes)
    return float(terms.residual[0])


def ito_terms(f, coeffs, path, x0, t, nsteps, measure=None, S=None, z_nodes=48) -> dict:
    """All terms of both sides for one path, as a dict."""
    S = path.S if S is None else S
    return ito_terms_batch(f, coeffs, PathBatch.from_paths([path]), x0, S, t, nsteps,
                           measure, z_nodes).row(0)


@dataclass(frozen=True)
class RandomFunctionalReport:
    max_residual: float
    tolerance: float
    passed: bool
    n_paths: int
    max_scale: float
    swap_max_residual: float | None

    def to_dict(self):
        return dict(self.__dict__)


def _freq_from_window(batch: PathBatch, measure: LevyMeasure, a: float, b: float) -> np.ndarray:
    """``Ñ((a, b] x {|z| > eps})`` per path."""
    jt, _ = batch.padded()
    count = np.sum((jt > a) & (jt <= b), axis=1)
    return count - (b - a) * measure.tail_mass(batch.eps)


def ito_random_functional_check(coeffs: CoefficientSet, measure: LevyMeasure, u: float,
                                n_paths: int, nsteps: int, T: float = 1.0, x0: float = 0.3,
                                eps: float = 0.1, seed: int = 0, z_nodes: int = 48,
                                swap: bool = True) -> RandomFunctionalReport:
    """Itô formula for ``f(ω, x) = sin(x Ñ((u, T] x {|z|>eps}))`` and X on ``[0, u]``.

    The functional uses only jumps after ``u``; the semimartingale only jumps
    before ``u``.  With ``swap`` the same identity is also evaluated with the
    frequency taken from the jumps in ``(0, u]``, which breaks independence but
    not the pathwise algebra.
    """
    if not 0.0 < u < T:
        raise ValueError("need 0 < u < T")
    batch = generate_batch(measure, 0.0, T, eps, seed, range(n_paths))
    theta = _freq_from_window(batch, measure, u, T)[:, None]
    terms = ito_terms_batch(TestFunction.sine(theta), coeffs, batch, x0, 0.0, u, nsteps,
                            measure, z_nodes)
    tol_each = 1e-8 * (1.0 + np.abs(theta[:, 0]))
    passed = bool(np.all(terms.residual < tol_each))
    swap_res = None
    if swap:
        theta_b = _freq_from_window(batch, measure, 0.0, u)[:, None]
        swapped = ito_terms_batch(TestFunction.sine(theta_b), coeffs, batch, x0, 0.0, u, nsteps,
                                  measure, z_nodes)
        swap_res = float(np.max(swapped.residual))
    return RandomFunctionalReport(float(np.max(terms.residual)), float(np.max(tol_each)), passed,
                                  n_paths, float(np.max(np.abs(theta))), swap_res)
