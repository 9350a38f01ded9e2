"""Alekseev–Gröbner identities: deterministic form exactly, Poisson form in expectation.

Deterministic: for ``x' = b(r, x)`` with flow ``X_{s,t}^x`` and a second
solution ``y' = b̄(r, y)`` started at the same point,

    X_{0,T}^{y0} - Y_T = ∫_0^T ∂ₓX_{r,T}^{Y_r} (b - b̄)(r, Y_r) dr.

Weak Poisson form: with ``u_r(y) = E f(X_{r,T}^y)`` and Y driven by the same
compensated measure,

    E f(X_{0,T}^{Y_0}) - E f(Y_T) = ∫ E[f'(X_{r,T}^{Y_r}) ∂ₓX_{r,T}^{Y_r} (μ - A)] dr
                                  + ∫∫ E[F_{r,T,z} (σ - B)] ν(dz) dr,

where ``F_{r,T,z}`` is the λ-average of ``f'(X) ∂ₓX`` at the blended starts
``Y_r + λσ + (1-λ)B`` minus its value at ``Y_r``.  Each path supplies both
sides: the left from ``X`` and ``Y`` on its full noise, the right from flows
restarted at ``r`` on the same path's jumps after ``r``, which are independent
of ``Y_r``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import GridMismatch, NonFiniteState
from .flow import (CoefficientSet, PerturbedCoefficientSet, plan_events, restart_flow,
                   run_lockstep)
from .ito_check import TestFunction
from .levy import LevyMeasure
from .mc import MCEstimate, farm_samples, independent_stderr, substream
from .prm import JumpPath, generate_batch

KERNEL_RELATION_TOL = 1e-12


# -- deterministic --------------------------------------------------------------

def _rk4_step(fn, t, h, x):
    k1 = fn(t, x)
    k2 = fn(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = fn(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = fn(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _quad_weights(n_intervals: int, T: float, rule: str) -> np.ndarray:
    h = T / n_intervals
    if rule == "simpson":
        if n_intervals % 2:
            raise ValueError("Simpson's rule needs an even number of intervals")
        w = np.ones(n_intervals + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return w * h / 3.0
    if rule == "trapezoid":
        w = np.full(n_intervals + 1, h)
        w[[0, -1]] = 0.5 * h
        return w
    raise ValueError(f"unknown rule {rule!r}")


@dataclass(frozen=True)
class DeterministicAGReport:
    lhs: float
    rhs: float
    residual: float
    x_T: float
    y_T: float
    ode_steps: int
    r_intervals: int

    def to_dict(self):
        return dict(self.__dict__)


def deterministic_ag_verify(b: Callable, b_x: Callable, bbar: Callable, y0: float, T: float,
                            ode_steps: int = 10_000, r_intervals: int = 1000,
                            rule: str = "simpson") -> DeterministicAGReport:
    """Both sides of the deterministic formula by classical Runge–Kutta.

    ``b(r, x)``, ``b_x(r, x)`` and ``bbar(r, x)`` must be vectorised.  The
    r-grid nodes are ODE grid points, so every restart ``X_{r,T}^{Y_r}`` and
    its variational equation run on the same steps as the forward solutions;
    all restarts advance together.
    """
    if ode_steps % r_intervals:
        raise GridMismatch("ode_steps must be a multiple of r_intervals")
    h = T / ode_steps
    stride = ode_steps // r_intervals

    def aug(t, s):
        x, J = s
        return np.stack([b(t, x), b_x(t, x) * J])

    times = h * np.arange(ode_steps + 1)
    times[-1] = T
    y = np.empty(ode_steps + 1)
    y[0] = y0
    x = np.array(float(y0))
    for k in range(ode_steps):
        y[k + 1] = _rk4_step(bbar, times[k], h, np.array(y[k]))
        x = _rk4_step(b, times[k], h, x)
    nodes = np.arange(0, ode_steps + 1, stride)
    state = np.stack([y[nodes], np.ones(nodes.size)])
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(ode_steps):
            # restart i is active once the clock has passed its node
            n_active = int(np.searchsorted(nodes, k, side="right"))
            if n_active:
                state[:, :n_active] = _rk4_step(aug, times[k], h, state[:, :n_active])
    J = state[1]
    r = times[nodes]
    integrand = J * (b(r, y[nodes]) - bbar(r, y[nodes]))
    rhs = float(np.dot(_quad_weights(r_intervals, T, rule), integrand))
    lhs = float(x) - float(y[-1])
    if not (math.isfinite(lhs) and math.isfinite(rhs)):
        raise NonFiniteState("ODE solution overflowed")
    return DeterministicAGReport(lhs, rhs, abs(lhs - rhs), float(x), float(y[-1]), ode_steps, r_intervals)


# -- Taylor kernels -------------------------------------------------------------

def lambda_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss–Legendre nodes and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(int(n))
    return 0.5 * (x + 1.0), 0.5 * w


def kernels_from_values(g_blend: np.ndarray, g_base: np.ndarray, w_lambda: np.ndarray):
    """``(F, G, relation_error)`` from ``f'(X)∂ₓX`` at blended starts ``(..., Λ)`` and at the base.

    ``F`` integrates the differences to the base and ``G`` the raw values, so
    ``G - F - base`` vanishes only up to rounding; that gap is returned.
    """
    G = np.sum(w_lambda * g_blend, axis=-1)
    F = np.sum(w_lambda * (g_blend - g_base[..., None]), axis=-1)
    gap = np.abs(G - F - g_base) / np.maximum(1.0, np.abs(G))
    return F, G, gap


def taylor_kernels(coeffs: CoefficientSet, pcoeffs: CoefficientSet, f: TestFunction, path: JumpPath,
                   r: float, T: float, z: float, y: float, nsteps: int, lambda_nodes: int = 16,
                   scheme: str = "euler", measure: LevyMeasure | None = None) -> tuple[float, float]:
    """``(F_{r,T,z}, G_{r,T,z})`` at ``Y_r = y`` on one path, by Gauss–Legendre in λ."""
    lam, wl = lambda_rule(lambda_nodes)
    s = float(coeffs.sigma(r, np.float64(y), z))
    bb = float(pcoeffs.sigma(r, np.float64(y), z))
    starts = np.concatenate([[y], y + lam * s + (1.0 - lam) * bb])
    res = restart_flow(coeffs, path, r, T, starts, nsteps, scheme=scheme, measure=measure)
    g = f.df(res.x_terminal) * res.dx_terminal
    F, G, gap = kernels_from_values(g[1:], np.float64(g[0]), wl)
    if gap > KERNEL_RELATION_TOL:
        raise AssertionError(f"G - F differs from the base value by {gap:.3g}")
    return float(F), float(G)


def taylor_kernel_F(*args, **kw) -> float:
    return taylor_kernels(*args, **kw)[0]


def taylor_kernel_G(*args, **kw) -> float:
    return taylor_kernels(*args, **kw)[1]


# -- weak identity ----------------------------------------------------------------

@dataclass(frozen=True)
class WeakAGConfig:
    """Settings of one weak-identity experiment.

    ``r_rule`` is ``"midpoint"`` (shared midpoints of ``r_grid_size`` cells)
    or ``"stratified"`` (one uniform point per cell and path, which makes the
    r-integral unbiased).  ``z_quadrature_nodes`` is per sign branch.
    """

    coeffs: CoefficientSet
    pcoeffs: CoefficientSet
    f: TestFunction
    measure: LevyMeasure
    y0: float
    T: float = 1.0
    eps: float = 0.05
    n_paths: int = 10_000
    nsteps: int = 16
    r_grid_size: int = 8
    z_quadrature_nodes: int = 6
    lambda_quadrature_nodes: int = 16
    r_rule: str = "midpoint"
    scheme: str = "rk4"
    block_size: int = 512

    def __post_init__(self):
        for name in ("n_paths", "nsteps", "r_grid_size", "z_quadrature_nodes",
                     "lambda_quadrature_nodes", "block_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (self.T > 0 and self.eps > 0):
            raise ValueError("T and eps must be positive")
        if self.measure.tail_mass(self.eps) <= 0:
            raise ValueError("eps leaves no jumps in the measure's support")
        if self.r_rule not in ("midpoint", "stratified"):
            raise ValueError("r_rule must be 'midpoint' or 'stratified'")

    def swapped(self) -> "WeakAGConfig":
        """The same experiment with the two models exchanged."""
        kw = dict(self.__dict__)
        kw["coeffs"], kw["pcoeffs"] = self.pcoeffs, self.coeffs
        return WeakAGConfig(**kw)


@dataclass(frozen=True)
class WeakAGReport:
    lhs: MCEstimate
    rhs_drift: MCEstimate
    rhs_jump: MCEstimate
    rhs: MCEstimate
    residual: MCEstimate
    kernel_relation_max: float
    n_aborted: int

    @property
    def z_score(self) -> float:
        return self.residual.z_score(0.0)

    @property
    def passed(self) -> bool:
        return abs(self.z_score) <= 3.0

    def to_dict(self) -> dict:
        return {"lhs": self.lhs.to_dict(), "rhs_drift": self.rhs_drift.to_dict(),
                "rhs_jump": self.rhs_jump.to_dict(), "rhs": self.rhs.to_dict(),
                "residual": self.residual.to_dict(), "z_score": self.z_score,
                "kernel_relation_max": self.kernel_relation_max, "n_aborted": self.n_aborted,
                "passed": self.passed}

    def table_rows(self) -> list[tuple]:
        rows = []
        for term in ("lhs", "rhs_drift", "rhs_jump", "rhs", "residual"):
            e = getattr(self, term)
            rows.append((term, e.mean, e.stderr, e.n, e.z_score(0.0)))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["term", "estimate", "stderr", "n", "z_score"])
        for row in self.table_rows():
            w.writerow([row[0]] + [repr(float(v)) if not isinstance(v, int) else v for v in row[1:]])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _r_nodes(cfg: WeakAGConfig, seed: int, indices: np.ndarray) -> np.ndarray:
    R, T = cfg.r_grid_size, cfg.T
    if cfg.r_rule == "midpoint":
        return np.tile((np.arange(R) + 0.5) * T / R, (indices.size, 1))
    u = np.stack([substream(seed, int(i)).child(0).random(R) for i in indices])
    return (np.arange(R) + u) * T / R


def weak_ag_samples(cfg: WeakAGConfig, seed: int, indices: np.ndarray) -> np.ndarray:
    """Per-path columns ``[lhs, drift, jump, lhs - drift - jump, kernel gap]``."""
    indices = np.asarray(indices)
    P, R, T = indices.size, cfg.r_grid_size, cfg.T
    batch = generate_batch(cfg.measure, 0.0, T, cfg.eps, seed, indices)
    jt, jz = batch.padded()
    r = _r_nodes(cfg, seed, indices)
    grid = np.sort(np.concatenate([np.broadcast_to(np.linspace(0.0, T, cfg.nsteps + 1), (P, cfg.nsteps + 1)),
                                   r], axis=1), axis=1)
    dyn_x = cfg.coeffs.dynamics(cfg.measure, cfg.eps)
    dyn_y = cfg.pcoeffs.dynamics(cfg.measure, cfg.eps)

    # forward solutions on the full noise
    plan0 = plan_events(grid, jt, jz, np.zeros((P, 1)), T)
    x_T, _, _ = run_lockstep(dyn_x, plan0, np.full((P, 1, 1), cfg.y0), 0, cfg.scheme)
    y_T, _, _, trace = run_lockstep(dyn_y, plan0, np.full((P, 1, 1), cfg.y0), 0, cfg.scheme, record=True)
    ev = plan0.times[:, 0, :]
    pos = np.sum(ev[:, None, :] <= r[..., None], axis=-1) - 1
    y_r = trace[np.arange(P)[:, None], 0, pos, 0]

    # restart points: Y_r and the λ-blends towards σ and B at every z node
    zq, wq = cfg.measure.tail_quadrature(cfg.eps, cfg.z_quadrature_nodes)
    lam, wl = lambda_rule(cfg.lambda_quadrature_nodes)
    sig = cfg.coeffs.sigma(r[..., None], y_r[..., None], zq)
    bsh = cfg.pcoeffs.sigma(r[..., None], y_r[..., None], zq)
    blend = y_r[..., None, None] + lam * sig[..., None] + (1.0 - lam) * bsh[..., None]
    inits = np.concatenate([y_r[..., None], blend.reshape(P, R, -1)], axis=-1)
    plan = plan_events(grid, jt, jz, r, T)
    xr, Jr, _ = run_lockstep(dyn_x, plan, inits, 1, cfg.scheme)
    g = cfg.f.df(xr) * Jr
    base = g[..., 0]
    F, _, gap = kernels_from_values(g[..., 1:].reshape(P, R, zq.size, lam.size), base[..., None], wl)

    drift_int = base * (cfg.coeffs.mu(r, y_r) - cfg.pcoeffs.mu(r, y_r))
    jump_int = np.sum(wq * F * (sig - bsh), axis=-1)
    w_r = T / R
    lhs = cfg.f.f(x_T[:, 0, 0]) - cfg.f.f(y_T[:, 0, 0])
    drift = w_r * drift_int.sum(axis=1)
    jump = w_r * jump_int.sum(axis=1)
    return np.stack([lhs, drift, jump, lhs - drift - jump, gap.reshape(P, -1).max(axis=1)], axis=1)


def weak_ag_estimate(cfg: WeakAGConfig, seed: int, threads: int | None = None,
                     abort_budget: float = 1e-3) -> WeakAGReport:
    """Monte Carlo estimates of both sides of the weak identity on common noise.

    Raises
    ------
    AbortBudgetExceeded
        If more than ``abort_budget`` of the paths produce non-finite values.
    AssertionError
        If the relation ``G - F = f'(X)∂ₓX`` fails beyond rounding anywhere.
    """
    samples, n_bad = farm_samples(lambda idx: weak_ag_samples(cfg, seed, idx), cfg.n_paths,
                                  threads, cfg.block_size, abort_budget)
    gap = float(samples[:, 4].max()) if samples.size else 0.0
    if gap > KERNEL_RELATION_TOL:
        raise AssertionError(f"G - F differs from the base value by {gap:.3g}")
    est = [MCEstimate.from_samples(samples[:, k], n_aborted=n_bad) for k in range(4)]
    rhs = MCEstimate.from_samples(samples[:, 1] + samples[:, 2], n_aborted=n_bad)
    return WeakAGReport(est[0], est[1], est[2], rhs, est[3], gap, n_bad)


def independent_lhs_stderr(cfg: WeakAGConfig, seed: int, n_paths: int | None = None,
                           threads: int | None = None) -> tuple[float, float]:
    """``(paired, independent)`` standard errors of the left side.

    The paired one uses X and Y on the same paths; the independent one
    estimates E f(X) and E f(Y) on disjoint path sets.
    """
    n = cfg.n_paths if n_paths is None else n_paths
    T = cfg.T
    grid = np.linspace(0.0, T, cfg.nsteps + 1)
    dyn_x = cfg.coeffs.dynamics(cfg.measure, cfg.eps)
    dyn_y = cfg.pcoeffs.dynamics(cfg.measure, cfg.eps)

    def terminal(dyn, idx):
        batch = generate_batch(cfg.measure, 0.0, T, cfg.eps, seed, idx)
        jt, jz = batch.padded()
        plan = plan_events(grid, jt, jz, np.zeros((len(batch), 1)), T)
        x, _, _ = run_lockstep(dyn, plan, np.full((len(batch), 1, 1), cfg.y0), 0, cfg.scheme)
        return cfg.f.f(x[:, 0, 0])

    paired, _ = farm_samples(lambda idx: terminal(dyn_x, idx) - terminal(dyn_y, idx), n, threads,
                             cfg.block_size)
    fx, _ = farm_samples(lambda idx: terminal(dyn_x, idx), n, threads, cfg.block_size)
    fy, _ = farm_samples(lambda idx: terminal(dyn_y, idx + n), n, threads, cfg.block_size)
    ind = independent_stderr(MCEstimate.from_samples(fx), MCEstimate.from_samples(fy))
    return MCEstimate.from_samples(paired).stderr, ind


def default_instance(n_paths: int = 200_000, **overrides) -> WeakAGConfig:
    """The truncated-stable example: ``b = sin``, ``b̄ = sin - 0.1 cos``, ``σ̃ = 0.5 cos``,
    ``σ̄ = 0.5 cos + 0.05``, ``f(x) = x²``, ``α = 1``, cutoff 1, ``eps = 0.05``, ``T = 1``, ``y0 = 0.3``."""
    from .levy import TruncatedStable
    coeffs = CoefficientSet.levy_driven(
        np.sin, np.cos, lambda x: -np.sin(x),
        lambda x: 0.5 * np.cos(x), lambda x: -0.5 * np.sin(x), lambda x: -0.5 * np.cos(x),
        name="sin/0.5cos")
    base = CoefficientSet.levy_driven(
        lambda x: np.sin(x) - 0.1 * np.cos(x), lambda x: np.cos(x) + 0.1 * np.sin(x),
        lambda x: -np.sin(x) + 0.1 * np.cos(x),
        lambda x: 0.5 * np.cos(x) + 0.05, lambda x: -0.5 * np.sin(x), lambda x: -0.5 * np.cos(x),
        name="perturbed")
    pcoeffs = PerturbedCoefficientSet(**base.__dict__)
    kw = dict(coeffs=coeffs, pcoeffs=pcoeffs, f=TestFunction.square(), measure=TruncatedStable(1.0, 1.0),
              y0=0.3, T=1.0, eps=0.05, n_paths=n_paths)
    kw.update(overrides)
    return WeakAGConfig(**kw)
