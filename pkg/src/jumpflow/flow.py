"""Jump-adapted simulation of dX = μ(r, X) dr + ∫ σ(r, X_{r-}, z) Ñ(dr, dz) and its tangent flows.

The time grid is the union of a deterministic grid and the jump times, so each
jump is applied exactly at its time with the left-limit state.  Between grid
points the state follows the effective drift ``μ - ∫_{|z|>eps} σ ν(dz)`` by an
explicit Euler step (default) or a classical Runge–Kutta step.  The tangent
flows ``J = ∂ₓX`` and ``K = ∂²ₓX`` are advanced by the derivative of the same
one-step map, so they are exact derivatives of the discrete flow.

Everything runs in lockstep over arrays of shape ``(paths, starts, inits)``:
different paths and restart times have different event counts, and finished
lanes take zero-length identity steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import GridMismatch, NonFiniteState
from .levy import LevyMeasure
from .mc import MCEstimate, farm_samples
from .prm import JumpPath, PathBatch, generate_batch

Fn2 = Callable[[np.ndarray, np.ndarray], np.ndarray]
Fn3 = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def _fd_mismatch(f, df, x, step):
    fd = (f(x + step) - f(x - step)) / (2.0 * step)
    an = df(x)
    return np.max(np.abs(fd - an) / np.maximum(1.0, np.abs(an)))


@dataclass(frozen=True)
class CoefficientSet:
    """Drift ``mu(r, x)``, jump coefficient ``sigma(r, x, z)`` and their x-derivatives.

    All callables must accept numpy arrays and broadcast.  ``jump_scale``
    optionally declares ``sigma(r, x, z) = g(x) * z`` through the triple
    ``(g, g_x, g_xx)``; the compensator drift then has the closed form
    ``g(x) ∫_{|z|>eps} z ν(dz)``, which vanishes for symmetric ν.
    """

    mu: Fn2
    mu_x: Fn2
    mu_xx: Fn2
    sigma: Fn3
    sigma_x: Fn3
    sigma_xx: Fn3
    jump_scale: tuple | None = None
    growth: dict = field(default_factory=dict)
    name: str = "coefficients"

    @classmethod
    def levy_driven(cls, b, b_x, b_xx, g, g_x, g_xx, name="levy_driven", **growth):
        """Time-homogeneous ``mu = b(x)`` and ``sigma = g(x) z``."""
        return cls(lambda r, x: b(x), lambda r, x: b_x(x), lambda r, x: b_xx(x),
                   lambda r, x, z: g(x) * z, lambda r, x, z: g_x(x) * z,
                   lambda r, x, z: g_xx(x) * z, (g, g_x, g_xx), dict(growth), name)

    @classmethod
    def zero(cls):
        zero2 = lambda r, x: np.zeros_like(x)
        zero1 = lambda x: np.zeros_like(x)
        return cls(zero2, zero2, zero2, lambda r, x, z: np.zeros_like(x * z),
                   lambda r, x, z: np.zeros_like(x * z), lambda r, x, z: np.zeros_like(x * z),
                   (zero1, zero1, zero1), {}, "zero")

    def check_derivatives(self, n: int = 100, seed: int = 0, x_scale: float = 3.0,
                          rtol: float = 1e-5) -> float:
        """Compare analytic derivatives with central differences at ``n`` random points.

        Raises ValueError if the worst relative mismatch exceeds ``rtol``.
        """
        rng = np.random.default_rng(seed)
        x = rng.uniform(-x_scale, x_scale, n)
        r = rng.uniform(0.0, 1.0, n)
        z = rng.uniform(0.05, 1.0, n) * rng.choice([-1.0, 1.0], n)
        step = 1e-5 * (1.0 + np.abs(x))
        worst = max(
            _fd_mismatch(lambda y: self.mu(r, y), lambda y: self.mu_x(r, y), x, step),
            _fd_mismatch(lambda y: self.mu_x(r, y), lambda y: self.mu_xx(r, y), x, step),
            _fd_mismatch(lambda y: self.sigma(r, y, z), lambda y: self.sigma_x(r, y, z), x, step),
            _fd_mismatch(lambda y: self.sigma_x(r, y, z), lambda y: self.sigma_xx(r, y, z), x, step),
        )
        if not worst <= rtol:
            raise ValueError(f"{self.name}: derivative mismatch {worst:.3g} exceeds {rtol}")
        return float(worst)

    def dynamics(self, measure: LevyMeasure, eps: float, quad_nodes: int = 24) -> "Dynamics":
        return Dynamics(self, measure, eps, quad_nodes)


class PerturbedCoefficientSet(CoefficientSet):
    """Coefficients ``(A, B)`` of the process Y; same fields as :class:`CoefficientSet`."""

    @property
    def A(self):
        return self.mu

    @property
    def B(self):
        return self.sigma


class Dynamics:
    """Coefficients bound to a truncated intensity: effective drift and jump maps."""

    def __init__(self, coeffs: CoefficientSet, measure: LevyMeasure, eps: float, quad_nodes: int = 24):
        self.coeffs = coeffs
        self.measure = measure
        self.eps = float(eps)
        self.comp_kind = "none"
        if coeffs.jump_scale is not None:
            self.m1 = measure.signed_tail_moment(1, eps)
            if self.m1 != 0.0:
                self.comp_kind = "scale"
        else:
            self.zq, self.wq = measure.tail_quadrature(eps, quad_nodes)
            if self.zq.size:
                self.comp_kind = "quadrature"

    def _comp(self, which: int, r, x):
        c = self.coeffs
        if self.comp_kind == "scale":
            return self.m1 * c.jump_scale[which](x)
        fn = (c.sigma, c.sigma_x, c.sigma_xx)[which]
        vals = fn(np.asarray(r)[..., None], x[..., None], self.zq)
        return np.sum(vals * self.wq, axis=-1)

    def v(self, r, x):
        out = self.coeffs.mu(r, x)
        return out if self.comp_kind == "none" else out - self._comp(0, r, x)

    def v_x(self, r, x):
        out = self.coeffs.mu_x(r, x)
        return out if self.comp_kind == "none" else out - self._comp(1, r, x)

    def v_xx(self, r, x):
        out = self.coeffs.mu_xx(r, x)
        return out if self.comp_kind == "none" else out - self._comp(2, r, x)

    def compensator(self, r, x):
        """``∫_{|z|>eps} σ(r, x, z) ν(dz)``."""
        if self.comp_kind == "none":
            return np.zeros_like(np.asarray(x, dtype=float))
        return self._comp(0, r, x)


# -- lockstep engine ------------------------------------------------------------

@dataclass
class EventPlan:
    """Per-lane event sequences: times, jump marks and jump flags, shape ``(P, R, L)``."""

    starts: np.ndarray
    times: np.ndarray
    sizes: np.ndarray
    is_jump: np.ndarray


def plan_events(grid: np.ndarray, jump_times: np.ndarray, jump_sizes: np.ndarray,
                starts: np.ndarray, T: float) -> EventPlan:
    """Merge grid and jumps per path and cut each lane to the events in ``(start, T]``.

    ``grid`` is ``(G,)`` or ``(P, G)``; jump arrays are ``(P, K)`` padded with
    ``inf``; ``starts`` is ``(P, R)``.  Events exactly at a start are excluded.
    """
    jt = np.atleast_2d(np.asarray(jump_times, dtype=float))
    jz = np.atleast_2d(np.asarray(jump_sizes, dtype=float))
    P = jt.shape[0]
    g = np.asarray(grid, dtype=float)
    g = np.broadcast_to(g, (P, g.shape[-1]))
    times = np.concatenate([g, jt], axis=1)
    sizes = np.concatenate([np.zeros_like(g), jz], axis=1)
    is_jump = np.concatenate([np.zeros(g.shape, dtype=bool), np.isfinite(jt)], axis=1)
    times = np.where(times <= T, times, np.inf)
    order = np.argsort(times, axis=1, kind="stable")
    rows = np.arange(P)[:, None]
    times, sizes, is_jump = times[rows, order], sizes[rows, order], is_jump[rows, order]
    starts = np.asarray(starts, dtype=float).reshape(P, -1)
    first = np.sum(times[:, None, :] <= starts[..., None], axis=-1)
    n_ev = np.sum(np.isfinite(times), axis=1)[:, None] - first
    L = int(n_ev.max()) if n_ev.size else 0
    col = np.arange(L)
    idx = np.minimum(first[..., None] + col, times.shape[1] - 1)
    valid = col < n_ev[..., None]
    r3 = np.arange(P)[:, None, None]
    ev_t = np.where(valid, times[r3, idx], np.inf)
    ev_z = np.where(valid, sizes[r3, idx], 0.0)
    ev_j = valid & is_jump[r3, idx]
    return EventPlan(starts, ev_t, ev_z, ev_j)


def _drift_rhs(dyn: Dynamics, t, x, J, K, order):
    v = dyn.v(t, x)
    if order == 0:
        return v, None, None
    vx = dyn.v_x(t, x)
    dJ = vx * J
    if order == 1:
        return v, dJ, None
    return v, dJ, dyn.v_xx(t, x) * J * J + vx * K


def _drift_step(dyn: Dynamics, t, h, x, J, K, order, scheme):
    if scheme == "euler":
        v, dJ, dK = _drift_rhs(dyn, t, x, J, K, order)
        x1 = x + v * h
        J1 = None if order == 0 else J + dJ * h
        K1 = None if order < 2 else K + dK * h
        return x1, J1, K1
    if scheme != "rk4":
        raise ValueError(f"unknown scheme {scheme!r}")

    def shift(a, da, c):
        return None if a is None else a + c * da

    k1 = _drift_rhs(dyn, t, x, J, K, order)
    k2 = _drift_rhs(dyn, t + 0.5 * h, shift(x, k1[0], 0.5 * h), shift(J, k1[1], 0.5 * h),
                    shift(K, k1[2], 0.5 * h), order)
    k3 = _drift_rhs(dyn, t + 0.5 * h, shift(x, k2[0], 0.5 * h), shift(J, k2[1], 0.5 * h),
                    shift(K, k2[2], 0.5 * h), order)
    k4 = _drift_rhs(dyn, t + h, shift(x, k3[0], h), shift(J, k3[1], h), shift(K, k3[2], h), order)
    out = []
    for a, i in ((x, 0), (J, 1), (K, 2)):
        if a is None:
            out.append(None)
        else:
            out.append(a + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
    return tuple(out)


def _jump(coeffs: CoefficientSet, t, z, x, J, K, order):
    s = coeffs.sigma(t, x, z)
    if order == 0:
        return x + s, None, None
    sx = coeffs.sigma_x(t, x, z)
    J1 = J * (1.0 + sx)
    if order == 1:
        return x + s, J1, None
    return x + s, J1, K * (1.0 + sx) + coeffs.sigma_xx(t, x, z) * J * J


def run_lockstep(dyn: Dynamics, plan: EventPlan, inits: np.ndarray, order: int = 2,
                 scheme: str = "euler", record: bool = False, compact_below: float = 0.6):
    """Advance states ``inits`` of shape ``(P, R, M)`` through the events of ``plan``.

    Returns ``(x, J, K)`` at the last event of each lane (``None`` for orders
    not requested).  With ``record``, also returns the ``(P, R, L, M)`` states
    after every event.  Lanes that have run out of events are dropped from the
    working arrays once fewer than ``compact_below`` of them remain live; this
    changes no arithmetic, since a finished lane only takes identity steps.
    """
    lead = plan.starts.shape
    M = np.shape(inits)[-1]
    x0 = np.array(np.broadcast_to(inits, lead + (M,)), dtype=float).reshape(-1, M)
    n_lanes = x0.shape[0]
    L = plan.times.shape[-1]
    times = plan.times.reshape(n_lanes, L)
    sizes = plan.sizes.reshape(n_lanes, L)
    is_jump = plan.is_jump.reshape(n_lanes, L)
    n_ev = np.sum(np.isfinite(times), axis=1)

    out_x = x0.copy()
    out_J = np.ones_like(x0) if order >= 1 else None
    out_K = np.zeros_like(x0) if order >= 2 else None
    trace = np.empty((n_lanes, L, M)) if record else None

    lanes = np.flatnonzero(n_ev > 0)
    x = x0[lanes]
    J = None if out_J is None else out_J[lanes]
    K = None if out_K is None else out_K[lanes]
    cur = plan.starts.reshape(-1).astype(float)[lanes]
    coeffs = dyn.coeffs

    def flush(sel):
        idx = lanes[sel]
        out_x[idx] = x[sel]
        if J is not None:
            out_J[idx] = J[sel]
        if K is not None:
            out_K[idx] = K[sel]

    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(L):
            if lanes.size == 0:
                break
            tau = times[lanes, j]
            live = np.isfinite(tau)
            n_live = int(live.sum())
            if n_live < compact_below * lanes.size:
                flush(~live)
                J = None if J is None else J[live]
                K = None if K is None else K[live]
                lanes, x, cur, tau, live = lanes[live], x[live], cur[live], tau[live], live[live]
            h = np.where(live, tau - cur, 0.0)
            if np.any(h > 0.0):
                x, J, K = _drift_step(dyn, cur[:, None], h[:, None], x, J, K, order, scheme)
            cur = np.where(live, tau, cur)
            jumps = is_jump[lanes, j]
            if np.any(jumps):
                sub = np.flatnonzero(jumps)
                xj, Jj, Kj = _jump(coeffs, cur[sub, None], sizes[lanes[sub], j][:, None],
                                   x[sub], None if J is None else J[sub],
                                   None if K is None else K[sub], order)
                x[sub] = xj
                if J is not None:
                    J[sub] = Jj
                if K is not None:
                    K[sub] = Kj
            if record:
                trace[lanes, j] = x
        flush(np.ones(lanes.size, dtype=bool))

    shape = lead + (M,)
    res = (out_x.reshape(shape), None if out_J is None else out_J.reshape(shape),
           None if out_K is None else out_K.reshape(shape))
    if record:
        return res + (trace.reshape(lead + (L, M)),)
    return res


# -- single-path interface ------------------------------------------------------

@dataclass(frozen=True)
class FlowResult:
    """Terminal ``X_{s,t}^x``, ``∂ₓX`` and ``∂²ₓX`` for each initial condition on one path."""

    grid: np.ndarray
    x_terminal: np.ndarray
    dx_terminal: np.ndarray
    d2x_terminal: np.ndarray
    path: JumpPath
    s: float
    t: float


def _uniform_grid(s, t, nsteps):
    if nsteps < 1:
        raise ValueError("nsteps must be >= 1")
    return np.linspace(s, t, int(nsteps) + 1)


def _measure_of(path, measure):
    measure = path.measure if measure is None else measure
    if measure is None:
        raise ValueError("path carries no measure; pass one explicitly")
    return measure


def _check_finite(*arrays):
    for a in arrays:
        if a is not None and not np.all(np.isfinite(a)):
            raise NonFiniteState("flow state overflowed or became NaN")


def simulate_flow(coeffs: CoefficientSet, path: JumpPath, s: float, t: float, inits,
                  nsteps: int, measure: LevyMeasure | None = None, scheme: str = "euler",
                  grid=None, quad_nodes: int = 24) -> FlowResult:
    """Simulate ``X_{s,t}^x`` and its tangent flows for every ``x`` in ``inits``.

    Uses the jumps of ``path`` in ``(s, t]`` and the grid ``grid`` (default:
    ``nsteps`` uniform steps on ``[s, t]``) merged with those jump times.
    ``s == t`` returns the identity flow.
    """
    inits = np.atleast_1d(np.asarray(inits, dtype=float))
    if not (path.S <= s <= t <= path.T):
        raise ValueError(f"need S <= s <= t <= T, got s={s}, t={t} on ({path.S}, {path.T}]")
    if s == t:
        return FlowResult(np.array([s]), inits.copy(), np.ones_like(inits), np.zeros_like(inits), path, s, t)
    grid = _uniform_grid(s, t, nsteps) if grid is None else np.asarray(grid, dtype=float)
    if grid[-1] != t:
        raise GridMismatch("grid must end at t")
    dyn = coeffs.dynamics(_measure_of(path, measure), path.eps, quad_nodes)
    jt, jz = path.window(s, t)
    plan = plan_events(grid, jt[None, :] if jt.size else np.full((1, 1), np.inf),
                       jz[None, :] if jz.size else np.zeros((1, 1)), np.array([[s]]), t)
    x, J, K = run_lockstep(dyn, plan, inits[None, None, :], 2, scheme)
    _check_finite(x, J, K)
    ev = plan.times[0, 0]
    return FlowResult(np.concatenate([[s], ev[np.isfinite(ev)]]), x[0, 0], J[0, 0], K[0, 0], path, s, t)


def restart_flow(coeffs: CoefficientSet, path: JumpPath, r: float, T: float, inits,
                 nsteps: int, **kw) -> FlowResult:
    """Flow from time ``r`` using only jumps with ``t_i > r`` (open at ``r``)."""
    return simulate_flow(coeffs, path, r, T, inits, nsteps, **kw)


@dataclass(frozen=True)
class Trajectory:
    """Values of a process at its event times (right-continuous at jumps)."""

    times: np.ndarray
    values: np.ndarray

    def at(self, r: float) -> float:
        """Value at ``r``, which must be an event time."""
        hit = np.flatnonzero(self.times == r)
        if not hit.size:
            raise GridMismatch(f"time {r} is not on the trajectory grid")
        return float(self.values[hit[-1]])

    @property
    def terminal(self) -> float:
        return float(self.values[-1])


def simulate_Y(pcoeffs: CoefficientSet, path: JumpPath, y0: float, nsteps: int,
               measure: LevyMeasure | None = None, scheme: str = "euler", grid=None,
               S: float | None = None, T: float | None = None, quad_nodes: int = 24) -> Trajectory:
    """Whole trajectory of ``Y_t = y0 + ∫ A dr + ∫∫ B Ñ(dr, dz)`` on the jump-adapted grid."""
    S = path.S if S is None else S
    T = path.T if T is None else T
    grid = _uniform_grid(S, T, nsteps) if grid is None else np.asarray(grid, dtype=float)
    dyn = pcoeffs.dynamics(_measure_of(path, measure), path.eps, quad_nodes)
    jt, jz = path.window(S, T)
    plan = plan_events(grid, jt[None, :] if jt.size else np.full((1, 1), np.inf),
                       jz[None, :] if jz.size else np.zeros((1, 1)), np.array([[S]]), T)
    _, _, _, trace = run_lockstep(dyn, plan, np.array([[[y0]]]), 0, scheme, record=True)
    ev = plan.times[0, 0]
    keep = np.isfinite(ev)
    values = np.concatenate([[y0], trace[0, 0, keep, 0]])
    _check_finite(values)
    return Trajectory(np.concatenate([[S], ev[keep]]), values)


# -- flow property ----------------------------------------------------------------

@dataclass(frozen=True)
class FlowPropertyReport:
    residual: float
    aligned: bool
    composed: float
    direct: float


def aligned_grid(s: float, t: float, T: float, nsteps: int) -> np.ndarray:
    """Uniform steps on ``[s, t]`` and on ``[t, T]`` joined at ``t`` (about ``nsteps`` in total)."""
    if T == s:
        return np.array([s])
    n1 = max(1, int(round(nsteps * (t - s) / (T - s)))) if t > s else 0
    n2 = max(1, nsteps - n1) if T > t else 0
    left = np.linspace(s, t, n1 + 1) if n1 else np.array([s])
    right = np.linspace(t, T, n2 + 1)[1:] if n2 else np.empty(0)
    return np.concatenate([left, right])


def flow_property_check(coeffs: CoefficientSet, path: JumpPath, s: float, t: float, T: float,
                        x: float, nsteps: int, grid=None, aligned: bool = True,
                        scheme: str = "euler", measure: LevyMeasure | None = None) -> FlowPropertyReport:
    """``|X_{t,T}^{X_{s,t}^x} - X_{s,T}^x|`` on one path.

    With ``aligned`` (default) the ``[s, T]`` grid is the union of the two
    sub-grids, so both sides run the same recursion step for step.  With
    ``aligned=False`` each flow uses its own uniform grid and the residual is a
    discretisation-gap diagnostic.
    """
    if not s <= t <= T:
        raise ValueError("need s <= t <= T")
    kw = dict(measure=measure, scheme=scheme)
    if aligned:
        grid = aligned_grid(s, t, T, nsteps) if grid is None else np.asarray(grid, dtype=float)
        if t not in grid:
            raise GridMismatch(f"t={t} is not on the grid")
        g1, g2 = grid[grid <= t], grid[grid >= t]
        first = simulate_flow(coeffs, path, s, t, [x], nsteps, grid=g1, **kw)
        composed = simulate_flow(coeffs, path, t, T, first.x_terminal, nsteps, grid=g2, **kw)
        direct = simulate_flow(coeffs, path, s, T, [x], nsteps, grid=grid, **kw)
    else:
        n1 = max(1, int(round(nsteps * (t - s) / (T - s)))) if T > s else 1
        first = simulate_flow(coeffs, path, s, t, [x], n1, **kw)
        composed = simulate_flow(coeffs, path, t, T, first.x_terminal, max(1, nsteps - n1) + 1, **kw)
        direct = simulate_flow(coeffs, path, s, T, [x], nsteps, **kw)
    c, d = float(composed.x_terminal[0]), float(direct.x_terminal[0])
    return FlowPropertyReport(abs(c - d), aligned, c, d)


# -- batched flows on many paths ------------------------------------------------

def flow_batch(dyn: Dynamics, batch: PathBatch, starts, inits, grid, T: float,
               order: int = 1, scheme: str = "euler"):
    """Terminal states at ``T`` for all paths of ``batch``, starts ``(P, R)`` and inits ``(P, R, M)``."""
    jt, jz = batch.padded()
    starts = np.broadcast_to(np.asarray(starts, dtype=float), (len(batch),) + np.shape(starts)[-1:])
    plan = plan_events(grid, jt, jz, starts, T)
    return run_lockstep(dyn, plan, inits, order, scheme)


@dataclass(frozen=True)
class ContinuityReport:
    """Table of ``E|X_{s+δ,t}^{x+h} - X_{s,t}^x|²`` with the fitted ``C (h + √δ)²`` envelope."""

    rows: tuple  # (delta, h, MCEstimate)
    envelope_C: float

    def l2(self, delta: float, h: float) -> float:
        for d, hh, est in self.rows:
            if d == delta and hh == h:
                return math.sqrt(max(est.mean, 0.0))
        raise KeyError((delta, h))

    def to_dict(self):
        return {"envelope_C": self.envelope_C,
                "rows": [{"delta": d, "h": h, "mean_sq": e.mean,
                          "stderr": e.stderr if e.n > 1 else None, "n": e.n} for d, h, e in self.rows]}


def stochastic_continuity_probe(coeffs: CoefficientSet, measure: LevyMeasure, t: float, s: float,
                                x: float, deltas: Sequence[float], hs: Sequence[float], n_paths: int,
                                seed: int = 0, eps: float = 0.05, nsteps: int = 64,
                                scheme: str = "rk4", threads: int | None = None,
                                block_size: int = 1024) -> ContinuityReport:
    """Monte Carlo L² distances between flows with shifted start times and initial points.

    All flows of one path share its jumps; the grid is uniform on ``[s, t]``
    refined by the shifted start times.
    """
    deltas = np.asarray(sorted(set(deltas) | {0.0}), dtype=float)
    hs = np.asarray(sorted(set(hs) | {0.0}), dtype=float)
    if np.any(deltas < 0) or np.any(s + deltas >= t):
        raise ValueError("need 0 <= delta < t - s")
    dyn = coeffs.dynamics(measure, eps)
    grid = np.union1d(_uniform_grid(s, t, nsteps), s + deltas)
    inits = x + hs

    def task(indices):
        batch = generate_batch(measure, s, t, eps, seed, indices)
        P = len(batch)
        xt, _, _ = flow_batch(dyn, batch, np.tile(s + deltas, (P, 1)),
                              np.broadcast_to(inits, (P, deltas.size, hs.size)), grid, t, order=0,
                              scheme=scheme)
        base = xt[:, :1, :1]
        return ((xt - base) ** 2).reshape(P, -1)

    samples, n_bad = farm_samples(task, n_paths, threads, block_size)
    rows = []
    envelope = []
    for i, d in enumerate(deltas):
        for j, h in enumerate(hs):
            est = MCEstimate.from_samples(samples[:, i * hs.size + j], n_aborted=n_bad)
            rows.append((float(d), float(h), est))
            envelope.append((h + math.sqrt(d)) ** 2)
    y = np.array([e.mean for _, _, e in rows])
    e = np.array(envelope)
    C = float(np.dot(y, e) / np.dot(e, e)) if np.any(e > 0) else 0.0
    return ContinuityReport(tuple(rows), C)
