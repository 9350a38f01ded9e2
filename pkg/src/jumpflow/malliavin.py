"""Trigonometric smooth random variables on Poisson space and their add-one-point derivative.

A smooth random variable is ``F = Σ_j c_j Π_k exp(i γ_{jk} Ñ(φ_{jk}))`` with
step kernels ``φ_{jk}``.  Its derivative ``D_{(t,z)} F = F(ω + δ_{(t,z)}) - F(ω)``
has the closed form ``Σ_j c_j e_j (exp(i Σ_k γ_{jk} φ_{jk}(t, z)) - 1)`` with
``e_j`` the j-th product on the path.  Since every kernel is piecewise constant
on a common refinement of time cells and size cells, ``⟨DF, φ⟩`` reduces to
``Σ_j c_j e_j κ_j`` with deterministic ``κ_j``, so the duality
``E[F Ñ(φ)] = E[⟨DF, φ⟩]`` can be tested without inner quadrature.

The intensity throughout is the simulated one, ``dt ⊗ ν`` restricted to
``{|z| > eps}``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AdaptednessViolation
from .levy import LevyMeasure
from .mc import MCEstimate
from .prm import (JumpPath, PathBatch, Rectangle, SizeInterval, StepKernel,
                  compensator_integral, generate_batch, integrate_compensated)


@dataclass(frozen=True)
class Term:
    coefficient: complex
    factors: tuple  # of (gamma, StepKernel)


class TrigSmoothRV:
    """``Σ_j c_j Π_k exp(i γ_{jk} Ñ(φ_{jk}))`` on the horizon ``(S, T]``."""

    def __init__(self, terms: Sequence, S: float = 0.0, T: float = 1.0):
        self.terms = tuple(t if isinstance(t, Term) else
                           Term(complex(t[0]), tuple((float(g), k) for g, k in t[1])) for t in terms)
        self.S, self.T = float(S), float(T)
        for kern in self.kernels():
            kern.check_horizon(self.S, self.T)

    def __repr__(self):
        return f"TrigSmoothRV({len(self.terms)} terms on ({self.S}, {self.T}])"

    @classmethod
    def constant(cls, c: complex, S=0.0, T=1.0) -> "TrigSmoothRV":
        return cls([Term(complex(c), ())], S, T)

    @classmethod
    def exp_i(cls, gamma: float, kernel: StepKernel, c: complex = 1.0, S=0.0, T=1.0) -> "TrigSmoothRV":
        return cls([Term(complex(c), ((float(gamma), kernel),))], S, T)

    def __mul__(self, other: "TrigSmoothRV") -> "TrigSmoothRV":
        terms = [Term(a.coefficient * b.coefficient, a.factors + b.factors)
                 for a in self.terms for b in other.terms]
        return TrigSmoothRV(terms, min(self.S, other.S), max(self.T, other.T))

    def __add__(self, other: "TrigSmoothRV") -> "TrigSmoothRV":
        return TrigSmoothRV(self.terms + other.terms, min(self.S, other.S), max(self.T, other.T))

    def kernels(self) -> list[StepKernel]:
        return [k for t in self.terms for _, k in t.factors]

    @property
    def is_deterministic(self) -> bool:
        return all(g == 0.0 or not k.rectangles for t in self.terms for g, k in t.factors)

    @property
    def time_support_end(self) -> float:
        """Right end of the union of kernel time supports (``-inf`` if none)."""
        ends = [k.time_support[1] for k in self.kernels() if k.rectangles]
        return max(ends) if ends else -math.inf

    @property
    def bound(self) -> float:
        return sum(abs(t.coefficient) for t in self.terms)

    # -- evaluation ----------------------------------------------------------
    def products(self, path: JumpPath, measure: LevyMeasure | None = None) -> np.ndarray:
        """``e_j = Π_k exp(i γ_{jk} Ñ(φ_{jk}))`` for each term."""
        out = np.empty(len(self.terms), dtype=complex)
        for j, term in enumerate(self.terms):
            phase = sum(g * integrate_compensated(path, k, measure) for g, k in term.factors)
            out[j] = cmath.exp(1j * phase)
        return out

    def products_batch(self, batch: PathBatch, measure: LevyMeasure | None = None) -> np.ndarray:
        """``(P, n_terms)`` array of the products over all paths of ``batch``."""
        measure = batch.measure if measure is None else measure
        jt, jz = batch.padded()
        cache: dict[int, np.ndarray] = {}

        def nt(kern):
            key = id(kern)
            if key not in cache:
                kern.check_horizon(batch.S, batch.T)
                cache[key] = (np.sum(kern(jt, jz), axis=1)
                              - compensator_integral(measure, kern, batch.eps))
            return cache[key]

        out = np.empty((len(batch), len(self.terms)), dtype=complex)
        for j, term in enumerate(self.terms):
            phase = np.zeros(len(batch))
            for g, k in term.factors:
                phase = phase + g * nt(k)
            out[:, j] = np.exp(1j * phase)
        return out

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([t.coefficient for t in self.terms], dtype=complex)

    def evaluate(self, path: JumpPath, measure: LevyMeasure | None = None) -> complex:
        return complex(np.dot(self.coefficients, self.products(path, measure)))

    def evaluate_batch(self, batch: PathBatch, measure: LevyMeasure | None = None) -> np.ndarray:
        return self.products_batch(batch, measure) @ self.coefficients


def evaluate_rv(F: TrigSmoothRV, path: JumpPath, measure: LevyMeasure | None = None) -> complex:
    """Value of ``F`` on ``path``."""
    return F.evaluate(path, measure)


class DerivativeField:
    """Add-one-point derivative ``(t, z) ↦ F⁺_{(t,z)} - F`` of a smooth random variable."""

    def __init__(self, base: TrigSmoothRV):
        self.base = base

    def phase_jumps(self, t, z) -> np.ndarray:
        """``exp(i Σ_k γ_{jk} φ_{jk}(t, z)) - 1`` per term, shape ``broadcast(t, z) + (n_terms,)``."""
        t = np.asarray(t, dtype=float)
        z = np.asarray(z, dtype=float)
        shape = np.broadcast(t, z).shape
        out = np.empty(shape + (len(self.base.terms),), dtype=complex)
        for j, term in enumerate(self.base.terms):
            phase = np.zeros(shape)
            for g, k in term.factors:
                phase = phase + g * k(t, z)
            out[..., j] = np.exp(1j * phase) - 1.0
        return out

    def __call__(self, path: JumpPath, t, z, measure: LevyMeasure | None = None):
        e = self.base.products(path, measure)
        return self.phase_jumps(t, z) @ (self.base.coefficients * e)

    def pairing_weights(self, phi: StepKernel, measure: LevyMeasure, eps: float) -> np.ndarray:
        """Deterministic ``κ_j = ∫∫ φ (exp(i Σ_k γ_{jk} φ_{jk}) - 1) dt ν_eps(dz)``."""
        kernels = self.base.kernels() + [phi]
        kappa = np.zeros(len(self.base.terms), dtype=complex)
        for tc, tlen, zc, mass in refinement_cells(kernels, measure, eps):
            w = float(phi(tc, zc))
            if w == 0.0:
                continue
            kappa += w * tlen * mass * self.phase_jumps(tc, zc)
        return kappa

    def pairing(self, path: JumpPath, phi: StepKernel, measure: LevyMeasure | None = None) -> complex:
        """``⟨DF, φ⟩_{L²(dt ⊗ ν_eps)}`` on one path, exactly."""
        measure = path.measure if measure is None else measure
        kappa = self.pairing_weights(phi, measure, path.eps)
        return complex(np.dot(self.base.coefficients * self.base.products(path, measure), kappa))


def derivative(F: TrigSmoothRV) -> DerivativeField:
    """The add-one-point Malliavin derivative of ``F``."""
    return DerivativeField(F)


def plus_point(F: TrigSmoothRV, path: JumpPath, t: float, z: float,
               measure: LevyMeasure | None = None) -> complex:
    """``F`` re-evaluated on the path with the extra point ``(t, z)`` inserted."""
    return F.evaluate(path.with_points([t], [z]), measure)


def refinement_cells(kernels: Sequence[StepKernel], measure: LevyMeasure, eps: float):
    """Cells on which every kernel is constant: ``(t_mid, length, z_rep, ν_eps-mass)``.

    Time cells are the gaps between all rectangle time edges.  Size cells are
    the open gaps between all interval edges (and ``±eps``) plus the edge
    points themselves, which carry the atoms of a discrete measure.
    """
    tedges = sorted({e for k in kernels for e in k.time_edges()})
    zedges = sorted({e for k in kernels for e in k.size_edges()} | {-eps, eps})
    size_cells = []
    bounds = [-math.inf] + zedges + [math.inf]
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if lo < hi:
            if math.isinf(lo):
                rep = hi - 1.0
            elif math.isinf(hi):
                rep = lo + 1.0
            else:
                rep = 0.5 * (lo + hi)
            size_cells.append((rep, SizeInterval(lo, hi, False, False)))
    for e in zedges:
        if e != 0.0:
            size_cells.append((e, SizeInterval(e, e, True, True)))
    masses = []
    for rep, cell in size_cells:
        if abs(rep) <= eps or rep == 0.0:
            continue
        m = sum(p.mass(measure) for p in cell.cut_beyond(eps))
        if m > 0.0:
            masses.append((rep, m))
    for a, b in zip(tedges[:-1], tedges[1:]):
        for rep, m in masses:
            yield 0.5 * (a + b), b - a, rep, m


def characteristic_functional(gamma: float, phi: StepKernel, measure: LevyMeasure, eps: float) -> complex:
    """``E exp(i γ Ñ(φ)) = exp(∫∫ (e^{iγφ} - 1 - iγφ) dt ν_eps(dz))``."""
    total = 0.0 + 0.0j
    for r in phi.rectangles:
        w = r.weight
        total += (r.t1 - r.t0) * r.size_mass(measure, eps) * (cmath.exp(1j * gamma * w) - 1.0 - 1j * gamma * w)
    return cmath.exp(total)


def ipp_closed_form(gamma: float, phi: StepKernel, measure: LevyMeasure, eps: float) -> complex:
    """``E[F Ñ(φ)]`` for ``F = exp(i γ Ñ(φ))``: ``E[F] ∫∫ φ (e^{iγφ} - 1) dt ν_eps(dz)``."""
    pairing = sum((r.t1 - r.t0) * r.size_mass(measure, eps) * r.weight * (cmath.exp(1j * gamma * r.weight) - 1.0)
                  for r in phi.rectangles)
    return characteristic_functional(gamma, phi, measure, eps) * pairing


@dataclass(frozen=True)
class IPPReport:
    lhs: complex
    rhs: complex
    stderr_re: float
    stderr_im: float
    z_re: float
    z_im: float
    n: int

    @property
    def z(self) -> float:
        return max(abs(self.z_re), abs(self.z_im))

    @property
    def stderr(self) -> float:
        return max(self.stderr_re, self.stderr_im)

    @property
    def passed(self) -> bool:
        return self.z <= 3.0

    def to_dict(self) -> dict:
        return {"lhs_re": self.lhs.real, "lhs_im": self.lhs.imag, "rhs_re": self.rhs.real,
                "rhs_im": self.rhs.imag, "stderr": self.stderr, "z": self.z}


def ipp_sides_batch(F: TrigSmoothRV, phi: StepKernel, batch: PathBatch,
                    measure: LevyMeasure | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-path ``F Ñ(φ)`` and ``⟨DF, φ⟩`` on a batch."""
    measure = batch.measure if measure is None else measure
    jt, jz = batch.padded()
    phi.check_horizon(batch.S, batch.T)
    nphi = np.sum(phi(jt, jz), axis=1) - compensator_integral(measure, phi, batch.eps)
    e = F.products_batch(batch, measure) * F.coefficients
    kappa = DerivativeField(F).pairing_weights(phi, measure, batch.eps)
    return e.sum(axis=1) * nphi, e @ kappa


def ipp_check(F: TrigSmoothRV, phi: StepKernel, measure: LevyMeasure, n_paths: int, seed: int,
              eps: float, batch: PathBatch | None = None) -> IPPReport:
    """Monte Carlo test of ``E[F Ñ(φ)] = E[⟨DF, φ⟩]`` on common paths."""
    if batch is None:
        batch = generate_batch(measure, F.S, F.T, eps, seed, range(n_paths))
    lhs, rhs = ipp_sides_batch(F, phi, batch, measure)
    d = lhs - rhs
    er = MCEstimate.from_samples(d.real)
    ei = MCEstimate.from_samples(d.imag)
    return IPPReport(complex(lhs.mean()), complex(rhs.mean()), er.stderr, ei.stderr,
                     er.z_score(), ei.z_score(), len(batch))


# -- adapted integrands ------------------------------------------------------------

@dataclass(frozen=True)
class AdaptedIntegrand:
    """``u(t, z) = Σ_i F_i 1_{rect_i}(t, z)`` with each ``F_i`` known before ``rect_i`` starts."""

    pieces: tuple  # of (Rectangle, TrigSmoothRV | None)

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        self.check()

    def check(self):
        for rect, F in self.pieces:
            if F is not None and F.time_support_end > rect.t0:
                raise AdaptednessViolation(
                    f"coefficient uses kernels up to t={F.time_support_end} but the rectangle starts at {rect.t0}")

    def restrict_time(self, a: float, b: float) -> "AdaptedIntegrand":
        out = []
        for rect, F in self.pieces:
            lo, hi = max(rect.t0, a), min(rect.t1, b)
            if hi > lo:
                out.append((Rectangle(lo, hi, rect.sizes, rect.weight), F))
        return AdaptedIntegrand(tuple(out))


def _coef(F, path, measure):
    return 1.0 + 0.0j if F is None else F.evaluate(path, measure)


def skorohod_adapted(path: JumpPath, u: AdaptedIntegrand, measure: LevyMeasure | None = None) -> complex:
    """``Σ_i F_i (N(rect_i) - ∫∫ 1_{rect_i} dt ν_eps)``: the integral of an adapted step integrand.

    Raises
    ------
    AdaptednessViolation
        If some ``F_i`` depends on the noise after its rectangle starts.
    """
    u.check()
    total = 0.0 + 0.0j
    for rect, F in u.pieces:
        total += _coef(F, path, measure) * integrate_compensated(path, StepKernel([rect]), measure)
    return total


def skorohod_by_duality(path: JumpPath, u: AdaptedIntegrand, measure: LevyMeasure | None = None) -> complex:
    """Elementary Skorohod integral ``Σ_i (F_i Ñ(φ_i) - ⟨D F_i, φ_i⟩)``, the duality-defined route."""
    u.check()
    total = 0.0 + 0.0j
    for rect, F in u.pieces:
        phi = StepKernel([rect])
        nphi = integrate_compensated(path, phi, measure)
        if F is None:
            total += nphi
        else:
            total += F.evaluate(path, measure) * nphi - DerivativeField(F).pairing(path, phi, measure)
    return total


def ito_by_jumps(path: JumpPath, u: AdaptedIntegrand, measure: LevyMeasure | None = None) -> complex:
    """Itô integral as a sum over the path's jumps minus the predictable compensator."""
    measure = path.measure if measure is None else measure
    coefs = [_coef(F, path, measure) for _, F in u.pieces]
    jumps = 0.0 + 0.0j
    for t, z in zip(path.times, path.sizes):
        for (rect, _), c in zip(u.pieces, coefs):
            if rect.contains(t, z):
                jumps += c * rect.weight
    comp = sum(c * rect.weight * (rect.t1 - rect.t0) * rect.size_mass(measure, path.eps)
               for (rect, _), c in zip(u.pieces, coefs))
    return jumps - comp


def skorohod_ito_residual(path: JumpPath, u: AdaptedIntegrand, measure: LevyMeasure | None = None) -> float:
    return abs(skorohod_by_duality(path, u, measure) - ito_by_jumps(path, u, measure))


def skorohod_adapted_batch(batch: PathBatch, u: AdaptedIntegrand,
                           measure: LevyMeasure | None = None) -> np.ndarray:
    u.check()
    measure = batch.measure if measure is None else measure
    jt, jz = batch.padded()
    total = np.zeros(len(batch), dtype=complex)
    for rect, F in u.pieces:
        phi = StepKernel([rect])
        nphi = np.sum(phi(jt, jz), axis=1) - compensator_integral(measure, phi, batch.eps)
        total += (1.0 if F is None else F.evaluate_batch(batch, measure)) * nphi
    return total


def chasles_check(path: JumpPath, u: AdaptedIntegrand, s: float, t: float,
                  measure: LevyMeasure | None = None) -> float:
    """``|∫_S^s + ∫_s^t + ∫_t^T - ∫_S^T|`` of the adapted integral on one path."""
    if not path.S <= s <= t <= path.T:
        raise ValueError("need S <= s <= t <= T")
    whole = skorohod_adapted(path, u, measure)
    parts = sum(skorohod_adapted(path, u.restrict_time(a, b), measure)
                for a, b in ((path.S, s), (s, t), (t, path.T)))
    return abs(parts - whole)


# -- random instances for test suites --------------------------------------------

def random_kernel(rng, S: float, T: float, sizes: Sequence[str], n_rect: int = 2,
                  t_max: float | None = None) -> StepKernel:
    """Disjoint-in-time rectangles with random weights on ``[S, t_max)``."""
    t_max = T if t_max is None else t_max
    cuts = np.sort(rng.uniform(S, t_max, 2 * n_rect))
    rects = []
    for i in range(n_rect):
        sz = [sizes[int(rng.integers(len(sizes)))]]
        rects.append(Rectangle(float(cuts[2 * i]), float(cuts[2 * i + 1]), sz,
                               float(rng.uniform(-1.5, 1.5))))
    return StepKernel(rects)


def random_rv(rng, S: float, T: float, sizes: Sequence[str], t_max: float | None = None,
              n_terms: int = 2, n_factors: int = 2) -> TrigSmoothRV:
    terms = []
    for _ in range(n_terms):
        c = complex(rng.normal(), rng.normal()) / math.sqrt(2 * n_terms)
        factors = tuple((float(rng.uniform(-2, 2)), random_kernel(rng, S, T, sizes, 2, t_max))
                        for _ in range(n_factors))
        terms.append(Term(c, factors))
    return TrigSmoothRV(terms, S, T)


def random_adapted_integrand(rng, S: float, T: float, sizes: Sequence[str], n_pieces: int = 3) -> AdaptedIntegrand:
    cuts = np.sort(rng.uniform(S, T, 2 * n_pieces))
    pieces = []
    for i in range(n_pieces):
        t0, t1 = float(cuts[2 * i]), float(cuts[2 * i + 1])
        rect = Rectangle(t0, t1, [sizes[int(rng.integers(len(sizes)))]], float(rng.uniform(-1, 1)))
        F = random_rv(rng, S, T, sizes, t_max=t0, n_terms=1, n_factors=1) if t0 > S else None
        pieces.append((rect, F))
    return AdaptedIntegrand(tuple(pieces))
