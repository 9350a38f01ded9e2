"""
Integrals against a Poisson random measure
==========================================

A 1-truncated α-stable Lévy measure, the paths it generates once jumps below
``eps`` are dropped, and the compensated integral of a step kernel.
"""

import numpy as np

from jumpflow.levy import TruncatedStable
from jumpflow.mc import MCEstimate
from jumpflow.prm import StepKernel, compensator_integral, generate_batch

nu = TruncatedStable(alpha=1.0, cutoff=1.0)

# second moment 2/(2-α) and the mass beyond eps
print("∫z² ν(dz) =", nu.moment(2.0))
for eps in (0.05, 0.1, 0.5):
    print(f"ν(|z| > {eps}) = {nu.tail_mass(eps):.6g}")

###############################################################################
# Paths on (0, 1] with eps = 0.1: about 18 jumps each.
batch = generate_batch(nu, 0.0, 1.0, 0.1, seed=0, indices=range(50_000))
print("mean jump count:", batch.counts.mean(), "expected:", nu.tail_mass(0.1))

###############################################################################
# Ñ(φ) for φ = 1 on [0,1) x ((0.5,1] ∪ [-1,-0.5)) is centred with variance
# ∫φ² dt ν = 2.
phi = StepKernel.single(0.0, 1.0, ["(0.5,1]", "[-1,-0.5)"])
jt, jz = batch.padded()
n_phi = phi(jt, jz).sum(axis=1) - compensator_integral(nu, phi, 0.1)
mean = MCEstimate.from_samples(n_phi)
print(f"E Ñ(φ) = {mean.mean:.4f} ± {mean.stderr:.4f}")
print(f"Var Ñ(φ) = {n_phi.var(ddof=1):.4f}   (isometry: {phi.l2_norm_sq(nu):.4f})")
