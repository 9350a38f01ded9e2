"""
Duality on Poisson space
========================

Smooth random variables ``F = Σ c_j Π exp(i γ Ñ(φ))``, their add-one-point
derivative, the duality ``E[F Ñ(φ)] = E⟨DF, φ⟩`` and the Itô integral of an
adapted integrand seen as a Skorohod integral.
"""

import numpy as np

from jumpflow.levy import TruncatedStable
from jumpflow.malliavin import (TrigSmoothRV, chasles_check, derivative, ipp_check, ipp_closed_form, ito_by_jumps,
                                plus_point, random_adapted_integrand, random_rv, skorohod_by_duality)
from jumpflow.mc import substream
from jumpflow.prm import StepKernel, generate_path

nu = TruncatedStable(1.0, 1.0)
eps = 0.1
phi = StepKernel.single(0.0, 1.0, ["(0.2,1]"], 0.7)
F = TrigSmoothRV.exp_i(0.8, phi)
path = generate_path(nu, 0.0, 1.0, eps, substream(0, 0))

###############################################################################
# D_{(t,z)} F is F on the path with one more point, minus F.
D = derivative(F)
print(D(path, 0.5, 0.6), plus_point(F, path, 0.5, 0.6) - F.evaluate(path))

###############################################################################
# Both sides of the duality on common paths, and the closed form for this F.
rep = ipp_check(F, phi, nu, 100_000, seed=1, eps=eps)
print("E[F Ñ(φ)]  =", np.round(rep.lhs, 5))
print("E<DF, φ>   =", np.round(rep.rhs, 5))
print("closed form =", np.round(ipp_closed_form(0.8, phi, nu, eps), 5), " z =", round(rep.z, 2))

###############################################################################
# A random adapted integrand: the duality route and the jump sum agree exactly.
rng = np.random.default_rng(3)
sizes = ["(0.1,0.3]", "(0.3,0.6]", "(0.6,1]", "[-1,-0.4)", "[-0.4,-0.1)"]
u = random_adapted_integrand(rng, 0.0, 1.0, sizes)
print("duality:", skorohod_by_duality(path, u))
print("jumps:  ", ito_by_jumps(path, u))
print("Chasles residual:", chasles_check(path, u, 0.3, 0.7))
