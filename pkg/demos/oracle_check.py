"""Closed-form production term versus the Monte Carlo collision oracle.

The oracle samples collisions between Maxwellian particles and averages
gain minus loss; the coefficient module integrates the same operator in
closed form.  The two should agree within a few standard errors.
"""

from reactms import KernelSpec, PowerFactor, compute_A
from reactms.coefficients import AngularPower
from reactms.mixture import ReactionSpec, SpeciesParams
from reactms.oracle import MaxwellianState, McConfig, Reactive, mc_reactive_moment

reaction = ReactionSpec(
    (SpeciesParams(1.0, 0.0, 1), SpeciesParams(3.0, 0.0, 0), SpeciesParams(2.0, 0.6, 0), SpeciesParams(2.0, 0.0, 1))
)
kernel = KernelSpec(gamma=2.0, phi_react=PowerFactor(1.0, 0.5, 0.5), b_react=AngularPower(1.0, 0.5))
state = MaxwellianState([1.2, 0.8, 0.5, 0.9], 1.3)

A = compute_A(reaction, kernel, state.n, state.T)
print(f"closed form A = {A:.6f}")
for n in (10_000, 100_000, 1_000_000):
    est = mc_reactive_moment(reaction, kernel, state, cfg=McConfig(n, seed=3, channel=Reactive(2), threads=4))
    print(f"N = {n:>9,}: {est.value:.6f} +- {est.standard_error:.6f}  (z = {float(est.z_score(A)):+.2f})")
