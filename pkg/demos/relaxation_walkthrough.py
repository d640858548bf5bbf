"""Chemical relaxation of a homogeneous mixture, printed step by step.

Run with ``python3 demos/relaxation_walkthrough.py``.  The mixture starts far
from mass action; the reaction consumes species 1 and 2, releases heat and
settles where n1 n2 / (n3 n4) equals its temperature-dependent equilibrium
value.  The three conserved partial sums never move.
"""

from pathlib import Path

from reactms import CoefficientCache
from reactms.config import parse_config
from reactms.solver import chemistry_timescale, equilibrium_residual, relax_0d

cfg = parse_config(Path(__file__).with_name("relax0d.toml"))
reaction, kernel = cfg.reaction(), cfg.kernel_spec()
cache = CoefficientCache(reaction, kernel)
n0, T0 = cfg.initial_profiles(1)

tau = chemistry_timescale(reaction, cache, n0, T0)
print(f"reaction heat E = {reaction.heat:+.3f}, relaxation time ~ {tau:.3g}")
traj = relax_0d(reaction, cache, n0[0], float(T0[0]), 30 * tau, output_every=50)

print(f"{'t':>9} {'n1':>9} {'n3':>9} {'T':>8} {'residual':>10}  n1+n3")
for t, s in zip(traj.times, traj.states):
    res = equilibrium_residual(reaction, s.n, s.T)[0]
    print(f"{t:9.3f} {s.n[0, 0]:9.5f} {s.n[0, 2]:9.5f} {s.T[0]:8.5f} {res:10.2e}  {float(s.partial_totals()[0])!r}")
