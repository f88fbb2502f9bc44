"""
Lower thresholds, more mitigations
==================================

The same double-sided hammer, tracked at thresholds from 4K down to 16.
Mitigations scale with 1/T_RH; the blast radius multiplies refreshes.
"""

from rowtrack import DESK, Geometry, Simulation, TrackerConfig
from rowtrack.trace import PatternSpec, generate_activations

spec = PatternSpec("double_sided", row_pool=range(1000), count=50_000, duration_ns=10**7)

print(" t_rh  radius  mitigations  refreshes")
for t_rh in (4096, 1024, 256, 64, 16):
    for radius in (1, 4) if t_rh >= 64 else (1,):
        geo = Geometry(DESK, TrackerConfig("start_m", t_rh=t_rh, blast_radius=radius))
        rep = Simulation(geo, frontend=False).run(generate_activations(spec, geo))
        assert rep.violations == 0
        print(f"{t_rh:5d}  {radius:6d}  {rep.mitigations:11d}  {rep.victim_refreshes:9d}")
