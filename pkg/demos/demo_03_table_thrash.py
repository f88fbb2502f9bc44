"""
Thrashing the memory-mapped table
=================================

START-M spills counters to a table in DRAM once a set's 8 ways are full.
A workload that cycles through twice the LLC's tagged capacity forces a
table write and a table read on nearly every activation.
"""

from rowtrack import GeometryConfig, Geometry, Simulation, TrackerConfig
from rowtrack.trace import PatternSpec, generate_activations, thrash_pool

cfg = GeometryConfig(row_count=65536, llc_sets=64, window_ns=10**9)
geo = Geometry(cfg, TrackerConfig("start_m", t_rh=64))
pool = thrash_pool(geo, factor=2.0)
print(f"pool {len(pool)} rows vs 8-way capacity {geo.tagged_capacity(8)} entries")

spec = PatternSpec("mtt_thrash", count=4 * len(pool), duration_ns=10**9, seed=1)
sim = Simulation(geo, frontend=False, oracle="off")
rep = sim.run(generate_activations(spec, geo))

print(f"demand {rep.demand_acts}, metadata {rep.metadata_acts}, "
      f"ratio {rep.metadata_acts / rep.demand_acts:.3f}")
# the first pass fills the LLC without table traffic, so the ratio climbs
# toward 2 as the trace gets longer
print(f"table reads {rep.mtt_reads}, writes {rep.mtt_writes}, lazy resets {rep.mtt_resets}")
# rows holding the table are tracked like any other and get mitigated too
mtt = sim.tracker.mtt
hit = sorted({m.aggressor_row for m in sim.mitigations if mtt.is_mtt_row(m.aggressor_row)})
print(f"mitigated table rows: {hit[:8]}{' ...' if len(hit) > 8 else ''}")
