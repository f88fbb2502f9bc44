"""
Tracking one hammered row
=========================

A row is mitigated on exactly the activation that brings its count to
half the Rowhammer threshold. Every tracker in the package agrees on that.
"""

from rowtrack import DESK, Geometry, Simulation, TrackerConfig
from rowtrack.trace import ActivationEvent

# a desk-sized memory: 32K rows of 8KB, 64-set 16-way LLC
geo = Geometry(DESK, TrackerConfig("start_d", t_rh=256))
print(geo.layout)

# 300 back-to-back activations of row 1234, one per tRC
events = [ActivationEvent(i * 45, 1234) for i in range(300)]

for variant in ("start_s", "start_d", "start_m", "start_lite", "ideal"):
    sim = Simulation(Geometry(DESK, TrackerConfig(variant, t_rh=256)), frontend=False)
    report = sim.run(events)
    first = sim.mitigations[0]
    # the effective threshold is 128; event indices also count the two victim
    # refreshes each mitigation adds, so the second lands on event 257, not 255
    print(f"{variant:10s} mitigations at events {[m.event_index for m in sim.mitigations if m.aggressor_row == 1234]}"
          f"  victims of the first: {list(first.victim_rows)}  violations: {report.violations}")
