"""
Watching a set grow
===================

START-D leases LLC ways to a set only when its tracked rows overflow:
one way, then two (entries split by tag parity), then eight ways holding
one byte per row with no tags at all.
"""

from rowtrack import DESK, Geometry, TrackerConfig, make_tracker
from rowtrack.trace import ActivationEvent

geo = Geometry(DESK, TrackerConfig("start_d", t_rh=256))
tracker = make_tracker(geo)
per_line = geo.layout.entries_per_line
# every 7th row of set 5, so the rows spread over all eight tag buckets
rows = geo.rows_of_set(5)[::7]
print(f"{per_line} tagged entries fit in one {DESK.line_bytes}B line")

# touch distinct rows of set 5 and report each change of allocation
state = tracker.sac.get(5)
for i, row in enumerate(rows[:3 * per_line].tolist()):
    tracker.on_activation(ActivationEvent(i, row))
    if tracker.sac.get(5) is not state:
        state = tracker.sac.get(5)
        print(f"after {i + 1:3d} distinct rows: {state.name} -> {state.ways} reserved ways")

for rep in tracker.reorgs:
    print(f"  {rep.old_state.name}->{rep.new_state.name}: {rep.entries} entries, {rep.moved} moved")

# every count survived the reorganizations
assert all(tracker.count_of(int(r)) == 1 for r in rows[:3 * per_line])

# START-M stays tagged; 8 ways hashed by the top three tag bits
m = make_tracker(Geometry(DESK, TrackerConfig("start_m", t_rh=256)))
for i, row in enumerate(rows[:3 * per_line].tolist()):
    m.on_activation(ActivationEvent(i, row))
print("START-M set 5:", m.sac.get(5).name, "entries per way", [bin(u).count("1") for u in m.used[5]])
