"""
What tracking costs the cache
=============================

START-S gives half of the LLC to counters for good. START-D only leases
ways to sets that need them, so a cache-friendly workload barely notices.
"""

from rowtrack import DESK, TrackerConfig
from rowtrack.sim import miss_delta
from rowtrack.trace import MemoryAccess

cfg = DESK.replace(page_policy="close-row")
lines = cfg.llc_sets * 12  # 12 lines per set: fits 16 ways, not 8
accesses = [MemoryAccess(i * 45, (i % lines) * cfg.line_bytes) for i in range(20 * lines)]

for variant in ("ideal", "start_d", "start_s"):
    base, tracked, pct = miss_delta(accesses, cfg, TrackerConfig(variant, t_rh=256))
    print(f"{variant:8s} misses {base:6d} -> {tracked:6d}  ({pct:+.1f}%)")
