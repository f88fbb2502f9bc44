"""Exact Rowhammer activation tracking with counters leased from the LLC."""

from .config import load_config
from .errors import ConfigError, RowtrackError
from .frontend import LLC, MemoryFrontend
from .geometry import DESK, BASELINE, BASELINE_512GB, Geometry, GeometryConfig, TrackerConfig, Variant, validate
from .metrics import RunReport, emit
from .mitigation import Mitigator, victim_rows
from .mtt import MemoryMappedTable
from .oracle import TruthState, check_exactness, check_refresh_window, check_mitigation_timing
from .sac import SacState, SacTable
from .sim import Simulation, miss_delta, simulate
from .trace import ActivationEvent, Cause, MemoryAccess, PatternSpec, generate, generate_activations
from .tracker import IdealTracker, StartTracker, make_tracker

__version__ = "0.1.0"
