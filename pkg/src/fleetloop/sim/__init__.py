from .fleet import BackendUnreachable, ExpiryLog, RequestRecord, SimLog, run_fleet
from .logio import read_log, summary, write_log
from .replay import IncompleteLog, ReplayDiff, diff_packages, expiry_age, replay
from .scenario import (
    ChannelConfig,
    Maneuver,
    ScenarioConfig,
    Trajectories,
    generate_scenario,
    load_run_config,
    maneuver_script,
)

__all__ = [
    "BackendUnreachable", "ChannelConfig", "ExpiryLog", "IncompleteLog", "Maneuver",
    "ReplayDiff", "RequestRecord", "ScenarioConfig", "SimLog", "Trajectories",
    "diff_packages", "expiry_age", "generate_scenario", "load_run_config",
    "maneuver_script", "read_log", "replay", "run_fleet", "summary", "write_log",
]
