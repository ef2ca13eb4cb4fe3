"""Acceleration histograms of the triggered samples.

Runs a short mixed-weather drive, writes its logs and bins the
longitudinal and lateral accelerations of every triggered sample.

    python3 demos/05_histograms.py
"""

import tempfile
from pathlib import Path

from fleetloop.backend import Backend
from fleetloop.sim import ChannelConfig, ScenarioConfig, run_fleet, write_log
from fleetloop.stats import HistogramSpec, histogram, read_channel

cfg = ScenarioConfig(n_vehicles=5, duration=300.0, seed=0, kappa={"RAIN": 1.5},
                     schedule=((0.0, "CLEAR/HIGHWAY_120"), (150.0, "RAIN/HIGHWAY_120")))
log = run_fleet(cfg, ChannelConfig(), Backend())
out = Path(tempfile.mkdtemp())
write_log(log, out)
print("logs in", out)

# %% Text bar charts, one per channel.
for channel, width, lim in (("a_lon", 0.5, 4.0), ("a_lat", 0.05, 0.2)):
    values = read_channel(out / "triggered.csv", channel)
    h = histogram(values, HistogramSpec.for_channel(channel, width, -lim, lim))
    print(f"\n{channel}: {h.total} samples, {h.out_of_range} outside the range")
    peak = max(h.counts.max(), 1)
    for lo, hi, c in h.rows():
        print(f"  [{lo:6.2f}, {hi:6.2f})  {c:6d} {'#' * int(40 * c / peak)}")
