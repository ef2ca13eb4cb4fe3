"""Connectivity loss and the wire format.

Vehicles keep predicting through a 60 s outage, using fallback weights and
a bounded upload queue. Then a look at the framed messages they exchange
with the backend.

    python3 demos/04_offline_and_protocol.py
"""

import numpy as np

from fleetloop.backend import Backend
from fleetloop.conditions import ConditionKey
from fleetloop.predictor import ParameterSet
from fleetloop.protocol import ParamRequest, StreamDecoder, decode, encode
from fleetloop.sim import ChannelConfig, ScenarioConfig, run_fleet

rain = ConditionKey.parse("RAIN/HIGHWAY_120")

# %% A backend that already knows rain weights.
backend = Backend()
backend.store.record(ParameterSet((0.0, 1.3, 1.25, 0.0), 1, rain, 0.0), True, 0, {}, {})

# %% Rain starts at 120 s, while the link is down from 100 s to 160 s.
cfg = ScenarioConfig(n_vehicles=6, duration=240.0, seed=4, kappa={"RAIN": 1.5},
                     schedule=((0.0, "CLEAR/HIGHWAY_120"), (120.0, "RAIN/HIGHWAY_120")))
channel = ChannelConfig(offline_windows=((100.0, 160.0),), queue_capacity=150, prefetch=False)
log = run_fleet(cfg, channel, backend)

t = log.traj.times
for lo, hi in ((120, 160), (160, 240)):
    used = np.unique(log.param_version[(t >= lo) & (t < hi)])
    print(f"{lo:3d}-{hi:3d} s: parameter versions in use {used.tolist()}")
print(f"triggered {len(log.packages)}, dropped {len(log.drops)}, stored {len(backend.db)}")

# %% A parameter request on the wire: 4-byte length, then JSON.
frame = encode(ParamRequest("veh-1", rain))
print(frame)
print(decode(frame))

# %% Frames survive arbitrary chunking.
dec = StreamDecoder()
msgs = [m for i in range(0, len(frame * 3), 5) for m in dec.feed((frame * 3)[i:i + 5])]
print(len(msgs), "messages decoded from 5-byte chunks")
