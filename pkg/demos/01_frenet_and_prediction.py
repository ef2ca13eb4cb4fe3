"""Lane-relative coordinates and the physics-based lateral predictor.

Walks through projecting world poses onto an L-shaped lane, then predicts
where a drifting vehicle will sit three seconds from now.

    python3 demos/01_frenet_and_prediction.py
"""

import numpy as np

from fleetloop import ConditionKey, FeatureSnapshot, SpeedBucket, Weather, WorldPose, basic_parameters, predict
from fleetloop.kinematics import from_frenet, polyline, to_frenet

# %% A lane that runs east for 100 m, then turns north for another 100 m.
lane = polyline([(0.0, 0.0), (100.0, 0.0), (100.0, 100.0)])
print("lane length:", lane.length)

# %% A point 3 m right of the northbound leg, halfway up.
fp = to_frenet(WorldPose(103.0, 50.0, 0.0), lane)
print("(103, 50) ->", fp)          # s = 150, d = -3 (right of travel is negative)

# %% Round trip: back to world coordinates.
print("back to world:", from_frenet(fp, lane))

# %% A vehicle at 25 m/s drifting left at 0.5 m/s and accelerating laterally 0.1 m/s^2.
rain = ConditionKey(Weather.RAIN, SpeedBucket.HIGHWAY_120)
f = FeatureSnapshot(v_lon=25.0, a_lon=0.0, v_lat=0.5, a_lat=0.1, d_offset=0.2, condition=rain, captured_at=0.0)
p = basic_parameters()
print("basic weights:", p.weights)
pred = predict(f, p, 3.0)
print(f"3 s ahead: ds = {pred.delta_s:.2f} m, dd = {pred.delta_d:.2f} m")   # 75.00 m, 1.95 m

# %% Lateral prediction over a range of horizons.
for h in np.arange(0.5, 3.01, 0.5):
    print(f"  t_h = {h:.1f} s  dd = {predict(f, p, h).delta_d:.3f} m")
