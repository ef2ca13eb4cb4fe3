"""One turn of the fleet-learning loop, entirely in process.

Ten vehicles drive in clear weather, then rain, where lateral motion is
1.5 times stronger than commanded. The backend collects mispredicted samples,
fits rain-specific weights and releases them through the non-regression gate.
A second drive with the same seed shows the effect.

    python3 demos/03_closed_loop.py
"""

from fleetloop.backend import Backend, train_cycle
from fleetloop.conditions import ConditionKey
from fleetloop.sim import ChannelConfig, ScenarioConfig, run_fleet

cfg = ScenarioConfig(n_vehicles=10, duration=600.0, seed=3, kappa={"RAIN": 1.5},
                     schedule=((0.0, "CLEAR/HIGHWAY_120"), (300.0, "RAIN/HIGHWAY_120")))
backend = Backend()


def show(label, log):
    print(label)
    for key, row in log.condition_summary().items():
        print(f"  {key:20s} triggers {row['triggers']:6d}  mean e_y {row['mean_e_y']:.4f} m")


# %% First drive on the basic parameters.
before = run_fleet(cfg, ChannelConfig(), backend)
show("before training:", before)
print("records collected:", len(backend.db))

# %% Fit and gate the rain condition.
report = train_cycle(backend.db, backend.store, ConditionKey.parse("RAIN/HIGHWAY_120"))
print("accepted:", report.accepted, "weights:", [round(w, 3) for w in report.candidate.weights])
for key, b, a in report.rows():
    print(f"  {key:20s} {b:.4f} -> {a:.4f}")

# %% Refitting the same records gains nothing, so the gate rejects it.
print("rerun accepted:", train_cycle(backend.db, backend.store, ConditionKey.parse("RAIN/HIGHWAY_120")).accepted)

# %% Same scenario again; vehicles now fetch the rain weights.
after = run_fleet(cfg, ChannelConfig(), backend)
show("after training:", after)
