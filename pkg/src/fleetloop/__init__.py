"""Fleet-learning loop for vehicle motion prediction.

In-vehicle prediction watchdogs flag mispredicted samples, a backend refits
condition-specific predictor weights behind a non-regression gate, and the
fleet fetches those weights per driving condition.
"""

from .conditions import BASIC, ConditionKey, SpeedBucket, Weather, all_conditions
from .kinematics import (
    FrenetPose,
    LaneGeometry,
    OffLaneError,
    VehicleState,
    WorldPose,
    from_frenet,
    step_state,
    to_frenet,
)
from .predictor import (
    FeatureSnapshot,
    ParameterSet,
    PredictedDisplacement,
    basic_parameters,
    extract_features,
    predict,
)
from .watchdog import (
    BufferedPrediction,
    EgoMotion,
    MeasurementPackage,
    ResidualReport,
    Watchdog,
    WatchdogConfig,
    compare,
    package,
)

__version__ = "0.1.0"

__all__ = [
    "BASIC", "BufferedPrediction", "ConditionKey", "EgoMotion", "FeatureSnapshot",
    "FrenetPose", "LaneGeometry", "MeasurementPackage", "OffLaneError", "ParameterSet",
    "PredictedDisplacement", "ResidualReport", "SpeedBucket", "VehicleState", "Watchdog",
    "WatchdogConfig", "Weather", "WorldPose", "all_conditions", "basic_parameters",
    "compare", "extract_features", "from_frenet", "package", "predict", "step_state",
    "to_frenet",
]
