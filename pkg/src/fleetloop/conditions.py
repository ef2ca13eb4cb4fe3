"""External driving conditions that select a parameter set."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import total_ordering


class Weather(enum.Enum):
    CLEAR = 0
    RAIN = 1
    SNOW = 2
    FOG = 3


class SpeedBucket(enum.Enum):
    URBAN_50 = 0
    RURAL_100 = 1
    HIGHWAY_120 = 2
    UNLIMITED = 3


@total_ordering
@dataclass(frozen=True, slots=True)
class ConditionKey:
    weather: Weather
    speed_limit_bucket: SpeedBucket

    def __lt__(self, other: "ConditionKey") -> bool:
        return self.sort_key() < other.sort_key()

    def sort_key(self) -> tuple[int, int]:
        return self.weather.value, self.speed_limit_bucket.value

    def __str__(self) -> str:
        return f"{self.weather.name}/{self.speed_limit_bucket.name}"

    @classmethod
    def parse(cls, text: str) -> "ConditionKey":
        """Parse ``"RAIN/HIGHWAY_120"`` (also accepts ``,`` or ``:`` as separator)."""
        for sep in ("/", ",", ":"):
            if sep in text:
                weather, bucket = text.split(sep, 1)
                break
        else:
            raise ValueError(f"condition {text!r} is not WEATHER/SPEED_BUCKET")
        try:
            return cls(Weather[weather.strip().upper()], SpeedBucket[bucket.strip().upper()])
        except KeyError as exc:
            raise ValueError(f"unknown condition component {exc.args[0]!r}") from None

    def to_dict(self) -> dict:
        return {"speed_limit_bucket": self.speed_limit_bucket.name, "weather": self.weather.name}

    @classmethod
    def from_dict(cls, data: dict) -> "ConditionKey":
        return cls(Weather[data["weather"]], SpeedBucket[data["speed_limit_bucket"]])


def all_conditions() -> list[ConditionKey]:
    """All 16 keys in canonical order."""
    return [ConditionKey(w, b) for w in Weather for b in SpeedBucket]


class _Basic:
    """Marker for the condition-independent fallback parameter set."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "BASIC"

    __str__ = __repr__

    def __reduce__(self):
        return (_Basic, ())


BASIC = _Basic()
