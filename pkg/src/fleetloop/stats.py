"""Histograms of the triggered-sample log."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .watchdog import TRIGGER_COLUMNS

CHANNELS = ("a_lon", "a_lat", "e_x", "e_y")
DEFAULT_RANGES = {
    "a_lon": (-8.0, 8.0),
    "a_lat": (-8.0, 8.0),
    "e_x": (0.0, 10.0),
    "e_y": (0.0, 5.0),
}


class SchemaError(KeyError):
    """The CSV lacks a required column; ``args[0]`` is its name."""


@dataclass(frozen=True)
class HistogramSpec:
    channel: str
    bin_width: float
    lo: float
    hi: float

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}, expected one of {', '.join(CHANNELS)}")
        if not (self.bin_width > 0 and math.isfinite(self.bin_width)):
            raise ValueError("bin width must be positive")
        if not self.hi > self.lo:
            raise ValueError("range must satisfy min < max")
        n = (self.hi - self.lo) / self.bin_width
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError(f"bin width {self.bin_width} does not divide range [{self.lo}, {self.hi}]")

    @classmethod
    def for_channel(cls, channel: str, bin_width: float, lo: Optional[float] = None,
                    hi: Optional[float] = None) -> "HistogramSpec":
        d_lo, d_hi = DEFAULT_RANGES.get(channel, (0.0, 1.0))
        return cls(channel, bin_width, d_lo if lo is None else lo, d_hi if hi is None else hi)

    @property
    def n_bins(self) -> int:
        return int(round((self.hi - self.lo) / self.bin_width))

    def edges(self) -> np.ndarray:
        # rounded so decimal widths give the edges a reader expects (0.2, not 0.20000000000000004)
        return np.round(np.linspace(self.lo, self.hi, self.n_bins + 1), 12)


@dataclass
class Histogram:
    spec: HistogramSpec
    edges: np.ndarray
    counts: np.ndarray
    out_of_range: int

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.out_of_range

    def rows(self):
        for i, c in enumerate(self.counts):
            yield float(self.edges[i]), float(self.edges[i + 1]), int(c)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo", "bin_hi", "count"])
            for lo, hi, c in self.rows():
                w.writerow([repr(lo), repr(hi), c])


def histogram(values, spec: HistogramSpec) -> Histogram:
    """Bins are ``[lo, hi)``, except the last one which also takes ``max``."""
    x = np.asarray(values, dtype=float)
    edges = spec.edges()
    idx = np.searchsorted(edges, x, side="right") - 1
    idx[x == edges[-1]] = spec.n_bins - 1
    inside = (idx >= 0) & (idx < spec.n_bins) & np.isfinite(x)
    counts = np.bincount(idx[inside], minlength=spec.n_bins)
    return Histogram(spec, edges, counts, int((~inside).sum()))


def read_channel(path, channel: str) -> np.ndarray:
    """Read one numeric column of a triggered-sample CSV.

    Raises :class:`SchemaError` naming the first missing schema column.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in TRIGGER_COLUMNS:
            if col not in header:
                raise SchemaError(col)
        return np.array([float(r[channel]) for r in reader], dtype=float)
