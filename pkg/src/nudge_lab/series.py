"""Uniform containers for recorded time series.

Kept separate so both the experiment drivers and the analysis layer can
use them without importing each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SeriesFormatError, WindowError

__all__ = ["ErrorSeries"]


@dataclass
class ErrorSeries:
    """Named channels sampled on a common, strictly increasing time axis."""

    t: np.ndarray
    channels: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        if self.t.ndim != 1:
            raise SeriesFormatError("time axis must be one-dimensional")
        if len(self.t) >= 2 and not np.all(np.diff(self.t) > 0):
            raise SeriesFormatError("timestamps must strictly increase")
        for name, v in list(self.channels.items()):
            arr = np.asarray(v, dtype=float)
            if arr.shape != self.t.shape:
                raise SeriesFormatError(
                    f"channel {name!r} has {arr.shape[0] if arr.ndim else 0} "
                    f"samples for {len(self.t)} timestamps"
                )
            self.channels[name] = arr

    def __len__(self) -> int:
        return len(self.t)

    def names(self) -> list:
        return list(self.channels)

    def channel(self, name: str) -> np.ndarray:
        if name not in self.channels:
            raise SeriesFormatError(
                f"no channel {name!r}; have {sorted(self.channels)}"
            )
        return self.channels[name]

    def has(self, name: str) -> bool:
        return name in self.channels

    def restricted(self, t0: float, t1: float) -> "ErrorSeries":
        """Subseries on [t0, t1] (inclusive)."""
        if t1 < t0:
            raise WindowError("empty restriction window")
        sel = (self.t >= t0 - 1e-12) & (self.t <= t1 + 1e-12)
        if not np.any(sel):
            raise WindowError(f"no samples in [{t0:g}, {t1:g}]")
        return ErrorSeries(
            t=self.t[sel],
            channels={k: v[sel] for k, v in self.channels.items()},
            meta=dict(self.meta),
        )

    def to_rows(self) -> tuple:
        """(header, rows) in column order t, then channels sorted by name."""
        names = sorted(self.channels)
        header = ["t"] + names
        cols = [self.t] + [self.channels[n] for n in names]
        rows = list(zip(*cols))
        return header, rows

    @classmethod
    def from_columns(cls, header, columns, meta=None) -> "ErrorSeries":
        if not header or header[0] != "t":
            raise SeriesFormatError("first column must be 't'")
        if len(header) != len(columns):
            raise SeriesFormatError("header and column count disagree")
        chans = {name: np.asarray(col, float) for name, col in zip(header[1:], columns[1:])}
        return cls(t=np.asarray(columns[0], float), channels=chans, meta=meta or {})
