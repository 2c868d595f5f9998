"""Time series of interpolant observations.

A stream couples one interpolant descriptor with a uniformly spaced
record of its observations; it is the only thing the nudged solver is
allowed to see of the reference solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, KindMismatchError
from ..interpolants import Interpolant, Observation
from ..spectral import h1_norm, l2_norm

__all__ = ["ObservationStream"]

_CADENCE_RTOL = 1e-9


@dataclass
class ObservationStream:
    """Uniformly sampled observations of a single interpolant.

    Invariants: timestamps strictly increase, spacing is uniform to
    relative 1e-9, and every record carries the stream's kind.
    """

    interpolant: Interpolant
    observations: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([o.t for o in self.observations])

    @property
    def kind(self) -> str:
        return self.interpolant.kind

    def __len__(self) -> int:
        return len(self.observations)

    def __iter__(self):
        return iter(self.observations)

    def __getitem__(self, i: int) -> Observation:
        return self.observations[i]

    @property
    def cadence(self) -> float:
        if len(self.observations) < 2:
            raise DomainError("cadence undefined for fewer than two records")
        return self.observations[1].t - self.observations[0].t

    def append(self, obs: Observation) -> None:
        if obs.kind != self.interpolant.kind:
            raise KindMismatchError(
                f"stream holds {self.interpolant.kind!r} records, got {obs.kind!r}"
            )
        if self.observations:
            last = self.observations[-1].t
            if obs.t <= last:
                raise DomainError("observation timestamps must strictly increase")
            if len(self.observations) >= 2:
                dt0 = self.cadence
                if abs((obs.t - last) - dt0) > _CADENCE_RTOL * max(abs(dt0), 1.0):
                    raise DomainError(
                        f"nonuniform cadence: step {obs.t - last:.17g} vs {dt0:.17g}"
                    )
        self.observations.append(obs)

    def validate(self) -> None:
        for i in range(1, len(self.observations)):
            if self.observations[i].t <= self.observations[i - 1].t:
                raise DomainError("observation timestamps must strictly increase")
        if len(self.observations) >= 3:
            steps = np.diff(self.times)
            if np.max(np.abs(steps - steps[0])) > _CADENCE_RTOL * max(steps[0], 1.0):
                raise DomainError("nonuniform observation cadence")
        for o in self.observations:
            if o.kind != self.interpolant.kind:
                raise KindMismatchError("mixed observation kinds in stream")

    def reconstruct(self, i: int):
        return self.interpolant.reconstruct(self.observations[i])

    def rho(self) -> float:
        """sup over records of ||I_h u||_H1 (the stream's a priori bound)."""
        if not self.observations:
            raise DomainError("empty stream has no bound")
        return max(h1_norm(self.reconstruct(i)) for i in range(len(self)))

    def sup_l2(self) -> float:
        if not self.observations:
            raise DomainError("empty stream has no bound")
        return max(l2_norm(self.reconstruct(i)) for i in range(len(self)))

    def shifted(self, sigma: float) -> "ObservationStream":
        """Drop the first sigma time units and restamp: record at t becomes
        a record at t - sigma.  sigma must align with the cadence."""
        if sigma < 0:
            raise DomainError("shift must be nonnegative")
        if sigma == 0:
            return ObservationStream(self.interpolant, list(self.observations))
        dt0 = self.cadence
        k0 = int(round(sigma / dt0))
        if abs(k0 * dt0 - sigma) > 1e-9 * max(sigma, 1.0):
            raise DomainError("shift must be a multiple of the cadence")
        if k0 >= len(self.observations):
            raise DomainError("shift exceeds the recorded range")
        out = ObservationStream(self.interpolant)
        for o in self.observations[k0:]:
            out.append(Observation(kind=o.kind, t=o.t - sigma, payload=o.payload))
        return out

    def descriptor(self) -> dict:
        d = dict(self.interpolant.descriptor())
        d["records"] = len(self.observations)
        if len(self.observations) >= 2:
            d["cadence"] = self.cadence
            d["t0"] = self.observations[0].t
        return d
