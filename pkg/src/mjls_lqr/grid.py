from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TimeRangeError, ValidationError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k * step`` for ``k = 0..num_steps`` on [0, horizon]."""

    horizon: float
    num_steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValidationError("horizon must be positive")
        if int(self.num_steps) != self.num_steps or self.num_steps < 1:
            raise ValidationError("num_steps must be a positive integer")
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "num_steps", int(self.num_steps))

    @classmethod
    def from_step(cls, horizon, step=1e-3):
        return cls(horizon, max(1, int(round(horizon / step))))

    @property
    def step(self):
        return self.horizon / self.num_steps

    @property
    def nodes(self):
        return np.linspace(0.0, self.horizon, self.num_steps + 1)

    def index_at(self, t):
        """Index of the last node not exceeding ``t``."""
        if not (0.0 <= t <= self.horizon):
            raise TimeRangeError(f"t={t} outside [0, {self.horizon}]")
        k = int(np.floor(t / self.step + 1e-9))
        return min(k, self.num_steps)
