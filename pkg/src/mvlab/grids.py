"""Uniform time grids shared by every solver and path object."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatchError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k*T/n on [0, T] with n intervals (n+1 points)."""

    T: float
    n: int
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.T > 0):
            raise ValueError(f"horizon must be positive, got T={self.T}")
        if self.n < 1:
            raise ValueError(f"need at least one interval, got n={self.n}")
        pts = np.linspace(0.0, float(self.T), self.n + 1)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def dt(self) -> float:
        return self.T / self.n

    def __len__(self) -> int:
        return self.n + 1

    def lag_to_steps(self, lag: float) -> int:
        """Convert a time lag to a whole number of grid steps."""
        steps = lag / self.dt
        k = int(round(steps))
        if abs(steps - k) > 1e-9 * max(1.0, abs(steps)) or k < 1:
            raise ValueError(f"lag {lag} is not a positive multiple of dt={self.dt}")
        if k > self.n:
            raise ValueError(f"lag {lag} exceeds horizon T={self.T}")
        return k

    def refine(self, factor: int) -> "TimeGrid":
        """Grid with the same horizon and `factor` times as many intervals."""
        if factor < 1:
            raise ValueError("refinement factor must be >= 1")
        return TimeGrid(self.T, self.n * factor)


def require_same_grid(a: TimeGrid, b: TimeGrid, what: str = "operands") -> None:
    if a.n != b.n or a.T != b.T:
        raise GridMismatchError(
            f"{what} use different grids: (T={a.T}, n={a.n}) vs (T={b.T}, n={b.n})"
        )
