"""Exception types shared across the package."""

from __future__ import annotations


class MvlabError(Exception):
    """Base class for package errors."""


class ConfigError(MvlabError):
    """Invalid configuration: unknown key, missing key, or bad value."""


class DimensionMismatchError(MvlabError):
    """Operands live in different state dimensions."""


class GridMismatchError(MvlabError):
    """Operands are aligned to different time grids."""


class BlowUpError(MvlabError):
    """A trajectory produced a non-finite value.

    Solvers abort at the first non-finite intermediate instead of clamping,
    so moment statistics are never silently biased. The offending time and
    particle (and spectral mode, where applicable) are recorded.
    """

    def __init__(self, time: float, particle: int | None = None,
                 mode: int | None = None, detail: str = ""):
        self.time = time
        self.particle = particle
        self.mode = mode
        where = f"t={time:.6g}"
        if particle is not None:
            where += f", particle={particle}"
        if mode is not None:
            where += f", mode={mode}"
        msg = f"non-finite state at {where}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
