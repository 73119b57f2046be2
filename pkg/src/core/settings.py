"""
Solver tolerances shared by every equilibrium computation.

Defaults are tight because value tables amplify root error by 1/(1 - delta).
The numerical listing's looser precision is available as `tolerance=1e-5`.
"""

import os
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

THREADS_ENV_VAR = "OLIGODYN_THREADS"


class SolverSettings(BaseModel):
    """Validated tolerances and iteration caps."""

    model_config = ConfigDict(frozen=True)

    tolerance: float = Field(default=1e-10, gt=0, description="Residual tolerance per root solve")
    max_bracket: float = Field(default=1e3, gt=0, description="Absolute bound for bracket expansion")
    initial_half_width: float = Field(default=1.0, gt=0, description="Half width of the first bracket")
    max_iter: int = Field(default=200, ge=1, description="Bisection iteration cap")
    scan_points: int = Field(default=401, ge=3, description="Samples in the uniqueness scan")
    oracle_tolerance: float = Field(default=1e-8, gt=0, description="Sup-norm stop for value iteration")
    oracle_max_iter: int = Field(default=100_000, ge=1, description="Value iteration cap")

    @model_validator(mode='after')
    def check_bracket(self) -> 'SolverSettings':
        """The first bracket must fit inside the expansion bound."""
        if self.initial_half_width > self.max_bracket:
            raise ValueError(
                f"initial_half_width {self.initial_half_width} exceeds max_bracket {self.max_bracket}"
            )
        return self


DEFAULT_SETTINGS = SolverSettings()


def worker_count(override: Optional[int] = None) -> int:
    """
    Number of worker threads for sweeps and replications.

    Args:
        override: Explicit worker count (takes precedence over the environment)

    Returns:
        Positive worker count; 1 means serial execution
    """
    if override is not None:
        return max(1, int(override))
    raw = os.getenv(THREADS_ENV_VAR, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
