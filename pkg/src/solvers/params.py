"""
Pydantic parameter models for the three duopoly models.

Each model validates its ranges on construction; `build()` converts pydantic
validation failures into ParameterError so callers see one error taxonomy.
"""

import logging
import math
from typing import Any, Optional, Tuple, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.core.errors import ParameterError
from src.core.shock_dist import ShockDistribution, from_name, standard_normal

logger = logging.getLogger(__name__)

M = TypeVar("M", bound="ModelParams")


class ModelParams(BaseModel):
    """Common configuration for the parameter models."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @field_validator('dist', mode='before', check_fields=False)
    @classmethod
    def resolve_dist(cls, v: Any) -> Any:
        """Accept a distribution name or CSV path in place of an instance."""
        if isinstance(v, str):
            return from_name(v)
        return v

    @classmethod
    def build(cls: Type[M], **kwargs) -> M:
        """Construct and validate, raising ParameterError on failure."""
        try:
            return cls(**kwargs)
        except ValidationError as e:
            raise ParameterError.from_pydantic_error(e) from e


def _check_delta(v: float) -> float:
    if not math.isfinite(v) or not 0.0 <= v < 1.0:
        raise ValueError(f"delta must satisfy 0 <= delta < 1, got {v}")
    return v


class LbdParams(ModelParams):
    """Learning-by-doing inputs: experience cap, unit-cost curve, discount factor, shock law."""

    m: int = Field(..., ge=1, description="Experience cap; c(i) = c(m) for i > m")
    costs: Tuple[float, ...] = Field(..., description="Unit costs c(0..m)")
    delta: float = Field(..., description="Discount factor in [0, 1)")
    dist: ShockDistribution = Field(default_factory=standard_normal)

    @field_validator('delta')
    @classmethod
    def validate_delta(cls, v: float) -> float:
        return _check_delta(v)

    @field_validator('costs')
    @classmethod
    def validate_costs(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if any(not math.isfinite(c) for c in v):
            raise ValueError("costs must be finite")
        if any(b > a for a, b in zip(v, v[1:])):
            raise ValueError(f"costs must be nonincreasing in experience, got {list(v)}")
        return tuple(float(c) for c in v)

    @model_validator(mode='after')
    def check_length(self) -> 'LbdParams':
        if len(self.costs) != self.m + 1:
            raise ValueError(f"expected m+1 = {self.m + 1} costs, got {len(self.costs)}")
        flat = [i for i in range(self.m - 1) if self.costs[i + 1] == self.costs[i]]
        if self.costs[0] == self.costs[-1]:
            logger.debug("Symmetric cost curve: no learning")
        elif flat:
            # only the last step into the cap may be weak
            raise ValueError(f"costs must strictly decrease before the cap, tie at steps {flat}")
        return self

    def cost(self, i: int) -> float:
        """c(min(i, m))."""
        if i < 0:
            raise ParameterError("Experience must be non-negative", details={'i': i})
        return self.costs[min(i, self.m)]

    def with_costs(self, costs) -> 'LbdParams':
        return LbdParams.build(m=self.m, costs=tuple(costs), delta=self.delta, dist=self.dist)


class SwitchingParams(ModelParams):
    """Switching-cost inputs."""

    s: float = Field(..., ge=0, description="Switching cost paid when changing seller")
    delta: float = Field(..., description="Discount factor in [0, 1)")
    dist: ShockDistribution = Field(default_factory=standard_normal)

    @field_validator('s')
    @classmethod
    def validate_s(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("s must be finite")
        return v

    @field_validator('delta')
    @classmethod
    def validate_delta(cls, v: float) -> float:
        return _check_delta(v)

    def with_s(self, s: float) -> 'SwitchingParams':
        return SwitchingParams.build(s=s, delta=self.delta, dist=self.dist)


class PredationParams(ModelParams):
    """Exit/predation extension of the two-step learning model."""

    lbd: LbdParams
    v_mono: float = Field(..., gt=0, description="Monopoly value of the surviving firm")
    A: float = Field(default=0.0, ge=0, description="Avoidable fixed cost (echoed only)")
    alpha: Optional[float] = Field(default=None, description="Probability of a zero fixed cost (echoed only)")

    @field_validator('alpha')
    @classmethod
    def validate_alpha(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not 0.0 < v < 1.0:
            raise ValueError(f"alpha must satisfy 0 < alpha < 1, got {v}")
        return v

    @model_validator(mode='after')
    def check_two_step(self) -> 'PredationParams':
        if self.lbd.m != 1:
            raise ValueError(f"predation limit requires the two-step model (m=1), got m={self.lbd.m}")
        if not math.isfinite(self.v_mono):
            raise ValueError("v_mono must be finite")
        return self
