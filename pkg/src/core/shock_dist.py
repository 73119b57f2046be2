"""
Preference-shock distributions and the derived functions every solver consumes.

A buyer's relative preference xi between the two sellers is drawn from a
symmetric law F with density f. All equilibrium conditions are written in
terms of a handful of derived functions:

- markup(x)        = (1 - F(x)) / f(x)        inverse price elasticity
- static_profit_H  = (1 - F(x))^2 / f(x)      one-period equilibrium profit
- motion_K(x)      = x + (2F(x) - 1) / f(x)   price-gap motion function
- lemma_profile(x) = [(1-F)^2 + F^2] / f      average-price building block

Normal tails are evaluated through the scaled complementary error function,
so the ratios keep full precision far beyond |x| = 6.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
import pandas as pd
from scipy import special
from scipy.integrate import cumulative_trapezoid

from .errors import OutputError, ParameterError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

PDF_FLOOR = 1e-300
K_SATURATION = 1e12
SYMMETRY_TOLERANCE = 1e-6
MIN_TABLE_ROWS = 16

_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
_INV_SQRT_TWO = 1.0 / math.sqrt(2.0)
_INV_SQRT_TWO_PI = 1.0 / math.sqrt(2.0 * math.pi)


def canonical_grid() -> np.ndarray:
    """Validation grid x in [-8, 8] with step 0.01."""
    return np.arange(-800, 801) / 100.0


def _result(value: np.ndarray, x: ArrayLike) -> ArrayLike:
    """Return a float for scalar input, the array otherwise."""
    if np.ndim(x) == 0:
        return float(value)
    return value


class DistributionKind(str, Enum):
    """Supported shock laws."""
    STANDARD_NORMAL = "standard_normal"
    STANDARD_LOGISTIC = "standard_logistic"
    TABULATED = "tabulated"


class ShockDistribution(ABC):
    """
    Abstract symmetric shock distribution.

    Subclasses provide the primitive evaluations; the derived ratios default
    to guarded division and are overridden where a stable closed form exists.
    Instances are immutable after construction.
    """

    kind: DistributionKind

    @property
    def name(self) -> str:
        return self.kind.value

    def support(self) -> Tuple[float, float]:
        """Interval on which the density is tabulated (the real line for built-ins)."""
        return (-math.inf, math.inf)

    @abstractmethod
    def cdf(self, x: np.ndarray) -> np.ndarray:
        """F(x)."""

    @abstractmethod
    def survival(self, x: np.ndarray) -> np.ndarray:
        """1 - F(x), evaluated without cancellation."""

    @abstractmethod
    def density(self, x: np.ndarray) -> np.ndarray:
        """f(x) before flooring."""

    @abstractmethod
    def ppf(self, u: np.ndarray) -> np.ndarray:
        """Inverse cdf."""

    def pdf(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(self.density(x), PDF_FLOOR)

    def raw_density(self, x: np.ndarray) -> np.ndarray:
        """Density as supplied, before any symmetrization."""
        return self.density(x)

    def mills(self, x: np.ndarray) -> np.ndarray:
        """(1 - F(x)) / f(x)."""
        return self.survival(x) / self.pdf(x)

    def ratio(self, x: np.ndarray) -> np.ndarray:
        """F(x) / f(x)."""
        return self.cdf(x) / self.pdf(x)

    def spread(self, x: np.ndarray) -> np.ndarray:
        """(2F(x) - 1) / f(x), exactly odd in x."""
        ax = np.abs(x)
        with np.errstate(over='ignore', invalid='ignore'):
            return np.sign(x) * (self.ratio(ax) - self.mills(ax))

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value}

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}()"


class StandardNormal(ShockDistribution):
    """N(0, 1) with Mills-ratio tails."""

    kind = DistributionKind.STANDARD_NORMAL

    def cdf(self, x):
        return special.ndtr(x)

    def survival(self, x):
        return special.ndtr(-np.asarray(x, dtype=float))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return _INV_SQRT_TWO_PI * np.exp(-0.5 * x * x)

    def ppf(self, u):
        return special.ndtri(u)

    def mills(self, x):
        with np.errstate(over='ignore'):
            return _SQRT_HALF_PI * special.erfcx(np.asarray(x, dtype=float) * _INV_SQRT_TWO)

    def ratio(self, x):
        # symmetry: F(x)/f(x) = mills(-x)
        return self.mills(-np.asarray(x, dtype=float))


class StandardLogistic(ShockDistribution):
    """Logistic law with scale 1; f = F(1 - F)."""

    kind = DistributionKind.STANDARD_LOGISTIC

    def cdf(self, x):
        return special.expit(x)

    def survival(self, x):
        return special.expit(-np.asarray(x, dtype=float))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return special.expit(x) * special.expit(-x)

    def ppf(self, u):
        return special.logit(u)

    def mills(self, x):
        # (1 - F) / f = 1 / F
        with np.errstate(divide='ignore'):
            return 1.0 / special.expit(np.asarray(x, dtype=float))

    def ratio(self, x):
        with np.errstate(divide='ignore'):
            return 1.0 / special.expit(-np.asarray(x, dtype=float))


class TabulatedDistribution(ShockDistribution):
    """
    Density given on support points, linearly interpolated.

    The table is symmetrized (f(x) averaged with f(-x) on the union grid),
    clipped to the largest symmetric interval inside the supplied support and
    renormalized to unit mass. The cdf is the exact integral of the piecewise
    linear density, so cdf and pdf stay consistent between support points.
    """

    kind = DistributionKind.TABULATED

    def __init__(self, x: np.ndarray, density: np.ndarray, source: str = "<table>"):
        x = np.asarray(x, dtype=float)
        density = np.asarray(density, dtype=float)
        _check_table(x, density)

        half_width = min(-x[0], x[-1])
        if half_width <= 0:
            raise ParameterError(
                "Tabulated support must contain a neighbourhood of zero",
                details={'support': [float(x[0]), float(x[-1])]}
            )

        grid = np.union1d(x, -x)
        grid = grid[np.abs(grid) <= half_width]
        raw_on_grid = np.interp(grid, x, density)
        mirrored = np.interp(-grid, x, density)
        sym = 0.5 * (raw_on_grid + mirrored)

        cumulative = cumulative_trapezoid(sym, grid, initial=0.0)
        mass = cumulative[-1]
        if not mass > 0:
            raise ParameterError("Tabulated density has zero mass", details={'source': source})

        self._raw_x = x
        self._raw_f = density
        self._x = grid
        self._f = sym / mass
        self._F = cumulative / mass
        self._F[-1] = 1.0
        self._half_width = float(half_width)
        self.source = source

        for array in (self._raw_x, self._raw_f, self._x, self._f, self._F):
            array.setflags(write=False)

        logger.debug(
            f"Tabulated distribution from {source}: {len(x)} rows, "
            f"support ±{half_width:g}, mass before normalization {mass:.6g}"
        )

    def support(self) -> Tuple[float, float]:
        return (-self._half_width, self._half_width)

    def density(self, x):
        return np.interp(x, self._x, self._f, left=0.0, right=0.0)

    def raw_density(self, x):
        return np.interp(x, self._raw_x, self._raw_f, left=0.0, right=0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        grid, f, F = self._x, self._f, self._F
        k = np.clip(np.searchsorted(grid, x, side='right') - 1, 0, len(grid) - 2)
        h = grid[k + 1] - grid[k]
        t = np.clip(x - grid[k], 0.0, h)
        value = F[k] + f[k] * t + (f[k + 1] - f[k]) * t * t / (2.0 * h)
        value = np.where(x <= grid[0], 0.0, value)
        value = np.where(x >= grid[-1], 1.0, value)
        return np.clip(value, 0.0, 1.0)

    def survival(self, x):
        return 1.0 - self.cdf(x)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        grid, f, F = self._x, self._f, self._F
        k = np.clip(np.searchsorted(F, u, side='right') - 1, 0, len(grid) - 2)
        h = grid[k + 1] - grid[k]
        a = (f[k + 1] - f[k]) / (2.0 * h)
        b = f[k]
        d = np.maximum(u - F[k], 0.0)
        disc = np.sqrt(np.maximum(b * b + 4.0 * a * d, 0.0))
        denom = b + disc
        with np.errstate(divide='ignore', invalid='ignore'):
            t = np.where(denom > 0, 2.0 * d / denom, 0.0)
        return grid[k] + np.clip(t, 0.0, h)

    def spread(self, x):
        x = np.asarray(x, dtype=float)
        return (2.0 * self.cdf(x) - 1.0) / self.pdf(x)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "source": self.source, "rows": int(len(self._raw_x))}

    def __repr__(self) -> str:
        return f"TabulatedDistribution(source={self.source!r}, rows={len(self._raw_x)})"


def _check_table(x: np.ndarray, density: np.ndarray) -> None:
    if x.ndim != 1 or x.shape != density.shape:
        raise ParameterError("Tabulated x and density must be 1-D arrays of equal length")
    if len(x) < MIN_TABLE_ROWS:
        raise ParameterError(
            f"Tabulated distribution needs at least {MIN_TABLE_ROWS} rows",
            details={'rows': int(len(x))}
        )
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(density)):
        raise ParameterError("Tabulated distribution contains non-finite values")
    if np.any(np.diff(x) <= 0):
        raise ParameterError("Tabulated x must be strictly increasing")
    if np.any(density < 0):
        raise ParameterError("Tabulated density must be non-negative")


# ===== Constructors =====

def standard_normal() -> StandardNormal:
    return StandardNormal()


def standard_logistic() -> StandardLogistic:
    return StandardLogistic()


def tabulated(x, density, source: str = "<table>") -> TabulatedDistribution:
    return TabulatedDistribution(np.asarray(x), np.asarray(density), source=source)


def load_tabulated(path: Union[str, Path]) -> TabulatedDistribution:
    """
    Load a two-column `x,density` CSV (header required).

    Raises:
        ParameterError: Missing columns, too few rows, non-monotone x
        OutputError: The file cannot be read
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        if isinstance(e, OSError):
            raise OutputError(f"Cannot read distribution table: {e}", path=str(path)) from e
        raise ParameterError(f"Malformed distribution table: {e}", details={'path': str(path)}) from e

    columns = [str(c).strip() for c in frame.columns]
    if columns != ["x", "density"]:
        raise ParameterError(
            "Distribution table header must be exactly 'x,density'",
            details={'path': str(path), 'header': columns}
        )
    try:
        x = frame.iloc[:, 0].to_numpy(dtype=float)
        f = frame.iloc[:, 1].to_numpy(dtype=float)
    except ValueError as e:
        raise ParameterError(f"Non-numeric distribution table: {e}", details={'path': str(path)}) from e
    return TabulatedDistribution(x, f, source=str(path))


def from_name(label: str) -> ShockDistribution:
    """
    Resolve a distribution label: `normal`, `logistic` (or the full kind names) or a CSV path.
    """
    key = label.strip().lower()
    if key in ("normal", DistributionKind.STANDARD_NORMAL.value):
        return standard_normal()
    if key in ("logistic", DistributionKind.STANDARD_LOGISTIC.value):
        return standard_logistic()
    path = Path(label)
    if path.suffix.lower() == ".csv":
        if not path.exists():
            raise ParameterError("Distribution file not found", details={'path': label})
        return load_tabulated(path)
    raise ParameterError(
        f"Unknown distribution '{label}'. Use normal, logistic or a path to an x,density CSV"
    )


# ===== Operations =====

def cdf(d: ShockDistribution, x: ArrayLike) -> ArrayLike:
    """F(x); saturates to 0 / 1 outside a tabulated support."""
    return _result(d.cdf(np.asarray(x, dtype=float)), x)


def pdf(d: ShockDistribution, x: ArrayLike) -> ArrayLike:
    """f(x), floored at 1e-300."""
    return _result(d.pdf(np.asarray(x, dtype=float)), x)


def ppf(d: ShockDistribution, u: ArrayLike) -> ArrayLike:
    return _result(d.ppf(np.asarray(u, dtype=float)), u)


def markup(d: ShockDistribution, x: ArrayLike) -> ArrayLike:
    """Inverse price elasticity (1 - F(x)) / f(x)."""
    return _result(d.mills(np.asarray(x, dtype=float)), x)


def ratio_F_over_f(d: ShockDistribution, x: ArrayLike) -> ArrayLike:
    """F(x) / f(x); strictly increasing under the hazard-rate assumption."""
    return _result(d.ratio(np.asarray(x, dtype=float)), x)


def static_profit_H(d: ShockDistribution, x: ArrayLike) -> ArrayLike:
    """One-period equilibrium profit H(x) = (1 - F(x))^2 / f(x)."""
    xa = np.asarray(x, dtype=float)
    with np.errstate(over='ignore', invalid='ignore'):
        value = d.survival(xa) * d.mills(xa)
    return _result(np.nan_to_num(value, nan=0.0, posinf=np.inf), x)


def lemma_profile(d: ShockDistribution, x: ArrayLike) -> ArrayLike:
    """[(1 - F(x))^2 + F(x)^2] / f(x); flat at zero, increasing for x > 0."""
    xa = np.asarray(x, dtype=float)
    with np.errstate(over='ignore', invalid='ignore'):
        value = d.survival(xa) * d.mills(xa) + d.cdf(xa) * d.ratio(xa)
    return _result(value, x)


def motion_K_bounded(d: ShockDistribution, x: ArrayLike) -> Tuple[ArrayLike, Any]:
    """
    K(x) = x + (2F(x) - 1) / f(x) with overflow guard.

    Returns:
        (value, out_of_range): value saturated at ±1e12; flag set where |K| exceeded it
    """
    xa = np.asarray(x, dtype=float)
    with np.errstate(over='ignore', invalid='ignore'):
        raw = xa + d.spread(xa)
        raw = np.where(np.isnan(raw), np.copysign(np.inf, xa), raw)
    out_of_range = np.abs(raw) > K_SATURATION
    value = np.clip(raw, -K_SATURATION, K_SATURATION)
    if np.ndim(x) == 0:
        return float(value), bool(out_of_range)
    return value, out_of_range


def motion_K(d: ShockDistribution, x: ArrayLike) -> ArrayLike:
    """K(x), saturated at ±1e12. Strictly increasing, odd, K(0) = 0."""
    value, _ = motion_K_bounded(d, x)
    return value


@dataclass(frozen=True)
class Violation:
    """One failed distribution assumption."""
    check: str
    x: float
    detail: str

    def to_dict(self) -> Dict[str, Any]:
        return {"check": self.check, "x": self.x, "detail": self.detail}

    def __str__(self) -> str:
        return f"{self.check} violation at x={self.x:g}: {self.detail}"


def validate(d: ShockDistribution) -> List[Violation]:
    """
    Check symmetry, positivity, unimodality and the monotone hazard rate on the canonical grid.

    Violations are returned as data; an empty list means all assumptions hold.
    For tabulated laws the grid is restricted to the interior of the support and
    symmetry is checked on the table as supplied.
    """
    grid = canonical_grid()
    lo, hi = d.support()
    grid = grid[(grid > lo) & (grid < hi)]
    violations: List[Violation] = []
    if len(grid) < 3:
        return [Violation("support", 0.0, "support too narrow for the validation grid")]

    raw = d.raw_density(grid)
    raw_mirror = d.raw_density(-grid)
    asym = np.abs(raw - raw_mirror)
    if np.max(asym) > SYMMETRY_TOLERANCE:
        k = int(np.argmax(asym))
        violations.append(Violation(
            "symmetry", float(grid[k]),
            f"|f(x) - f(-x)| = {asym[k]:.3e} exceeds {SYMMETRY_TOLERANCE:g}"
        ))

    if np.any(raw <= 0):
        k = int(np.argmax(raw <= 0))
        violations.append(Violation("positivity", float(grid[k]), f"f(x) = {raw[k]:.3e}"))

    f = d.pdf(grid)
    slope = np.diff(f)
    left = grid[1:] <= 0
    scale = 1e-12 * np.max(f)
    bad = np.where(left, slope < -scale, slope > scale)
    if np.any(bad):
        k = int(np.argmax(bad))
        violations.append(Violation(
            "unimodality", float(grid[k + 1]), "density is not single-peaked at zero"
        ))

    with np.errstate(over='ignore', invalid='ignore'):
        hazard = d.ratio(grid)
    steps = np.diff(hazard)
    if np.any(~(steps > 0)):
        k = int(np.argmax(~(steps > 0)))
        violations.append(Violation(
            "hazard_rate", float(grid[k + 1]), "F(x)/f(x) is not strictly increasing"
        ))

    centre = float(d.cdf(np.asarray(0.0)))
    if abs(centre - 0.5) > 1e-9:
        violations.append(Violation("median", 0.0, f"F(0) = {centre:.12g}"))

    if violations:
        logger.warning(f"Distribution {d.name}: {len(violations)} assumption violation(s)")
    else:
        logger.debug(f"✓ Distribution {d.name} satisfies all assumptions")
    return violations
