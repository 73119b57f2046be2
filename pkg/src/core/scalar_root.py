"""
Safeguarded bisection for strictly monotone residuals.

Every equilibrium in this package reduces to one scalar equation per state
whose residual is strictly monotone. `solve_monotone` brackets the root by
doubling a symmetric interval outward from [-1, 1] and then bisects with a
midpoint update on every iteration until |residual| <= tolerance.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import ConvergenceFailure, NoSignChange, NonFinite
from .settings import DEFAULT_SETTINGS, SolverSettings

logger = logging.getLogger(__name__)

Residual = Callable[[float], float]


@dataclass(frozen=True)
class RootProblem:
    """
    Scalar root problem with a strictly monotone residual.

    `initial_bracket=None` means the symmetric bracket
    [-initial_half_width, initial_half_width] from the settings.
    """
    residual: Residual
    initial_bracket: Optional[Tuple[float, float]] = None
    tolerance: float = DEFAULT_SETTINGS.tolerance
    max_bracket: float = DEFAULT_SETTINGS.max_bracket
    max_iter: int = DEFAULT_SETTINGS.max_iter
    scan_points: int = DEFAULT_SETTINGS.scan_points
    scan: bool = True

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.initial_bracket is not None:
            lo, hi = self.initial_bracket
            if not lo < hi:
                raise ValueError(f"initial bracket must satisfy lo < hi, got {self.initial_bracket}")

    @classmethod
    def from_settings(
        cls,
        residual: Residual,
        settings: SolverSettings = DEFAULT_SETTINGS,
        bracket: Optional[Tuple[float, float]] = None,
        scan: bool = True
    ) -> 'RootProblem':
        return cls(
            residual=residual,
            initial_bracket=bracket or (-settings.initial_half_width, settings.initial_half_width),
            tolerance=settings.tolerance,
            max_bracket=settings.max_bracket,
            max_iter=settings.max_iter,
            scan_points=settings.scan_points,
            scan=scan
        )


@dataclass(frozen=True)
class RootResult:
    """Outcome of one monotone solve."""
    root: float
    residual_at_root: float
    iterations: int
    bracket_expansions: int
    unique: bool
    bracket: Tuple[float, float]


def _evaluate(residual: Residual, x: float) -> float:
    value = float(residual(x))
    if not math.isfinite(value):
        raise NonFinite(f"Residual is not finite at x={x!r}", x=x, details={'value': str(value)})
    return value


def _sign(value: float) -> int:
    return (value > 0) - (value < 0)


def solve_monotone(problem: RootProblem) -> RootResult:
    """
    Find x with |residual(x)| <= tolerance for a strictly monotone residual.

    Args:
        problem: Residual, starting bracket, tolerance and expansion bound

    Returns:
        RootResult with the root, its residual and iteration counts

    Raises:
        NoSignChange: No sign change within [-max_bracket, max_bracket]
        NonFinite: Residual returned NaN or an infinity
        ConvergenceFailure: Bracket collapsed to machine precision above tolerance
    """
    f = problem.residual
    tol = problem.tolerance
    lo, hi = problem.initial_bracket or (-1.0, 1.0)
    f_lo, f_hi = _evaluate(f, lo), _evaluate(f, hi)
    expansions = 0

    while _sign(f_lo) == _sign(f_hi) and abs(f_lo) > tol and abs(f_hi) > tol:
        half = max(abs(lo), abs(hi))
        if half >= problem.max_bracket:
            raise NoSignChange(
                "Residual does not change sign within the allowed bracket",
                bracket=(lo, hi),
                residuals=(f_lo, f_hi)
            )
        half = min(2.0 * half, problem.max_bracket)
        lo, hi = -half, half
        f_lo, f_hi = _evaluate(f, lo), _evaluate(f, hi)
        expansions += 1

    bracket = (lo, hi)
    unique = True
    if problem.scan:
        unique = count_sign_changes(f, bracket, (hi - lo) / (problem.scan_points - 1)) <= 1

    if abs(f_lo) <= tol or abs(f_hi) <= tol:
        root, value = (lo, f_lo) if abs(f_lo) <= abs(f_hi) else (hi, f_hi)
        return RootResult(root, value, 0, expansions, unique, bracket)

    sign_lo = _sign(f_lo)
    for iteration in range(1, problem.max_iter + 1):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = _evaluate(f, mid)
        if abs(f_mid) <= tol:
            logger.debug(f"Root {mid:.12g} after {iteration} bisections ({expansions} expansions)")
            return RootResult(mid, f_mid, iteration, expansions, unique, bracket)
        if _sign(f_mid) == sign_lo:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    else:
        iteration = problem.max_iter

    best, best_value = (lo, f_lo) if abs(f_lo) <= abs(f_hi) else (hi, f_hi)
    raise ConvergenceFailure(
        "Bisection stopped above the residual tolerance",
        details={
            'iterations': iteration,
            'best_x': best,
            'best_residual': best_value,
            'tolerance': tol
        }
    )


def count_sign_changes(residual: Residual, bracket: Tuple[float, float], step: float) -> int:
    """
    Number of sign changes of `residual` on a uniform grid over `bracket`.

    Exact zeros inside the grid are skipped; a zero at either end counts as a crossing.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    lo, hi = bracket
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    grid = lo + step * np.arange(n)
    values = np.array([float(residual(float(x))) for x in grid])
    signs = np.sign(values)

    crossings = int(signs[0] == 0) + int(signs[-1] == 0 and n > 1)
    nonzero = signs[signs != 0]
    if len(nonzero) > 1:
        crossings += int(np.count_nonzero(np.diff(nonzero)))
    return crossings


def uniqueness_scan(residual: Residual, bracket: Tuple[float, float], step: float) -> bool:
    """
    True when the sampled residual shows at most one sign change.

    A residual with no sign change at all also scans as True; use
    `count_sign_changes` to tell "no root" (0) from "unique root" (1).
    """
    crossings = count_sign_changes(residual, bracket, step)
    if crossings == 0:
        logger.debug(f"Uniqueness scan on {bracket}: no sign change (no root)")
    return crossings <= 1
