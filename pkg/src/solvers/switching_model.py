"""
Switching-cost duopoly: insider/outsider equilibrium and average-price comparative statics.

A buyer locked into the insider pays s to switch to the outsider. The adjusted
price gap x = p1 - p0 - s solves K(x) + s = 0; prices, win probabilities and
values follow in closed form.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core.errors import OligodynError, ParameterError
from src.core.parallel import ordered_map
from src.core.scalar_root import RootProblem, solve_monotone
from src.core.settings import DEFAULT_SETTINGS, SolverSettings
from src.core.shock_dist import (
    ShockDistribution,
    cdf,
    lemma_profile,
    markup,
    motion_K,
    pdf,
    ratio_F_over_f,
    static_profit_H,
)

from .params import SwitchingParams

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["s", "x", "q1", "p1", "p0", "pbar", "V", "dpbar_ds"]
MIN_SWEEP_POINTS = 16
AVERAGE_PRICE_TOLERANCE = 1e-8


@dataclass(frozen=True)
class SwitchingEquilibrium:
    """Stationary insider/outsider equilibrium for one switching cost."""
    s: float
    delta: float
    x: float
    p1: float
    p0: float
    q1: float
    q0: float
    v1: float
    v0: float
    V: float
    pbar: float
    pbar_direct: float
    harvesting: float
    investment: float
    elasticity: float
    elasticity_foc: float
    residual: float
    iterations: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "s": self.s,
            "delta": self.delta,
            "x": self.x,
            "p1": self.p1,
            "p0": self.p0,
            "q1": self.q1,
            "q0": self.q0,
            "v1": self.v1,
            "v0": self.v0,
            "V": self.V,
            "pbar": self.pbar,
            "pbar_direct": self.pbar_direct,
            "harvesting": self.harvesting,
            "investment": self.investment,
            "elasticity": self.elasticity,
            "elasticity_foc": self.elasticity_foc,
            "residual": self.residual,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class SweepReport:
    """Average-price sweep over switching costs."""
    table: pd.DataFrame
    s_prime: Optional[float]
    s_doubleprime: Optional[float]
    sign_changes: List[Dict[str, Any]]
    bargain_then_ripoff: bool
    dp1_ds_at_0: float
    dp0_ds_at_0: float
    equilibria: List[SwitchingEquilibrium] = field(default_factory=list, repr=False)

    def summary(self) -> Dict[str, Any]:
        return {
            "s_prime": self.s_prime,
            "s_doubleprime": self.s_doubleprime,
            "sign_changes": self.sign_changes,
            "bargain_then_ripoff": self.bargain_then_ripoff,
            "dp1_ds_at_0": self.dp1_ds_at_0,
            "dp0_ds_at_0": self.dp0_ds_at_0,
        }


def x_residual(d: ShockDistribution, s: float):
    """x + (2F(x) - 1)/f(x) + s; strictly increasing under the hazard-rate assumption."""
    return lambda x: motion_K(d, x) + s


def _equilibrium(
    s: float,
    delta: float,
    d: ShockDistribution,
    settings: SolverSettings
) -> SwitchingEquilibrium:
    # No range check on s: the sweep differentiates across s = 0.
    result = solve_monotone(RootProblem.from_settings(x_residual(d, s), settings))
    x = result.root

    F, f = cdf(d, x), pdf(d, x)
    V = (1.0 - 2.0 * F) / f
    harvesting = markup(d, x)
    investment = delta * V
    p1 = harvesting - investment
    p0 = p1 - x - s
    v0 = F * ratio_F_over_f(d, x) / (1.0 - delta)
    v1 = static_profit_H(d, x) + delta * v0
    q1, q0 = 1.0 - F, F

    pbar = lemma_profile(d, x) + delta * (2.0 * F - 1.0) / f
    pbar_direct = q0 * p0 + q1 * p1
    if abs(pbar - pbar_direct) > AVERAGE_PRICE_TOLERANCE:
        logger.warning(f"Average price forms disagree at s={s}: {pbar!r} vs {pbar_direct!r}")

    return SwitchingEquilibrium(
        s=float(s),
        delta=float(delta),
        x=x,
        p1=p1,
        p0=p0,
        q1=q1,
        q0=q0,
        v1=v1,
        v0=v0,
        V=V,
        pbar=pbar,
        pbar_direct=pbar_direct,
        harvesting=harvesting,
        investment=investment,
        elasticity=-f * p1 / (1.0 - F),
        elasticity_foc=-(1.0 - investment / harvesting),
        residual=result.residual_at_root,
        iterations=result.iterations,
    )


def solve_switching(
    params: SwitchingParams,
    settings: SolverSettings = DEFAULT_SETTINGS
) -> SwitchingEquilibrium:
    """
    Solve the switching-cost equilibrium.

    Prices are p1 = markup(x) - delta*V (harvesting minus investment) and
    p0 = p1 - x - s, which equals F(x)/f(x) - delta*V at the root.

    Raises:
        NoSignChange / ConvergenceFailure: from the root finder
    """
    eq = _equilibrium(params.s, params.delta, params.dist, settings)
    logger.info(f"✓ Solved switching equilibrium: s={params.s:g}, x={eq.x:.10g}, q1={eq.q1:.6f}")
    return eq


def average_price(eq: SwitchingEquilibrium) -> float:
    """Closed-form average price; checked against q0*p0 + q1*p1 at solve time."""
    return eq.pbar


def _check_s_grid(s_grid: Sequence[float]) -> np.ndarray:
    grid = np.asarray(s_grid, dtype=float)
    if grid.ndim != 1 or len(grid) < MIN_SWEEP_POINTS:
        raise ParameterError(
            f"s_grid needs at least {MIN_SWEEP_POINTS} points",
            details={'points': int(grid.size)}
        )
    if not np.all(np.isfinite(grid)):
        raise ParameterError("s_grid must be finite")
    if grid[0] != 0.0:
        raise ParameterError("s_grid must start at 0", details={'first': float(grid[0])})
    if np.any(np.diff(grid) <= 0):
        raise ParameterError("s_grid must be strictly increasing")
    return grid


def _local_steps(grid: np.ndarray) -> np.ndarray:
    gaps = np.diff(grid)
    left = np.concatenate([[gaps[0]], gaps])
    right = np.concatenate([gaps, [gaps[-1]]])
    return np.minimum(left, right)


def _sign_changes(grid: np.ndarray, slope: np.ndarray) -> List[Dict[str, Any]]:
    changes = []
    previous = None
    for k, value in enumerate(slope):
        sign = int(np.sign(value))
        if sign == 0:
            continue
        if previous is not None and sign != previous[1]:
            changes.append({
                "s_before": float(grid[previous[0]]),
                "s_after": float(grid[k]),
                "direction": "up" if sign > 0 else "down",
            })
        previous = (k, sign)
    return changes


def turning_points(
    grid: Sequence[float], slope: Sequence[float]
) -> Tuple[List[Dict[str, Any]], Optional[float], Optional[float]]:
    """
    Sign changes of dpbar/ds along the grid, with s' and s''.

    s' is `s_before` of the first upward change and s'' is `s_after` of the
    last upward change; either is None when the slope never turns up.
    """
    changes = _sign_changes(np.asarray(grid, dtype=float), np.asarray(slope, dtype=float))
    ups = [c for c in changes if c["direction"] == "up"]
    if not ups:
        return changes, None, None
    return changes, ups[0]["s_before"], ups[-1]["s_after"]


def sweep_s(
    base: SwitchingParams,
    s_grid: Sequence[float],
    settings: SolverSettings = DEFAULT_SETTINGS,
    max_workers: Optional[int] = None
) -> SweepReport:
    """
    Solve on every grid value of s and locate where the average price turns.

    dpbar/ds is a central difference that re-solves at s - h and s + h, with h
    the smaller neighbouring grid spacing. s' is the last grid s before the
    first negative-to-positive change; s'' is the first grid s after the last
    negative-to-positive change.

    Raises:
        ParameterError: grid shorter than 16 points, not starting at 0, or not increasing
        OligodynError: solver failure, with `s` added to details
    """
    grid = _check_s_grid(s_grid)
    steps = _local_steps(grid)
    d, delta = base.dist, base.delta

    def solve_point(k: int):
        s, h = float(grid[k]), float(steps[k])
        try:
            eq = _equilibrium(s, delta, d, settings)
            lower = _equilibrium(s - h, delta, d, settings)
            upper = _equilibrium(s + h, delta, d, settings)
        except OligodynError as e:
            e.details['s'] = s
            raise
        return eq, (upper.pbar - lower.pbar) / (2.0 * h), lower, upper

    points = ordered_map(solve_point, list(range(len(grid))), max_workers)
    equilibria = [eq for eq, _, _, _ in points]
    slope = np.array([dp for _, dp, _, _ in points])

    table = pd.DataFrame(
        [[eq.s, eq.x, eq.q1, eq.p1, eq.p0, eq.pbar, eq.V, dp] for eq, dp in zip(equilibria, slope)],
        columns=SWEEP_COLUMNS
    )

    changes, s_prime, s_doubleprime = turning_points(grid, slope)

    _, _, lower0, upper0 = points[0]
    h0 = float(steps[0])
    report = SweepReport(
        table=table,
        s_prime=s_prime,
        s_doubleprime=s_doubleprime,
        sign_changes=changes,
        bargain_then_ripoff=all(eq.p1 > eq.p0 for eq in equilibria if eq.s > 0),
        dp1_ds_at_0=(upper0.p1 - lower0.p1) / (2.0 * h0),
        dp0_ds_at_0=(upper0.p0 - lower0.p0) / (2.0 * h0),
        equilibria=equilibria,
    )
    logger.info(
        f"✓ Switching sweep over {len(grid)} values: s'={s_prime}, s''={s_doubleprime}, "
        f"{len(changes)} sign change(s)"
    )
    return report
