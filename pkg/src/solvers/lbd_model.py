"""
Learning-by-doing duopoly: Markov-perfect equilibrium on the capped experience grid.

State (i, j) is (own cumulative sales, rival cumulative sales), capped at m.
In equilibrium the price gap P(i, j) = p(i, j) - p(j, i) solves the motion equation

    K(P) = C(i, j) - delta * W(i, j)

and firm values follow the sequential recursion v(i, j) = H(P(i, j)) + delta * v(i, j+).
States are solved from the highest total experience downward; at the cap
the self-references are eliminated analytically, leaving one monotone scalar
equation per state.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core.errors import (
    MaxIterExceeded,
    MultipleRoots,
    OligodynError,
    ParameterError,
)
from src.core.parallel import ordered_map
from src.core.scalar_root import RootProblem, count_sign_changes, solve_monotone
from src.core.settings import DEFAULT_SETTINGS, SolverSettings
from src.core.shock_dist import markup, motion_K, static_profit_H

from .params import LbdParams

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["i", "j", "P", "p", "q", "v", "w", "W", "C", "residual"]
DOMINANCE_EPS = 1e-9
TRAP_EPS = 1e-12


@dataclass(frozen=True)
class LbdDiagnostics:
    """How an equilibrium table was obtained."""
    method: str
    iterations: int
    max_residual: float
    state_iterations: Dict[Tuple[int, int], int] = field(default_factory=dict)
    last_change: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "iterations": self.iterations,
            "max_residual": self.max_residual,
            "last_change": self.last_change,
            "state_iterations": {f"{i},{j}": n for (i, j), n in sorted(self.state_iterations.items())},
        }


@dataclass(frozen=True)
class LbdEquilibrium:
    """
    Solved per-state table; every array is indexed [i, j] over {0..m}^2.

    P is stored for (i, j) with i >= j and mirrored, so P(j, i) = -P(i, j) exactly.
    """
    params: LbdParams
    P: np.ndarray
    p: np.ndarray
    q: np.ndarray
    v: np.ndarray
    w: np.ndarray
    W: np.ndarray
    C: np.ndarray
    residual: np.ndarray
    diagnostics: LbdDiagnostics

    @property
    def m(self) -> int:
        return self.params.m

    @property
    def markup(self) -> np.ndarray:
        return markup(self.params.dist, self.P)

    def state(self, i: int, j: int) -> Dict[str, float]:
        return {name: float(getattr(self, name)[i, j]) for name in CSV_COLUMNS[2:]}

    def to_frame(self, include_markup: bool = False) -> pd.DataFrame:
        """One row per ordered state (i, j), i-major."""
        n = self.m + 1
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing='ij')
        frame = pd.DataFrame({
            "i": ii.ravel(),
            "j": jj.ravel(),
            "P": self.P.ravel(),
            "p": self.p.ravel(),
            "q": self.q.ravel(),
            "v": self.v.ravel(),
            "w": self.w.ravel(),
            "W": self.W.ravel(),
            "C": self.C.ravel(),
            "residual": self.residual.ravel(),
        })
        if include_markup:
            frame["markup"] = self.markup.ravel()
        return frame

    def summary(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "m": self.m,
            "costs": list(self.params.costs),
            "delta": self.params.delta,
            "dist": self.params.dist.to_dict(),
            "diagnostics": self.diagnostics.to_dict(),
        }
        if self.m >= 1:
            out["P10"] = float(self.P[1, 0])
            out["v00"] = float(self.v[0, 0])
        return out


@dataclass(frozen=True)
class TwoStepReport:
    """Closed-form values of the two-step (m = 1) model."""
    P10: float
    v11: float
    v01: float
    v10: float
    v00: float
    W10: float
    did: float
    P10_static: float
    residual_trace: List[Tuple[float, float]]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "P10": self.P10,
            "v11": self.v11,
            "v01": self.v01,
            "v10": self.v10,
            "v00": self.v00,
            "W10": self.W10,
            "did": self.did,
            "P10_static": self.P10_static,
            "residual_trace": [list(pair) for pair in self.residual_trace],
        }


# ===== Table assembly =====

def _successor_index(m: int) -> np.ndarray:
    return np.minimum(np.arange(m + 1) + 1, m)


def cost(params: LbdParams, i: int) -> float:
    """Unit cost at experience i, flat beyond the cap."""
    return params.cost(i)


def _assemble(
    params: LbdParams,
    P: np.ndarray,
    v: np.ndarray,
    diagnostics: LbdDiagnostics
) -> LbdEquilibrium:
    """Derive prices, win probabilities and the motion residual from (P, v)."""
    d, delta, m = params.dist, params.delta, params.m
    c = np.asarray(params.costs, dtype=float)
    nxt = _successor_index(m)

    w = v[nxt, :] - v[:, nxt]
    W = w - w.T
    C = c[:, None] - c[None, :]
    q = np.asarray(d.survival(P))
    p = c[:, None] + markup(d, P) - delta * w
    residual = motion_K(d, P) - C + delta * W

    for array in (P, p, q, v, w, W, C, residual):
        array.setflags(write=False)

    diagnostics = LbdDiagnostics(
        method=diagnostics.method,
        iterations=diagnostics.iterations,
        max_residual=float(np.max(np.abs(residual))),
        state_iterations=diagnostics.state_iterations,
        last_change=diagnostics.last_change,
    )
    return LbdEquilibrium(params, P, p, q, v, w, W, C, residual, diagnostics)


def _solve_state(
    residual: Callable[[float], float],
    state: Tuple[int, int],
    settings: SolverSettings,
    scan: bool = True
):
    problem = RootProblem.from_settings(residual, settings, scan=scan)
    try:
        result = solve_monotone(problem)
    except OligodynError as e:
        e.details.setdefault('state', list(state))
        raise
    if not result.unique:
        lo, hi = result.bracket
        raise MultipleRoots(
            "Motion equation has more than one root in the bracket",
            crossings=count_sign_changes(residual, result.bracket, (hi - lo) / (settings.scan_points - 1)),
            state=state,
            details={'bracket': list(result.bracket)}
        )
    return result


# ===== Solvers =====

def solve_backward(params: LbdParams, settings: SolverSettings = DEFAULT_SETTINGS) -> LbdEquilibrium:
    """
    Solve the MPE by backward induction over total experience.

    Args:
        params: Validated model inputs
        settings: Root-finder tolerances

    Returns:
        LbdEquilibrium with every state's |motion residual| <= tolerance

    Raises:
        ConvergenceFailure / NoSignChange: root finding failed at a state (state in details)
        MultipleRoots: the per-state scan found more than one root
    """
    d, delta, m = params.dist, params.delta, params.m
    H = lambda x: static_profit_H(d, x)  # noqa: E731
    K = lambda x: motion_K(d, x)  # noqa: E731
    c = params.costs

    P = np.zeros((m + 1, m + 1))
    v = np.full((m + 1, m + 1), np.nan)
    state_iterations: Dict[Tuple[int, int], int] = {}
    total = 0

    v[m, m] = H(0.0) / (1.0 - delta)
    state_iterations[(m, m)] = 0

    for level in range(2 * m - 1, -1, -1):
        states = [(i, level - i) for i in range(min(level, m), -1, -1) if i >= level - i >= 0]
        states.sort(key=lambda s: s[0] != s[1])
        for i, j in states:
            if i == j:
                v[i, i] = H(0.0) + delta * v[i, i + 1]
                state_iterations[(i, j)] = 0
                continue

            at_cap = i == m
            v_i_jnext = v[i, j + 1]
            v_jnext_i = v[j + 1, i]
            v_inext_j = None if at_cap else v[i + 1, j]
            v_j_inext = None if at_cap else v[j, i + 1]
            gap = c[i] - c[j]

            def own_value(x: float) -> float:
                return H(x) + delta * v_i_jnext

            def rival_value(x: float) -> float:
                if at_cap:
                    return H(-x) / (1.0 - delta)
                return H(-x) + delta * v_j_inext

            def W_of(x: float) -> float:
                lead = own_value(x) if at_cap else v_inext_j
                trail = rival_value(x) if at_cap else v_j_inext
                return lead - v_i_jnext - v_jnext_i + trail

            def residual(x: float) -> float:
                return K(x) - gap + delta * W_of(x)

            result = _solve_state(residual, (i, j), settings)
            P[i, j], P[j, i] = result.root, -result.root
            v[i, j] = own_value(result.root)
            v[j, i] = rival_value(result.root)
            state_iterations[(i, j)] = result.iterations
            total += result.iterations
            logger.debug(
                f"State ({i},{j}): P={result.root:.10g} after {result.iterations} bisections, "
                f"|R|={abs(result.residual_at_root):.2e}"
            )

    eq = _assemble(params, P, v, LbdDiagnostics("backward", total, 0.0, state_iterations))
    logger.info(f"✓ Solved LBD equilibrium by backward induction (m={m}, states={(m + 1) ** 2})")
    return eq


def two_step_residual(params: LbdParams) -> Callable[[float], float]:
    """Single-unknown equation for P(1, 0) in the m = 1 model."""
    d, delta = params.dist, params.delta
    h0 = static_profit_H(d, 0.0)
    gap = params.costs[1] - params.costs[0]

    def residual(x: float) -> float:
        W10 = static_profit_H(d, x) + (static_profit_H(d, -x) - (2.0 - delta) * h0) / (1.0 - delta)
        return motion_K(d, x) - gap + delta * W10

    return residual


def solve_two_step(
    params: LbdParams,
    settings: SolverSettings = DEFAULT_SETTINGS
) -> Tuple[LbdEquilibrium, TwoStepReport]:
    """
    Solve the two-step learning model through its closed forms.

    Only P(1, 0) is unknown; v(1,1), v(0,1), v(1,0), v(0,0) follow from the
    sequential recursion once it is known.

    Raises:
        ParameterError: params.m != 1
    """
    if params.m != 1:
        raise ParameterError("Two-step solver requires m = 1", details={'m': params.m})
    d, delta = params.dist, params.delta
    base = two_step_residual(params)
    trace: List[Tuple[float, float]] = []

    def traced(x: float) -> float:
        value = base(x)
        trace.append((float(x), float(value)))
        return value

    result = _solve_state(traced, (1, 0), settings, scan=False)
    lo, hi = result.bracket
    if count_sign_changes(base, result.bracket, (hi - lo) / (settings.scan_points - 1)) > 1:
        raise MultipleRoots("Two-step equation has more than one root", state=(1, 0))
    P10 = result.root

    h0 = static_profit_H(d, 0.0)
    v11 = h0 / (1.0 - delta)
    v01 = static_profit_H(d, -P10) / (1.0 - delta)
    v10 = static_profit_H(d, P10) + delta * v11
    v00 = h0 + delta * v01

    P = np.array([[0.0, -P10], [P10, 0.0]])
    v = np.array([[v00, v01], [v10, v11]])
    eq = _assemble(
        params, P, v,
        LbdDiagnostics("two_step", result.iterations, 0.0, {(1, 0): result.iterations, (0, 0): 0, (1, 1): 0})
    )

    static = solve_monotone(RootProblem.from_settings(
        lambda x: motion_K(d, x) - (params.costs[1] - params.costs[0]), settings, scan=False
    ))
    report = TwoStepReport(
        P10=P10,
        v11=v11,
        v01=v01,
        v10=v10,
        v00=v00,
        W10=float(eq.W[1, 0]),
        did=v10 + v01 - 2.0 * v11,
        P10_static=static.root,
        residual_trace=trace,
    )
    logger.info(f"✓ Solved two-step model: P(1,0)={P10:.10g}, v(0,0)={v00:.10g}")
    return eq, report


def value_iteration_oracle(
    params: LbdParams,
    max_iter: Optional[int] = None,
    tol: Optional[float] = None,
    settings: SolverSettings = DEFAULT_SETTINGS
) -> LbdEquilibrium:
    """
    Independent fixed-point check of the sequential solution.

    Starting from v = 0 and P = 0, every pass solves each state's motion
    equation against the current values, then updates all values at once.

    Args:
        params: Model inputs
        max_iter: Pass cap (default settings.oracle_max_iter)
        tol: Sup-norm stop on the change in (P, v) (default settings.oracle_tolerance)

    Raises:
        MaxIterExceeded: cap reached; carries the final sup-norm change
    """
    max_iter = settings.oracle_max_iter if max_iter is None else max_iter
    tol = settings.oracle_tolerance if tol is None else tol
    d, delta, m = params.dist, params.delta, params.m
    c = np.asarray(params.costs, dtype=float)
    C = c[:, None] - c[None, :]
    nxt = _successor_index(m)
    upper = [(i, j) for i in range(m + 1) for j in range(i)]

    P = np.zeros((m + 1, m + 1))
    v = np.zeros((m + 1, m + 1))
    change = np.inf
    for iteration in range(1, max_iter + 1):
        w = v[nxt, :] - v[:, nxt]
        target = C - delta * (w - w.T)

        P_new = np.zeros_like(P)
        for i, j in upper:
            goal = target[i, j]
            root = _solve_state(lambda x: motion_K(d, x) - goal, (i, j), settings, scan=False).root
            P_new[i, j], P_new[j, i] = root, -root

        v_new = np.asarray(static_profit_H(d, P_new)) + delta * v[:, nxt]
        change = float(max(np.max(np.abs(v_new - v)), np.max(np.abs(P_new - P))))
        P, v = P_new, v_new
        if change < tol:
            logger.info(f"✓ Value iteration converged in {iteration} passes (change={change:.2e})")
            return _assemble(
                params, P, v,
                LbdDiagnostics("value_iteration", iteration, 0.0, last_change=change)
            )

    raise MaxIterExceeded(
        "Value iteration did not converge",
        iterations=max_iter,
        last_change=change
    )


# ===== Reports and sweeps =====

def dominance_report(eq: LbdEquilibrium) -> pd.DataFrame:
    """
    Leader-vs-laggard comparison for every state with i > j.

    `increasing_dominance` is q(i,j) > q(j,i); `consistent` checks it against
    the sign of C(i,j) - delta*W(i,j).
    """
    delta = eq.params.delta
    rows = []
    for i in range(eq.m + 1):
        for j in range(i):
            q_gap = float(eq.q[i, j] - eq.q[j, i])
            drift = float(eq.C[i, j] - delta * eq.W[i, j])
            increasing = q_gap > DOMINANCE_EPS
            negligible = abs(q_gap) <= DOMINANCE_EPS and abs(drift) <= DOMINANCE_EPS
            rows.append({
                "i": i,
                "j": j,
                "q_gap": q_gap,
                "drift": drift,
                "increasing_dominance": increasing,
                "consistent": negligible or increasing == (drift < 0),
            })
    return pd.DataFrame(rows, columns=["i", "j", "q_gap", "drift", "increasing_dominance", "consistent"])


def bellman_residuals(eq: LbdEquilibrium) -> np.ndarray:
    """v(i,j) minus the right-hand side of the Bellman equation at the solved prices."""
    m, delta = eq.m, eq.params.delta
    c = np.asarray(eq.params.costs, dtype=float)
    nxt = _successor_index(m)
    win = eq.p - c[:, None] + delta * eq.v[nxt, :]
    lose = delta * eq.v[:, nxt]
    return eq.v - (eq.q * win + (1.0 - eq.q) * lose)


def _check_grid(grid: Sequence[float], name: str) -> np.ndarray:
    values = np.asarray(grid, dtype=float)
    if values.ndim != 1 or len(values) == 0:
        raise ParameterError(f"{name} must be a non-empty list")
    if not np.all(np.isfinite(values)):
        raise ParameterError(f"{name} must be finite")
    if np.any(np.diff(values) <= 0):
        raise ParameterError(f"{name} must be strictly increasing")
    return values


def hypercomp_sweep(
    base: LbdParams,
    c1_grid: Sequence[float],
    settings: SolverSettings = DEFAULT_SETTINGS,
    max_workers: Optional[int] = None
) -> pd.DataFrame:
    """
    Solve the two-step model for each experienced-cost value c(1).

    Returns:
        DataFrame ordered by c1 with v00, P10, v10, v01, v11 and `effect`:
        how v(0,0) moves from the previous grid point ("supertrap" when it rose
        with c(1), "direct" when it fell, "trap" when unchanged)
    """
    if base.m != 1:
        raise ParameterError("Hyper-competition sweep uses the two-step model (m = 1)", details={'m': base.m})
    grid = _check_grid(c1_grid, "c1_grid")
    c0 = base.costs[0]
    if np.any(grid > c0):
        raise ParameterError("c1_grid entries must not exceed c(0)", details={'c0': c0})

    def solve_point(c1: float) -> Dict[str, float]:
        try:
            eq = solve_backward(base.with_costs((c0, float(c1))), settings)
        except OligodynError as e:
            e.details['c1'] = float(c1)
            raise
        return {
            "c1": float(c1),
            "v00": float(eq.v[0, 0]),
            "P10": float(eq.P[1, 0]),
            "v10": float(eq.v[1, 0]),
            "v01": float(eq.v[0, 1]),
            "v11": float(eq.v[1, 1]),
        }

    rows = ordered_map(solve_point, list(grid), max_workers)
    effects = [""]
    for prev, cur in zip(rows, rows[1:]):
        change = cur["v00"] - prev["v00"]
        effects.append("supertrap" if change > TRAP_EPS else "direct" if change < -TRAP_EPS else "trap")
    frame = pd.DataFrame(rows, columns=["c1", "v00", "P10", "v10", "v01", "v11"])
    frame["effect"] = effects
    logger.info(f"✓ Hyper-competition sweep over {len(grid)} values of c(1)")
    return frame
