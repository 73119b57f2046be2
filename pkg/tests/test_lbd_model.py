"""
Tests for the learning-by-doing equilibrium solvers.

Tests cover:
- Symmetric and static (delta = 0) reference cases
- Table identities: value recursion, pricing rule, Bellman equation, mirror symmetry
- Increasing dominance and its equivalence with the sign of C - delta*W
- Two-step closed forms against backward induction
- Value-iteration oracle against backward induction
- Hyper-competition sweep and error propagation
"""

import itertools
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from src.core.errors import ConvergenceFailure, MaxIterExceeded, MultipleRoots, ParameterError
from src.core.scalar_root import RootResult
from src.core.settings import SolverSettings
from src.core.shock_dist import markup, motion_K, standard_logistic, standard_normal, static_profit_H
from src.solvers.lbd_model import (
    CSV_COLUMNS,
    bellman_residuals,
    cost,
    dominance_report,
    hypercomp_sweep,
    solve_backward,
    solve_two_step,
    value_iteration_oracle,
)
from src.solvers.params import LbdParams

H0_NORMAL = 0.5 * math.sqrt(math.pi / 2)

COSTS_BY_M = {1: (1.0, 0.5), 2: (1.0, 0.7, 0.4), 3: (1.0, 0.8, 0.6, 0.5)}
DISTS = {"normal": standard_normal(), "logistic": standard_logistic()}


def lbd(m=1, costs=(1.0, 0.5), delta=0.9, dist="normal"):
    return LbdParams.build(m=m, costs=costs, delta=delta, dist=dist)


def solved_cases():
    for m, delta, dist in itertools.product((1, 2, 3), (0.0, 0.5, 0.9), ("normal", "logistic")):
        yield pytest.param(lbd(m, COSTS_BY_M[m], delta, dist), id=f"m{m}-d{delta}-{dist}")


class TestCost:

    @pytest.mark.parametrize('m,costs,i,expected', [
        (1, (1.0, 0.5), 7, 0.5),
        (2, (1.0, 0.6, 0.4), 1, 0.6),
        (1, (1.0, 0.5), 0, 1.0),
    ])
    def test_cap_rule(self, m, costs, i, expected):
        assert cost(lbd(m, costs), i) == expected


class TestReferenceCases:
    """Hand-checkable equilibria."""

    def test_symmetric_costs(self):
        """No cost asymmetry: P = 0 everywhere and every value is H(0)/(1 - delta)."""
        eq = solve_backward(lbd(costs=(1.0, 1.0)))
        assert eq.P[1, 0] == 0.0
        assert np.allclose(eq.v, H0_NORMAL / (1 - 0.9), atol=1e-9)
        assert eq.v[1, 1] == pytest.approx(6.266571, abs=1e-5)

    def test_static_gap(self):
        """delta = 0: P(1,0) solves K(P) = c(1) - c(0)."""
        eq = solve_backward(lbd(delta=0.0))
        d = standard_normal()
        oracle = brentq(lambda x: motion_K(d, x) + 0.5, -2.0, 2.0, xtol=1e-14)
        assert eq.P[1, 0] == pytest.approx(oracle, abs=1e-9)
        assert eq.P[1, 0] == pytest.approx(-0.1657, abs=1e-3)

    def test_static_price(self):
        """delta = 0: p(1,0) = c(1) + markup(P(1,0))."""
        eq = solve_backward(lbd(delta=0.0))
        assert eq.p[1, 0] == pytest.approx(0.5 + markup(standard_normal(), eq.P[1, 0]), abs=1e-12)

    def test_static_reduction_general_m(self):
        eq = solve_backward(lbd(3, COSTS_BY_M[3], 0.0, "logistic"))
        d = standard_logistic()
        assert np.max(np.abs(motion_K(d, eq.P) - eq.C)) <= 1e-10

    def test_negative_prices_reported(self):
        """Strong investment effect can push the leader's price below zero."""
        eq = solve_backward(lbd(costs=(1.0, 0.0), delta=0.99))
        assert np.all(np.isfinite(eq.p))


class TestTableIdentities:
    """Invariants that must hold at every state."""

    @pytest.mark.parametrize('params', solved_cases())
    def test_identities(self, params):
        eq = solve_backward(params)
        d, delta, m = params.dist, params.delta, params.m
        nxt = np.minimum(np.arange(m + 1) + 1, m)
        c = np.array(params.costs)

        # mirror symmetry and diagonal
        assert np.array_equal(eq.P, -eq.P.T)
        assert np.all(np.diag(eq.P) == 0.0)
        assert np.allclose(eq.q + eq.q.T, 1.0, atol=1e-12)
        assert np.allclose(eq.p - eq.p.T, eq.P, atol=1e-8)

        # value recursion, pricing rule, Bellman equation
        recursion = eq.v - delta * eq.v[:, nxt] - static_profit_H(d, eq.P)
        pricing = eq.p - c[:, None] - markup(d, eq.P) + delta * eq.w
        assert np.max(np.abs(recursion)) <= 1e-8
        assert np.max(np.abs(pricing)) <= 1e-8
        assert np.max(np.abs(bellman_residuals(eq))) <= 1e-8

        # motion equation at the solver tolerance
        assert np.max(np.abs(eq.residual)) <= 1e-9

    @pytest.mark.parametrize('params', solved_cases())
    def test_gap_sign_matches_drift(self, params):
        """sign(P) = sign(C - delta*W) at every off-diagonal state."""
        eq = solve_backward(params)
        drift = eq.C - params.delta * eq.W
        off = ~np.eye(params.m + 1, dtype=bool) & (np.abs(drift) > 1e-9)
        assert np.array_equal(np.sign(eq.P[off]), np.sign(drift[off]))

    def test_frame(self):
        eq = solve_backward(lbd())
        frame = eq.to_frame()
        assert list(frame.columns) == CSV_COLUMNS
        assert len(frame) == 4
        assert list(zip(frame["i"], frame["j"])) == [(0, 0), (0, 1), (1, 0), (1, 1)]
        assert "markup" in eq.to_frame(include_markup=True).columns

    def test_read_only(self):
        eq = solve_backward(lbd())
        with pytest.raises(ValueError):
            eq.P[1, 0] = 0.0

    def test_state_view(self):
        eq = solve_backward(lbd())
        row = eq.state(1, 0)
        assert row["P"] == eq.P[1, 0]
        assert set(row) == set(CSV_COLUMNS[2:])


class TestIncreasingDominance:

    @pytest.mark.parametrize('c1,delta,dist', list(itertools.product(
        (0.25, 0.5, 0.75), (0.0, 0.5, 0.9), ("normal", "logistic")
    )))
    def test_leader_prices_below_laggard(self, c1, delta, dist):
        eq = solve_backward(lbd(costs=(1.0, c1), delta=delta, dist=dist))
        assert eq.P[1, 0] < 0
        assert eq.q[1, 0] > eq.q[0, 1]

    def test_report_flag(self):
        report = dominance_report(solve_backward(lbd()))
        row = report[(report.i == 1) & (report.j == 0)].iloc[0]
        assert bool(row.increasing_dominance)
        assert row.drift < 0
        assert bool(row.consistent)

    def test_report_symmetric(self):
        report = dominance_report(solve_backward(lbd(2, (1.0, 1.0, 1.0))))
        assert len(report) == 3
        assert np.allclose(report.q_gap, 0.0, atol=1e-12)
        assert not report.increasing_dominance.any()

    @pytest.mark.parametrize('params', solved_cases())
    def test_report_consistent(self, params):
        report = dominance_report(solve_backward(params))
        assert report.consistent.all()
        assert list(report.columns) == ["i", "j", "q_gap", "drift", "increasing_dominance", "consistent"]


class TestTwoStep:
    """Closed forms of the m = 1 model."""

    GRID = list(itertools.product((0.25, 0.5, 0.75), (0.0, 0.5, 0.9), ("normal", "logistic")))

    @pytest.mark.parametrize('c1,delta,dist', GRID)
    def test_matches_backward(self, c1, delta, dist):
        params = lbd(costs=(1.0, c1), delta=delta, dist=dist)
        two, _ = solve_two_step(params)
        back = solve_backward(params)
        for name in CSV_COLUMNS[2:]:
            assert np.max(np.abs(getattr(two, name) - getattr(back, name))) <= 1e-8, name

    def test_symmetric_closed_form(self):
        _, report = solve_two_step(lbd(costs=(1.0, 1.0), delta=0.5))
        assert report.P10 == 0.0
        assert report.v11 == pytest.approx(2 * H0_NORMAL, abs=1e-12)
        assert report.v00 == pytest.approx(2 * H0_NORMAL, abs=1e-12)

    def test_leader_value(self):
        eq, report = solve_two_step(lbd())
        H = static_profit_H(standard_normal(), report.P10)
        assert report.P10 < 0
        assert report.v10 == pytest.approx(H + 0.9 * H0_NORMAL / 0.1, abs=1e-12)
        assert report.v10 == pytest.approx(solve_backward(lbd()).v[1, 0], abs=1e-8)

    def test_entry_value_uses_plus_sign(self):
        """v(0,0) = H(0) + delta*H(-P(1,0))/(1 - delta)."""
        _, report = solve_two_step(lbd())
        expected = H0_NORMAL + 0.9 * static_profit_H(standard_normal(), -report.P10) / 0.1
        assert report.v00 == pytest.approx(expected, abs=1e-12)

    def test_difference_in_difference(self):
        _, report = solve_two_step(lbd(costs=(1.0, 0.25)))
        assert report.did == pytest.approx(report.W10, abs=1e-12)

    def test_static_benchmark(self):
        _, report = solve_two_step(lbd(delta=0.0))
        assert report.P10_static == pytest.approx(report.P10, abs=1e-12)

    def test_residual_trace(self):
        _, report = solve_two_step(lbd())
        assert report.residual_trace
        x, r = report.residual_trace[-1]
        assert x == report.P10
        assert abs(r) <= 1e-10
        assert report.to_dict()["residual_trace"][-1] == [x, r]

    def test_requires_m1(self):
        with pytest.raises(ParameterError):
            solve_two_step(lbd(2, COSTS_BY_M[2]))


class TestValueIterationOracle:

    @pytest.mark.parametrize('params', solved_cases())
    def test_matches_backward(self, params):
        oracle = value_iteration_oracle(params)
        back = solve_backward(params)
        assert np.max(np.abs(oracle.P - back.P)) < 1e-6
        assert np.max(np.abs(oracle.v - back.v)) < 1e-6
        assert oracle.diagnostics.method == "value_iteration"
        assert oracle.diagnostics.last_change < 1e-8

    def test_static_one_pass(self):
        """delta = 0: one value pass, plus the pass that confirms no change."""
        oracle = value_iteration_oracle(lbd(2, COSTS_BY_M[2], 0.0))
        assert oracle.diagnostics.iterations <= 2

    def test_iteration_cap(self):
        with pytest.raises(MaxIterExceeded) as exc_info:
            value_iteration_oracle(lbd(), max_iter=3)
        assert exc_info.value.iterations == 3
        assert exc_info.value.last_change > 0
        assert exc_info.value.exit_code == 3

    def test_settings_defaults(self):
        oracle = value_iteration_oracle(lbd(), settings=SolverSettings(oracle_tolerance=1e-4))
        assert oracle.diagnostics.last_change < 1e-4


class TestFailures:

    def test_convergence_failure_carries_state(self):
        settings = SolverSettings(max_iter=1)
        with pytest.raises(ConvergenceFailure) as exc_info:
            solve_backward(lbd(), settings)
        assert exc_info.value.details['state'] == [1, 0]

    def test_multiple_roots_reported(self, mocker):
        mocker.patch(
            'src.solvers.lbd_model.solve_monotone',
            return_value=RootResult(-0.1, 0.0, 10, 0, False, (-1.0, 1.0))
        )
        with pytest.raises(MultipleRoots) as exc_info:
            solve_backward(lbd())
        assert exc_info.value.details['state'] == [1, 0]


class TestHypercompSweep:

    @pytest.fixture
    def base(self):
        return lbd(costs=(1.0, 0.5), delta=0.9)

    def test_supertrap(self, base):
        """Steeper learning lowers the entrant's value and deepens the leader's price cut."""
        grid = [round(0.1 * k, 10) for k in range(1, 10)]
        table = hypercomp_sweep(base, grid)
        assert list(table.columns) == ["c1", "v00", "P10", "v10", "v01", "v11", "effect"]
        assert table.c1.tolist() == grid
        assert np.all(np.diff(table.v00) > 0)
        assert np.all(np.diff(table.P10) > 0)
        assert np.all(table.P10 < 0)
        assert set(table.effect[1:]) == {"supertrap"}
        assert table.effect[0] == ""

    def test_limit_point(self, base):
        table = hypercomp_sweep(base, [0.5, 1.0])
        assert table.P10.iloc[-1] == 0.0

    def test_parallel_matches_serial(self, base):
        grid = [0.2, 0.5, 0.8]
        serial = hypercomp_sweep(base, grid, max_workers=1)
        threaded = hypercomp_sweep(base, grid, max_workers=3)
        assert serial.equals(threaded)

    @pytest.mark.parametrize('grid', [[0.5, 0.2], [0.5, 1.2], [], [0.2, float('nan')]])
    def test_invalid_grid(self, base, grid):
        with pytest.raises(ParameterError):
            hypercomp_sweep(base, grid)

    def test_requires_m1(self):
        with pytest.raises(ParameterError):
            hypercomp_sweep(lbd(2, COSTS_BY_M[2]), [0.5])

    def test_error_carries_grid_point(self, base, mocker):
        mocker.patch(
            'src.solvers.lbd_model.solve_backward',
            side_effect=ConvergenceFailure("stuck", state=(1, 0))
        )
        with pytest.raises(ConvergenceFailure) as exc_info:
            hypercomp_sweep(base, [0.3, 0.6], max_workers=1)
        assert exc_info.value.details['c1'] == 0.3
        assert exc_info.value.details['state'] == [1, 0]
