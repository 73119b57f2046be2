"""
Tests for parameter models, solver settings, the error taxonomy and the parallel map.
"""

import threading

import pytest
from pydantic import ValidationError

from src.core.errors import (
    ConvergenceFailure,
    MaxIterExceeded,
    MultipleRoots,
    NoSignChange,
    NonFinite,
    OligodynError,
    OutputError,
    ParameterError,
)
from src.core.parallel import ordered_map
from src.core.settings import THREADS_ENV_VAR, SolverSettings, worker_count
from src.core.shock_dist import StandardLogistic, StandardNormal
from src.solvers.params import LbdParams, PredationParams, SwitchingParams


class TestLbdParams:

    def test_valid(self):
        params = LbdParams.build(m=2, costs=[1, 0.6, 0.4], delta=0.9)
        assert params.costs == (1.0, 0.6, 0.4)
        assert isinstance(params.dist, StandardNormal)

    @pytest.mark.parametrize('m,costs,i,expected', [
        (1, (1.0, 0.5), 7, 0.5),
        (2, (1.0, 0.6, 0.4), 1, 0.6),
        (1, (1.0, 0.5), 0, 1.0),
    ])
    def test_cost_cap_rule(self, m, costs, i, expected):
        assert LbdParams.build(m=m, costs=costs, delta=0.5).cost(i) == expected

    @pytest.mark.parametrize('costs', [(1.0, 1.0, 1.0), (1.0, 0.5, 0.5)])
    def test_weak_steps_allowed(self, costs):
        assert LbdParams.build(m=2, costs=costs, delta=0.5).costs == costs

    def test_negative_experience(self):
        with pytest.raises(ParameterError):
            LbdParams.build(m=1, costs=(1, 0.5), delta=0.5).cost(-1)

    def test_dist_by_name(self):
        params = LbdParams.build(m=1, costs=(1, 0.5), delta=0.5, dist="logistic")
        assert isinstance(params.dist, StandardLogistic)

    @pytest.mark.parametrize('kwargs', [
        dict(m=1, costs=(1, 0.5), delta=1.0),
        dict(m=1, costs=(1, 0.5), delta=-0.1),
        dict(m=1, costs=(1, 0.5, 0.2), delta=0.5),
        dict(m=1, costs=(0.5, 1.0), delta=0.5),
        dict(m=0, costs=(1,), delta=0.5),
        dict(m=1, costs=(1, float('nan')), delta=0.5),
        dict(m=2, costs=(1.0, 1.0, 0.5), delta=0.5),
        dict(m=3, costs=(1.0, 0.8, 0.8, 0.5), delta=0.5),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterError) as exc_info:
            LbdParams.build(**kwargs)
        assert exc_info.value.exit_code == 2
        assert exc_info.value.field_errors

    def test_unknown_dist(self):
        with pytest.raises(ParameterError, match="Unknown distribution"):
            LbdParams.build(m=1, costs=(1, 0.5), delta=0.5, dist="cauchy")

    def test_frozen(self):
        params = LbdParams.build(m=1, costs=(1, 0.5), delta=0.5)
        with pytest.raises(ValidationError):
            params.delta = 0.2

    def test_with_costs(self):
        params = LbdParams.build(m=1, costs=(1, 0.5), delta=0.5).with_costs((1, 0.8))
        assert params.costs == (1.0, 0.8)


class TestSwitchingParams:

    def test_valid(self):
        params = SwitchingParams.build(s=2.0, delta=0.5, dist="logistic")
        assert params.with_s(3.0).s == 3.0

    @pytest.mark.parametrize('kwargs', [
        dict(s=-1.0, delta=0.5),
        dict(s=float('inf'), delta=0.5),
        dict(s=1.0, delta=1.0),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterError):
            SwitchingParams.build(**kwargs)


class TestPredationParams:

    @pytest.fixture
    def lbd(self):
        return LbdParams.build(m=1, costs=(1, 0.5), delta=0.9)

    def test_valid(self, lbd):
        params = PredationParams.build(lbd=lbd, v_mono=10.0, A=0.3, alpha=0.2)
        assert params.alpha == 0.2

    @pytest.mark.parametrize('overrides', [
        dict(v_mono=0.0),
        dict(v_mono=5.0, alpha=1.5),
        dict(v_mono=5.0, A=-1.0),
    ])
    def test_invalid(self, lbd, overrides):
        with pytest.raises(ParameterError):
            PredationParams.build(lbd=lbd, **overrides)

    def test_requires_two_step(self):
        lbd = LbdParams.build(m=2, costs=(1, 0.7, 0.4), delta=0.9)
        with pytest.raises(ParameterError):
            PredationParams.build(lbd=lbd, v_mono=5.0)


class TestSolverSettings:

    def test_defaults(self):
        settings = SolverSettings()
        assert settings.tolerance == 1e-10
        assert settings.oracle_tolerance == 1e-8
        assert settings.oracle_max_iter == 100_000

    def test_bracket_consistency(self):
        with pytest.raises(ValidationError):
            SolverSettings(max_bracket=0.5)

    def test_worker_count_env(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV_VAR, "4")
        assert worker_count() == 4
        assert worker_count(2) == 2
        monkeypatch.setenv(THREADS_ENV_VAR, "many")
        assert worker_count() == 1
        monkeypatch.delenv(THREADS_ENV_VAR)
        assert worker_count() == 1


class TestErrors:
    """Exit codes and rendering of the error taxonomy."""

    @pytest.mark.parametrize('error,code', [
        (ParameterError("bad"), 2),
        (ConvergenceFailure("stuck"), 3),
        (MaxIterExceeded("cap", iterations=5, last_change=0.1), 3),
        (MultipleRoots("two", crossings=3), 3),
        (NonFinite("nan", x=1.0), 3),
        (NoSignChange("none", bracket=(-1, 1)), 4),
        (OutputError("disk", path="/x"), 5),
    ])
    def test_exit_codes(self, error, code):
        assert isinstance(error, OligodynError)
        assert error.exit_code == code
        assert error.to_dict()["exit_code"] == code

    def test_details(self):
        error = ConvergenceFailure("stuck", state=(1, 0))
        assert error.details == {'state': [1, 0]}
        assert "state: [1, 0]" in str(error)
        assert error.one_line() == "ConvergenceFailure: stuck; state=[1, 0]"

    def test_max_iter_carries_change(self):
        error = MaxIterExceeded("cap", iterations=5, last_change=0.25)
        assert error.last_change == 0.25
        assert error.details['iterations'] == 5

    def test_one_line_has_no_newlines(self):
        error = ParameterError("bad\nvalue", details={'key': 'delta'})
        assert "\n" not in error.one_line()


class TestOrderedMap:
    """Parallel map keeps input order."""

    def test_serial(self):
        assert ordered_map(lambda x: x * x, [3, 1, 2], max_workers=1) == [9, 1, 4]

    def test_threads_preserve_order(self):
        names = set()

        def work(x):
            names.add(threading.current_thread().name)
            return -x

        assert ordered_map(work, list(range(50)), max_workers=4) == [-x for x in range(50)]

    def test_lowest_index_error_raised(self):
        def work(x):
            if x in (3, 7):
                raise ValueError(f"item {x}")
            return x

        with pytest.raises(ValueError, match="item 3"):
            ordered_map(work, list(range(10)), max_workers=3)

    def test_empty(self):
        assert ordered_map(lambda x: x, [], max_workers=4) == []
