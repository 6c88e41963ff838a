import logging

import numpy as np
import pandas as pd
import pytest

from openloop_fw import exceptions
from openloop_fw.settings import app_settings
from openloop_fw.utils import as_matrix, as_vector, rewrite_exceptions, slugify

from .helpers import sqrt_g


class TestSettings:
    def test_defaults(self):
        assert app_settings.FW_POWER_TOL == 1e-10
        assert app_settings.FW_REFERENCE_BUDGET == 10000
        assert app_settings.FW_CUSTOM_SCHEDULE_CALLABLE == ""

    @pytest.mark.parametrize(
        "name, raw, expected",
        [
            ("FW_POWER_TOL", "1e-8", 1e-8),
            ("FW_POWER_MAX_ITER", "25", 25),
            ("FW_ETA_GRID_SIZE", "16", 16),
            ("FW_EXCEPTION_LOGGER_NAME", "", ""),
        ],
    )
    def test_environment_overrides(self, monkeypatch, name, raw, expected):
        monkeypatch.setenv(name, raw)
        assert getattr(app_settings, name) == expected

    def test_bad_environment_value(self, monkeypatch):
        monkeypatch.setenv("FW_POWER_MAX_ITER", "lots")
        with pytest.raises(exceptions.ImproperlyConfigured):
            app_settings.FW_POWER_MAX_ITER

    def test_callable_setting(self, monkeypatch):
        monkeypatch.setenv("FW_CUSTOM_SCHEDULE_CALLABLE", "tests.helpers:sqrt_g")
        assert app_settings._get_callable_setting("FW_CUSTOM_SCHEDULE_CALLABLE") is sqrt_g

    @pytest.mark.parametrize("path", ["tests.helpers:nothing_here", "tests.helpers:math"])
    def test_callable_setting_errors(self, monkeypatch, path):
        monkeypatch.setenv("FW_CUSTOM_SCHEDULE_CALLABLE", path)
        with pytest.raises(exceptions.ImproperlyConfigured):
            app_settings._get_callable_setting("FW_CUSTOM_SCHEDULE_CALLABLE")


class TestRewriteExceptions:
    def test_missing_file(self):
        with pytest.raises(exceptions.DatasetNotFound) as excinfo:
            with rewrite_exceptions(source="data/u.data"):
                raise FileNotFoundError(2, "No such file", "data/u.data")
        assert excinfo.value.path == "data/u.data"
        assert excinfo.value.exit_code == exceptions.EXIT_DATA

    def test_parser_error_keeps_the_line(self):
        with pytest.raises(exceptions.ParseError) as excinfo:
            with rewrite_exceptions(source="x.csv"):
                raise pd.errors.ParserError("Error tokenizing data. C error: Expected 3 fields in line 7, saw 4")
        assert excinfo.value.line == 7

    def test_empty_file(self):
        with pytest.raises(exceptions.ParseError):
            with rewrite_exceptions():
                raise pd.errors.EmptyDataError("No columns to parse from file")

    def test_linear_algebra(self):
        with pytest.raises(exceptions.NumericalInconsistency) as excinfo:
            with rewrite_exceptions():
                raise np.linalg.LinAlgError("SVD did not converge")
        assert excinfo.value.exit_code == exceptions.EXIT_NUMERICAL

    def test_own_errors_pass_through(self):
        with pytest.raises(exceptions.InvalidParameter):
            with rewrite_exceptions():
                raise exceptions.InvalidParameter()

    def test_other_errors_pass_through(self):
        with pytest.raises(KeyError):
            with rewrite_exceptions():
                raise KeyError("x")

    def test_original_is_logged(self, caplog):
        with pytest.raises(exceptions.NumericalInconsistency):
            with rewrite_exceptions(logger=logging.getLogger("openloop_fw")):
                raise FloatingPointError("overflow")
        assert "overflow" in caplog.text


def test_error_context():
    exc = exceptions.RankDeficiency(rank=3, columns=5)
    assert (exc.rank, exc.columns) == (3, 5)
    assert str(exc) == "The design matrix is numerically rank deficient. (rank=3, columns=5)"
    assert exc.code == "rank_deficiency"
    assert str(exceptions.ZeroMatrix()) == exceptions.ZeroMatrix.default_detail


@pytest.mark.parametrize(
    "error, code",
    [
        (exceptions.InvalidSchedule, 1),
        (exceptions.ImproperlyConfigured, 1),
        (exceptions.ParseError, 2),
        (exceptions.ZScoreDegenerate, 2),
        (exceptions.ConvergenceFailure, 3),
        (exceptions.InsufficientData, 3),
    ],
)
def test_exit_codes(error, code):
    assert error.exit_code == code


@pytest.mark.parametrize(
    "spec, slug",
    [("fixed:2", "fixed-2"), ("fixed:2.5", "fixed-2.5"), ("logadaptive", "logadaptive"), ("custom:pkg.mod:g", "custom-pkg.mod-g")],
)
def test_slugify(spec, slug):
    assert slugify(spec) == slug


def test_array_guards():
    with pytest.raises(exceptions.DimensionMismatch):
        as_vector(np.ones((2, 2)))
    with pytest.raises(exceptions.DimensionMismatch):
        as_matrix(np.ones(3))
    with pytest.raises(exceptions.InvalidParameter):
        as_vector([1.0, np.nan])
