import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from segbeam.errors import DataError, ParameterError, ShapeError
from segbeam.metrics import (CSV_HEADER, MetricsReport, append_csv_rows, change_point_score,
                             output_power_trace, si_sdr)


def test_si_sdr_perfect_and_scaled():
    s = np.random.default_rng(0).standard_normal(1000)
    assert si_sdr(s, s) == math.inf
    assert si_sdr(2 * s, s) == math.inf


def test_si_sdr_orthogonal_residual_10db():
    rng = np.random.default_rng(1)
    s = rng.standard_normal(4000)
    n = rng.standard_normal(4000)
    n -= s * np.dot(n, s) / np.dot(s, s)
    n *= np.sqrt(np.dot(s, s) / 10 / np.dot(n, n))
    assert si_sdr(s + n, s) == pytest.approx(10.0, abs=1e-9)


@given(st.floats(1e-3, 1e3), st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_si_sdr_scale_invariant(a, seed):
    rng = np.random.default_rng(seed)
    s = rng.standard_normal(500)
    x = s + 0.3 * rng.standard_normal(500)
    assert si_sdr(a * x, s) == pytest.approx(si_sdr(x, s), abs=1e-9)


def test_si_sdr_orthogonal_addition_decreases():
    rng = np.random.default_rng(2)
    s = rng.standard_normal(500)
    x = s + 0.2 * rng.standard_normal(500)
    z = rng.standard_normal(500)
    z -= s * np.dot(z, s) / np.dot(s, s)
    assert si_sdr(x + 0.1 * z, s) < si_sdr(x, s)


def test_si_sdr_errors():
    with pytest.raises(DataError):
        si_sdr(np.ones(4), np.zeros(4))
    with pytest.raises(ShapeError):
        si_sdr(np.ones(4), np.ones(5))
    with pytest.raises(ShapeError):
        si_sdr(np.ones(0), np.ones(0))


def test_change_point_examples():
    assert change_point_score([10, 50], [10, 50], 5) == (1.0, 1.0, 0.0)
    p, r, lat = change_point_score([], [100], 10)
    assert (p, r) == (1.0, 0.0) and math.isnan(lat)
    assert change_point_score([104], [100], 10) == (1.0, 1.0, 4.0)
    assert change_point_score([], [], 3)[:2] == (1.0, 1.0)


@given(st.lists(st.integers(0, 10_000), unique=True, max_size=20))
def test_change_point_self_score(truth):
    truth = sorted(truth)
    p, r, lat = change_point_score(truth, truth, 0)
    assert (p, r) == (1.0, 1.0)
    assert lat == 0.0 or (not truth and math.isnan(lat))


def test_change_point_one_to_one():
    p, r, lat = change_point_score([98, 101], [100], 5)
    assert (p, r, lat) == (0.5, 1.0, 1.0)
    p, r, _ = change_point_score([100], [98, 101], 5)
    assert (p, r) == (1.0, 0.5)


def test_power_trace():
    assert np.all(output_power_trace(np.zeros(10), 3) == -120.0)
    assert np.allclose(output_power_trace(np.ones(10) * 1j, 4), 0.0)
    y = np.concatenate([np.ones(20), np.full(20, np.sqrt(10))])
    tr = output_power_trace(y, 5)
    assert tr[19] == pytest.approx(0.0)
    assert tr[24] == pytest.approx(10.0)
    assert np.all(np.diff(tr) >= -1e-12)
    with pytest.raises(ParameterError):
        output_power_trace(y, 0)


def test_csv_rows(tmp_path):
    path = tmp_path / "m.csv"
    rows = [MetricsReport("segmented", 1.5, 2.0, -3.0, 1.0, 0.5, 2.0, 1e-15, 10),
            MetricsReport("fixed_20", math.inf, math.nan, 0.1)]
    append_csv_rows(path, rows[:1], extra={"c_rel": "2.0"})
    append_csv_rows(path, rows[1:], extra={"c_rel": "3.0"})
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(["c_rel"] + CSV_HEADER)
    assert lines[1].startswith("2.0,segmented,1.5,2.0,-3.0,1.0,0.5,2.0,1e-15,10")
    assert lines[2] == "3.0,fixed_20,inf,nan,0.1,nan,nan,nan,nan,0"
