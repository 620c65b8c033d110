"""errors, report, quadrature and parallel helpers."""
import json
import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from schauder_lab.errors import ConfigError, NonConvergenceError, SchauderLabError
from schauder_lab.parallel import ENV_VAR, ordered_map, thread_cap
from schauder_lab.quadrature import box_points, gauss_hermite_tensor, gauss_legendre, low_discrepancy, safe_cholesky
from schauder_lab.report import DiagnosticReport, dumps_json, format_number, write_csv


def test_config_error_carries_field():
    err = ConfigError("bad", field="grid.points")
    assert err.field == "grid.points"
    assert str(err).startswith("grid.points:")
    assert isinstance(err, SchauderLabError)


def test_nonconvergence_keeps_history():
    err = NonConvergenceError("diverged", [1.0, 2.0], segment=3)
    assert list(err.history) == [1.0, 2.0] and err.segment == 3


def test_report_json_is_sorted_and_plain():
    rep = DiagnosticReport("r", {"b": np.float64(1.5), "a": np.arange(3), "c": float("inf")}, "m", "x", True)
    text = dumps_json(rep.to_dict())
    doc = json.loads(text)
    assert doc["payload"] == {"a": [0, 1, 2], "b": 1.5, "c": "inf"}
    assert text.index('"name"') < text.index('"notes"') < text.index('"payload"')
    assert dumps_json(doc) == text


@pytest.mark.parametrize("value,text", [(True, "1"), (3, "3"), (0.1, "0.10000000000000001"), ("x", "x")])
def test_format_number(value, text):
    assert format_number(value) == text


def test_csv_is_lf_and_round_trips(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["a", "b"], [[1 / 3, 2], [np.float32(0.5), -1e-300]])
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    rows = [line.split(",") for line in raw.decode().splitlines()[1:]]
    assert float(rows[0][0]) == 1 / 3 and float(rows[1][1]) == -1e-300


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_gauss_hermite_moments(dim):
    z, w = gauss_hermite_tensor(dim, 12)
    assert w.sum() == pytest.approx(1.0, abs=1e-13)
    np.testing.assert_allclose(np.einsum("q,qi,qj->ij", w, z, z), np.eye(dim), atol=1e-12)
    assert np.einsum("q,q->", w, z[:, 0] ** 4) == pytest.approx(3.0, abs=1e-11)


def test_gauss_hermite_budget():
    with pytest.raises(ConfigError):
        gauss_hermite_tensor(7, 2)


@given(st.integers(1, 30))
def test_gauss_legendre_integrates_polynomials(n):
    x, w = gauss_legendre(n)
    deg = 2 * n - 1
    assert np.dot(w, x**deg) == pytest.approx(1.0 / (deg + 1), rel=1e-12)


def test_safe_cholesky_jitters_semidefinite():
    K = np.array([[1.0, 1.0], [1.0, 1.0]])
    L = safe_cholesky(K)
    np.testing.assert_allclose(L @ L.T, K, atol=1e-10)


@given(st.integers(2, 40), st.integers(0, 2**32))
def test_low_discrepancy_prefix_property(n, seed):
    a = low_discrepancy(n, 3, seed)
    b = low_discrepancy(2 * n, 3, seed)
    np.testing.assert_array_equal(a, b[:n])
    assert np.all((a >= 0) & (a < 1))


def test_box_points_respect_bounds():
    box = np.array([[-1.0, 2.0], [5.0, 6.0]])
    p = box_points(box, 100, 3)
    assert np.all((p >= box[:, 0]) & (p <= box[:, 1]))


@pytest.mark.parametrize("raw,expected", [("1", 1), ("8", 8), ("0", 1), ("-3", 1)])
def test_thread_cap_reads_env(monkeypatch, raw, expected):
    monkeypatch.setenv(ENV_VAR, raw)
    assert thread_cap() == expected


@pytest.mark.parametrize("threads", [1, 2, 8])
def test_ordered_map_keeps_order(threads):
    seen = set()

    def fn(x):
        seen.add(threading.get_ident())
        return x * x

    assert ordered_map(fn, range(20), threads) == [x * x for x in range(20)]
