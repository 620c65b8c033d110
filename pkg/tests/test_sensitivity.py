import numpy as np
import pytest

from schauder_lab.anisotropy import ChainDims
from schauder_lab.catalog import make_problem
from schauder_lab.sensitivity import (SensitivitySettings, _pairs, _stable, covariance_row, flow_row, resolvent_row,
                                      reverse_taylor_row, sensitivity_suite, threshold_probe)

FAST = SensitivitySettings(samples=4, c0_values=(1 / 2, 1 / 8, 1 / 32), gaps=(1 / 4, 1 / 16))


@pytest.mark.parametrize("a,b,ok", [(1.0, 1.2, True), (1.0, 1.5, False), (0.0, 0.0, True),
                                    (np.inf, 1.0, False), (0.0, 1e-3, False)])
def test_stability_rule(a, b, ok):
    assert _stable(a, b) is ok


def test_pairs_drop_coincident_points():
    dims = ChainDims(2, 1)
    X, Xp, D = _pairs(dims, 8, FAST)
    assert np.all(D > 0) and X.shape == Xp.shape


def test_linear_model_rows_vanish():
    p = make_problem("kolmogorov", {})
    pairs = _pairs(p.dims, 4, FAST)
    assert covariance_row(p, *pairs, FAST) == 0.0
    assert resolvent_row(p, *pairs, FAST) == 0.0
    assert flow_row(p, *pairs, FAST) > 0


def test_reverse_taylor_row_finite_on_rough_drift():
    p = make_problem("kinetic_rough", {})
    val = reverse_taylor_row(p, *_pairs(p.dims, 8, FAST), FAST)
    assert 0 < val < np.inf


def test_threshold_probe_is_centred():
    probe = threshold_probe(ChainDims(2, 1, 0.5), 0.3)
    assert probe(0.0, np.array([0.3, 5.0])) == 0.0


@pytest.mark.slow
def test_suite_on_linear_model_reports_exact_cancellation():
    rep = sensitivity_suite(make_problem("kolmogorov", {}), settings=FAST)
    rows = {r["lemma"]: r for r in rep["rows"]}
    assert rows["covariance"]["constant"] == rows["resolvent"]["constant"] == 0.0
    assert rows["discontinuity"]["constant"] == 0.0 and rows["discontinuity"]["slope_ok"]
    assert rep.passed
