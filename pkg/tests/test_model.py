import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from schauder_lab.anisotropy import ChainDims
from schauder_lab.catalog import CATALOG, make_problem, terminal_family, toy_matrix
from schauder_lab.errors import ConfigError, ModelError, ShapeError
from schauder_lab.model import (ChainProblem, Mollifier, bump_mass, check_assumptions, check_drift_regularity,
                                check_hormander, check_structure, check_uniform_ellipticity, mollify)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_catalog_entries_pass_checks(name):
    p = make_problem(name, {})
    rep = check_assumptions(p, samples=64)
    assert rep.passed, rep.to_dict()
    s = check_structure(p, samples=32)
    assert s["structure_violation"] == 0.0
    assert s["sigma_reconstruction"] < 1e-12


@pytest.mark.parametrize("name,params,field", [("nope", {}, "problem"), ("kinetic", {"n": 3}, "params.n"),
                                               ("kolmogorov", {"wrong": 1}, "params"),
                                               ("kolmogorov", {"g": "zzz"}, "params.g")])
def test_make_problem_errors(name, params, field):
    with pytest.raises(ConfigError) as exc:
        make_problem(name, params)
    assert exc.value.field == field


def test_shapes_of_evaluations():
    p = make_problem("kinetic", {})
    x = np.zeros((5, 3, 2))
    assert p.drift(0.0, x).shape == (5, 3, 2)
    assert p.a(0.0, x).shape == (5, 3, 1, 1)
    assert p.g(x).shape == (5, 3)
    assert p.f(0.0, x).shape == (5, 3)


def test_block_count_validated():
    dims = ChainDims(2, 1)
    with pytest.raises(ShapeError):
        ChainProblem(dims, (lambda t, x: x[..., :1],), lambda t, x: np.ones(x.shape[:-1] + (1, 1)), lambda x: 0 * x[..., 0])


def test_asymmetric_diffusion_rejected():
    dims = ChainDims(1, 2)
    a = lambda t, x: np.broadcast_to(np.array([[1.0, 0.5], [0.0, 1.0]]), x.shape[:-1] + (2, 2))
    p = ChainProblem(dims, (lambda t, x: 0 * x,), a, lambda x: x[..., 0])
    with pytest.raises(ModelError):
        check_uniform_ellipticity(p, samples=8)


def test_hormander_fails_for_zero_coupling():
    dims = ChainDims(2, 1)
    p = ChainProblem(dims, (lambda t, x: 0 * x[..., :1], lambda t, x: 0 * x[..., 1:]),
                     lambda t, x: np.ones(x.shape[:-1] + (1, 1)), lambda x: x[..., 0])
    assert not check_hormander(p, samples=16).passed


def test_drift_regularity_flags_too_rough_drift():
    dims = ChainDims(2, 1, 0.5)
    rough = lambda t, x: x[..., :1] + np.abs(x[..., :1]) ** 0.2  # far below the 1+gamma threshold
    p = ChainProblem(dims, (lambda t, x: 0 * x[..., :1], rough), lambda t, x: np.ones(x.shape[:-1] + (1, 1)),
                     lambda x: x[..., 0])
    assert not check_drift_regularity(p, samples=32).passed


def test_toy_matrix_is_nilpotent():
    A = toy_matrix(ChainDims(3, 2))
    assert np.allclose(np.linalg.matrix_power(A, 3), 0.0)


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("m", [1, 4, 16])
def test_mollifier_unit_mass_and_support(dim, m):
    mol = Mollifier(m, dim)
    pts, wts = mol.nodes(8)
    assert wts.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.max(np.linalg.norm(pts, axis=1)) <= 1.0 / m + 1e-12


def test_bump_mass_value():
    assert bump_mass() == pytest.approx(0.443993816168, rel=1e-10)


def test_mollify_preserves_linear_coefficients():
    p = make_problem("kolmogorov", {})
    pm = mollify(p, Mollifier(4, 2), 8)
    x = np.random.default_rng(0).normal(size=(20, 2))
    np.testing.assert_allclose(pm.drift(0.0, x), p.drift(0.0, x), atol=1e-13)
    np.testing.assert_allclose(pm.a(0.0, x), p.a(0.0, x), atol=1e-13)


@given(st.integers(2, 64))
def test_mollified_rough_drift_converges(m):
    p = make_problem("kinetic_rough", {})
    pm = mollify(p, Mollifier(m, 2), 8)
    x = np.array([[0.3, -0.2], [0.0, 0.0]])
    # the cube has half-side 1/(m sqrt 2); the drift is Lipschitz on it with constant ~1.3
    assert np.max(np.abs(pm.drift(0.0, x) - p.drift(0.0, x))) <= 2.0 / m


@pytest.mark.parametrize("q", [4, 7])
def test_mollify_quadrature_floor(q):
    with pytest.raises(ConfigError):
        mollify(make_problem("kolmogorov", {}), Mollifier(4, 2), q)


def test_terminal_families_vectorise():
    dims = ChainDims(3, 1)
    x = np.ones((4, 3))
    for name in ("zero", "one", "x1", "x2", "xn", "x1_sq", "sin_x1", "smooth", "rough"):
        assert terminal_family(name, dims)(x).shape == (4,)
