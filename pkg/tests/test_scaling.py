import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from schauder_lab.anisotropy import ChainDims
from schauder_lab.catalog import make_problem
from schauder_lab.errors import ConfigError, DomainError
from schauder_lab.scaling import (density_factor, density_scaling_check, density_scaling_slope,
                                  diffusion_modulus_identity, evaluation_residual, rescale_problem,
                                  scaled_covariance_sensitivity, scaling_vector)


def test_scaling_vector_blocks():
    dims = ChainDims(3, 1)
    np.testing.assert_allclose(scaling_vector(0.25, dims), [0.5, 0.125, 0.03125])
    with pytest.raises(DomainError):
        scaling_vector(0.0, dims)


def test_lambda_two_example_on_l0():
    p = make_problem("kolmogorov", {})
    sp = rescale_problem(p, 2.0, check_horizon=False).problem
    x = np.array([[1.0, 5.0], [-2.0, 3.0]])
    np.testing.assert_allclose(sp.drift(0.0, x), np.stack([np.zeros(2), x[:, 0] / 2], -1))
    np.testing.assert_allclose(sp.a(0.0, x)[:, 0, 0], 0.5)


@pytest.mark.parametrize("lam", [2.0, 0.1])
def test_horizon_guard(lam):
    with pytest.raises(ConfigError) as exc:
        rescale_problem(make_problem("kolmogorov", {}, T=0.25), lam)
    assert exc.value.field == "lambda"


@given(st.floats(0.05, 3.0), st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_coordinate_maps_invert(lam, x):
    sp = rescale_problem(make_problem("kinetic", {}), lam, check_horizon=False)
    np.testing.assert_allclose(sp.from_scaled(sp.to_scaled(x)), x, rtol=1e-12)


@given(st.floats(0.05, 1.0))
def test_scaled_drift_is_conjugated_original(lam):
    p = make_problem("kinetic_rough", {})
    sp = rescale_problem(p, lam, check_horizon=False)
    y = np.array([[0.3, -0.7], [1.2, 0.4]])
    expected = sp.to_scaled(p.drift(0.0, sp.from_scaled(y)))  # S^{-1} F(S y)
    np.testing.assert_allclose(sp.problem.drift(0.0, y), expected, rtol=1e-12)


def test_identity_rescaling_is_exact():
    p = make_problem("sawtooth", {})
    pts = np.random.default_rng(0).normal(size=(32, 2))
    assert evaluation_residual(rescale_problem(p, 1.0).problem, p, pts) == 0.0


@pytest.mark.parametrize("theta", [None, (1, 0), (0, 1), (2, 0)])
@pytest.mark.parametrize("lam", [0.5, 0.25])
def test_density_correspondence(theta, lam):
    p = make_problem("perturbed_ou", {}, T=0.25)
    assert density_scaling_check(p, lam, samples=6, theta=theta).passed


def test_density_factor_and_slope():
    dims = ChainDims(2, 1)
    assert density_factor(0.5, dims, (1, 0)) == pytest.approx(0.5**2.5)
    out = density_scaling_slope(make_problem("kolmogorov", {}, T=0.25), [1.0, 0.5, 0.25], (1, 0))
    assert out["slope"] == pytest.approx(out["expected"], abs=1e-8)


def test_covariance_sensitivity_stable_in_lambda():
    p = make_problem("kinetic_rough", {}, T=0.25)
    a = scaled_covariance_sensitivity(p, 0.25, 0.5, samples=12)["constant"]
    b = scaled_covariance_sensitivity(p, 1 / 16, 0.5, samples=12)["constant"]
    assert a > 0 and b == pytest.approx(a, rel=0.3)
    assert scaled_covariance_sensitivity(make_problem("kolmogorov", {}, T=0.25), 0.25, 0.5, samples=8)["constant"] == 0


def test_diffusion_modulus_identity():
    out = diffusion_modulus_identity(make_problem("sawtooth", {}), 0.3)
    assert out["relative_gap"] < 1e-12
