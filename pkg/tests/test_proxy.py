import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from schauder_lab.catalog import make_problem
from schauder_lab.errors import ConfigError, OrderingError, UnsupportedError
from schauder_lab.proxy import (FrozenProxy, density_sup, gsp_diagnostic, hermite_factor, moment_identity_check,
                                multi_indices, proxy_density)

L0 = make_problem("kolmogorov", {})


def lyapunov_oracle(A, a, delta):
    """Covariance of dX = AX dt + B dW from the Lyapunov ODE, independent of the proxy code."""
    nd = A.shape[0]
    B = np.zeros((nd, a.shape[0]))
    B[: a.shape[0]] = np.linalg.cholesky(a)
    rhs = lambda _, k: (A @ k.reshape(nd, nd) + k.reshape(nd, nd) @ A.T + B @ B.T).ravel()
    return solve_ivp(rhs, (0, delta), np.zeros(nd * nd), rtol=1e-12, atol=1e-14).y[:, -1].reshape(nd, nd)


@pytest.mark.parametrize("name", ["kolmogorov_n1", "kolmogorov_n2", "kolmogorov_n3"])
@pytest.mark.parametrize("delta", [0.05, 0.5, 1.0])
def test_linear_covariance_matches_lyapunov(name, delta):
    p = make_problem(name, {"a_scale": 1.7})
    K = FrozenProxy(p, 0.0, np.zeros(p.dims.nd)).covariance(0.0, delta)
    np.testing.assert_allclose(K, lyapunov_oracle(p.linear_drift, p.constant_a, delta), rtol=1e-9, atol=1e-13)


@given(st.floats(0.0, 0.9), st.floats(0.01, 0.1))
def test_linear_resolvent_is_matrix_exponential(t, gap):
    R = FrozenProxy(L0, 0.0, np.zeros(2)).resolvent(t, t + gap)
    np.testing.assert_allclose(R, expm(gap * L0.linear_drift), atol=1e-10)


def test_flow_of_l0_is_explicit():
    x = np.array([0.7, -0.3])
    th = FrozenProxy(L0, 0.0, x).theta(np.array([0.0, 0.5, 1.0]))
    np.testing.assert_allclose(th, [[0.7, -0.3], [0.7, 0.05], [0.7, 0.4]], atol=1e-10)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.05, 1.0))
def test_mean_at_freezing_point_is_flow(x1, x2, s):
    p = make_problem("kinetic", {})
    prox = FrozenProxy(p, 0.0, [x1, x2])
    np.testing.assert_allclose(prox.mean(0.0, s, [x1, x2]), prox.theta(s), atol=1e-12)


@pytest.mark.parametrize("name", ["perturbed_ou", "kinetic", "kinetic_rough", "sawtooth"])
def test_covariance_is_spd_and_well_scaled(name):
    p = make_problem(name, {})
    prox = FrozenProxy(p, 0.0, np.array([0.4, -0.4]))
    for s in (1e-3, 0.1, 1.0):
        K = prox.covariance(0.0, s)
        np.testing.assert_allclose(K, K.T, atol=0)
        assert np.linalg.eigvalsh(K).min() > 0
        assert gsp_diagnostic(prox, 0.0, s)["passed"]


def test_batched_proxy_agrees_with_single():
    p = make_problem("kinetic", {})
    X = np.array([[0.1, 0.2], [-1.0, 0.5], [2.0, -2.0]])
    batch = FrozenProxy(p, 0.0, X).covariance(0.0, 0.4)
    for k, x in enumerate(X):
        np.testing.assert_allclose(batch[k], FrozenProxy(p, 0.0, x).covariance(0.0, 0.4), rtol=1e-12)


@pytest.mark.parametrize("theta", [(1, 0), (0, 1), (2, 0), (1, 1)])
def test_density_derivatives_match_finite_differences(theta):
    p = make_problem("perturbed_ou", {})
    x = np.array([0.3, 0.1])
    prox = FrozenProxy(p, 0.0, x)
    y = np.array([0.5, 0.4])
    exact = np.ravel(proxy_density(prox, 0.0, 0.5, x, y, theta))[0]
    h = 1e-4

    def dens(z):
        return float(proxy_density(prox, 0.0, 0.5, z, y))

    def deriv(z, th):
        i = next((k for k, v in enumerate(th) if v), None)
        if i is None:
            return dens(z)
        e = np.zeros(2)
        e[i] = h
        rest = tuple(v - (k == i) for k, v in enumerate(th))
        return (deriv(z + e, rest) - deriv(z - e, rest)) / (2 * h)

    assert exact == pytest.approx(deriv(x, theta), rel=1e-4, abs=1e-8)


def test_hermite_factor_order_limit():
    with pytest.raises(UnsupportedError):
        hermite_factor(np.zeros(2), np.eye(2), 4)


@pytest.mark.parametrize("theta,err", [((1,), ConfigError), ((2, 2), UnsupportedError), ((-1, 0), ConfigError)])
def test_density_multi_index_validation(theta, err):
    prox = FrozenProxy(L0, 0.0, np.zeros(2))
    with pytest.raises(err):
        proxy_density(prox, 0.0, 0.5, np.zeros(2), np.zeros(2), theta)


def test_ordering_errors():
    prox = FrozenProxy(L0, 0.5, np.zeros(2))
    with pytest.raises(OrderingError):
        prox.covariance(0.5, 0.5)
    with pytest.raises(OrderingError):
        prox.gaussian(0.6, 0.55)


def test_moment_identities_need_unbatched_proxy():
    with pytest.raises(ConfigError):
        moment_identity_check(FrozenProxy(L0, 0.0, np.zeros((2, 2))), 0.0, 0.5, np.zeros(2))


@given(st.floats(0.05, 1.0), st.floats(-1, 1), st.floats(-1, 1))
def test_moment_identities_hold_off_the_freezing_point(gap, a, b):
    p = make_problem("kinetic_rough", {})
    prox = FrozenProxy(p, 0.0, np.array([0.2, -0.1]))
    M = np.array([[1.0 + a * a]])
    assert np.max(moment_identity_check(prox, 0.0, gap, np.array([a, b]), M=M)) < 1e-8


def test_density_sup_l0_closed_form():
    prox = FrozenProxy(L0, 0.0, np.zeros(2))
    K = prox.covariance(0.0, 0.3)
    peak = 1.0 / (2 * np.pi * np.sqrt(np.linalg.det(K)))
    assert density_sup(prox, 0.0, 0.3, np.zeros(2), (0, 0)) == pytest.approx(peak, rel=1e-12)


def test_multi_indices_count():
    assert len(list(multi_indices(2, 3))) == 10
