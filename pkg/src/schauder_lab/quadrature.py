"""Quadrature rules and low-discrepancy sampling shared across modules."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.stats import qmc

from .errors import ConfigError, NumericalError

#: hard cap on the dimension of tensor Gauss-Hermite rules
MAX_TENSOR_DIM = 6


@lru_cache(maxsize=64)
def _gauss_hermite_1d(nodes: int):
    z, w = hermegauss(nodes)
    return z, w / np.sqrt(2.0 * np.pi)


@lru_cache(maxsize=64)
def gauss_hermite_tensor(dim: int, nodes: int = 20):
    """Standard normal tensor rule on R^dim: points (N, dim) and weights (N,)."""
    if dim > MAX_TENSOR_DIM:
        raise ConfigError(f"tensor Gauss-Hermite limited to dimension {MAX_TENSOR_DIM}, got {dim}",
                          field="quadrature.dim")
    if nodes ** dim > 4_000_000:
        raise ConfigError(f"{nodes}^{dim} Gauss-Hermite nodes exceed the budget", field="quadrature.nodes")
    z, w = _gauss_hermite_1d(nodes)
    grids = np.meshgrid(*([z] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wts = np.ones(pts.shape[0])
    for g in np.meshgrid(*([w] * dim), indexing="ij"):
        wts = wts * g.ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


@lru_cache(maxsize=64)
def gauss_legendre(nodes: int):
    """Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def safe_cholesky(K: np.ndarray) -> np.ndarray:
    """Cholesky factor of a (batch of) SPD matrices, retrying once with trace jitter."""
    try:
        return np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        nd = K.shape[-1]
        jitter = 1e-12 * np.trace(K, axis1=-2, axis2=-1)[..., None, None] * np.eye(nd)
        try:
            return np.linalg.cholesky(K + jitter)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("covariance is not positive definite even after jitter") from exc


def low_discrepancy(n: int, dim: int, seed: int) -> np.ndarray:
    """Scrambled Halton points in [0,1)^dim; the first n points never depend on later ones."""
    return qmc.Halton(dim, scramble=True, seed=np.random.default_rng(seed)).random(n)


def box_points(box, n: int, seed: int) -> np.ndarray:
    box = np.asarray(box, dtype=float)
    lo, hi = box[:, 0], box[:, 1]
    return lo + (hi - lo) * low_discrepancy(n, box.shape[0], seed)
