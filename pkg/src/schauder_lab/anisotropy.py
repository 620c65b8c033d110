"""Intrinsic scalings of the chain: scale matrix, dilation, quasi-distances and
anisotropic Hölder norms.

Block ``i`` (1-based) of a chain state lives at spatial scale ``t^{i-1/2}``; every
exponent in this module follows from that single fact.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, OrderingError, ShapeError
from .quadrature import box_points
from .report import DiagnosticReport


@dataclass(frozen=True)
class ChainDims:
    """Chain shape ``(n, d)`` together with the Hölder index and the horizon."""

    n: int
    d: int
    gamma: float = 0.5
    T: float = 1.0
    max_nd: int = 6

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError("n must be a positive integer", field="n")
        if int(self.d) != self.d or self.d < 1:
            raise ConfigError("d must be a positive integer", field="d")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)", field="gamma")
        if not self.T > 0.0:
            raise ConfigError("T must be positive", field="T")
        if self.n * self.d > self.max_nd:
            raise ConfigError(f"n*d={self.n * self.d} exceeds the limit {self.max_nd}", field="n")

    @property
    def nd(self) -> int:
        return self.n * self.d

    def block(self, i: int) -> slice:
        """Coordinates of block ``i`` (1-based)."""
        return slice((i - 1) * self.d, i * self.d)

    def block_exponents(self) -> np.ndarray:
        """Per-coordinate block index ``i`` (1-based), length ``nd``."""
        return np.repeat(np.arange(1, self.n + 1), self.d)

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        x = np.asarray(x, dtype=float)
        return [x[..., self.block(i)] for i in range(1, self.n + 1)]


@dataclass(frozen=True)
class SpaceTimePoint:
    t: float
    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if not (np.isfinite(self.t) and np.all(np.isfinite(x))):
            raise DomainError("space-time point must be finite")
        object.__setattr__(self, "x", x)


def _check_len(v, dims: ChainDims) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != dims.nd:
        raise ShapeError(f"expected trailing length {dims.nd}, got {v.shape[-1]}")
    return v


def scale_diagonal(u: float, dims: ChainDims, inverse: bool = False) -> np.ndarray:
    """Diagonal of ``T_u`` (or its inverse) as a length-``nd`` vector."""
    if not u > 0:
        raise DomainError("scale parameter must be positive")
    p = dims.block_exponents().astype(float)
    return float(u) ** (-p if inverse else p)


def scale_matrix(u: float, dims: ChainDims, inverse: bool = False) -> np.ndarray:
    return np.diag(scale_diagonal(u, dims, inverse))


def scale_matrix_apply(u: float, v, dims: ChainDims, inverse: bool = False) -> np.ndarray:
    v = _check_len(v, dims)
    return v * scale_diagonal(u, dims, inverse)


def quasi_distance(x, y, dims: ChainDims) -> np.ndarray:
    """``sum_i |y_i - x_i|^{1/(2i-1)}`` with Euclidean block norms; broadcasts over leading axes."""
    x = _check_len(x, dims)
    y = _check_len(y, dims)
    diff = (y - x).reshape(np.broadcast_shapes(x.shape, y.shape)[:-1] + (dims.n, dims.d))
    norms = np.linalg.norm(diff, axis=-1)
    expo = 1.0 / (2.0 * np.arange(1, dims.n + 1) - 1.0)
    return np.sum(norms ** expo, axis=-1)


def parabolic_distance(p: SpaceTimePoint, q: SpaceTimePoint, dims: ChainDims) -> float:
    if q.t < p.t:
        raise OrderingError("parabolic distance expects p.t <= q.t")
    return float(np.sqrt(q.t - p.t) + quasi_distance(p.x, q.x, dims))


def dilate(lam: float, p: SpaceTimePoint, dims: ChainDims) -> SpaceTimePoint:
    """``(lam^2 t, lam x_1, lam^3 x_2, ..., lam^{2n-1} x_n)``."""
    if not lam > 0:
        raise DomainError("dilation factor must be positive")
    powers = 2.0 * dims.block_exponents() - 1.0
    return SpaceTimePoint(lam**2 * p.t, _check_len(p.x, dims) * lam**powers)


def quasi_triangle_constant(dims: ChainDims, box, samples: int, seed: int) -> float:
    """Empirical K with d(x,z) <= K (d(x,y) + d(y,z)) over sampled triples."""
    pts = box_points(box, 3 * samples, seed)
    x, y, z = pts[:samples], pts[samples : 2 * samples], pts[2 * samples :]
    lhs = quasi_distance(x, z, dims)
    rhs = quasi_distance(x, y, dims) + quasi_distance(y, z, dims)
    ok = rhs > 0
    return float(np.max(lhs[ok] / rhs[ok])) if ok.any() else 1.0


# --- Hölder norms -------------------------------------------------------------------------

def _fd_derivatives(psi, pts: np.ndarray, h: np.ndarray, order: int):
    """Gradient (order>=1) and Hessian (order 2) of ``psi`` at ``pts`` (..., d) by central differences."""
    d = pts.shape[-1]
    out = {}
    if order >= 1:
        grad = np.empty(pts.shape)
        for a in range(d):
            e = np.zeros(d)
            e[a] = h[a]
            grad[..., a] = (psi(pts + e) - psi(pts - e)) / (2 * h[a])
        out[1] = grad
    if order >= 2:
        hess = np.empty(pts.shape + (d,))
        f0 = psi(pts)
        for a in range(d):
            ea = np.zeros(d)
            ea[a] = h[a]
            hess[..., a, a] = (psi(pts + ea) - 2 * f0 + psi(pts - ea)) / h[a] ** 2
            for b in range(a + 1, d):
                eb = np.zeros(d)
                eb[b] = h[b]
                val = (psi(pts + ea + eb) - psi(pts + ea - eb) - psi(pts - ea + eb) + psi(pts - ea - eb)) / (
                    4 * h[a] * h[b]
                )
                hess[..., a, b] = hess[..., b, a] = val
        out[2] = hess
    return out


def pairwise_seminorm(values: np.ndarray, coords: np.ndarray, beta: float) -> np.ndarray:
    """``max_{a != b} |v_a - v_b| / |c_a - c_b|^beta`` along axis -2 (values (..., N, m), coords (N, d))."""
    dist = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=-1)
    iu = np.triu_indices(coords.shape[0], k=1)
    dist = dist[iu]
    keep = dist > 0
    if not keep.any():
        return np.zeros(values.shape[:-2])
    dv = values[..., iu[0], :] - values[..., iu[1], :]
    num = np.linalg.norm(dv, axis=-1)[..., keep]
    return np.max(num / dist[keep] ** beta, axis=-1)


def holder_norm_anisotropic(
    field,
    dims: ChainDims,
    order_k: int,
    box,
    samples: int = 32,
    seed: int = 0,
    anchors: np.ndarray | None = None,
    shifts: list[np.ndarray] | None = None,
) -> DiagnosticReport:
    """Estimate the anisotropic ``C^{k+gamma}_d`` norm of a vectorised scalar ``field`` on a box.

    For every block ``i`` and sampled anchor ``z`` the one-directional function
    ``x -> field(z with block i replaced by x)`` is measured in ``C^{(k+gamma)/(2i-1)}``:
    sups of its integer derivatives (central differences, step ``width/256``) plus the
    fractional seminorm of the top derivative over sampled pairs. Anchors and shift
    sets may be supplied explicitly, which makes restriction experiments reproducible.
    """
    if order_k not in (0, 2):
        raise ConfigError("order_k must be 0 or 2", field="order_k")
    box = np.asarray(box, dtype=float)
    if box.shape != (dims.nd, 2) or np.any(box[:, 1] <= box[:, 0]):
        raise ConfigError("box must be a non-empty (nd, 2) array of bounds", field="box")
    if samples < 2:
        raise ConfigError("at least two samples are required", field="samples")
    if anchors is None:
        anchors = box_points(box, samples, seed)
    anchors = np.asarray(anchors, dtype=float)

    per_dir = []
    sup_norm = 0.0
    for i in range(1, dims.n + 1):
        sl = dims.block(i)
        bbox = box[sl]
        if shifts is None:
            corners = np.array(list(itertools.product(*bbox)))
            pts = np.vstack([corners, box_points(bbox, samples, seed + 7919 * i)])
        else:
            pts = np.asarray(shifts[i - 1], dtype=float)
        beta = (order_k + dims.gamma) / (2 * i - 1)
        k_int = int(np.floor(beta))
        frac = beta - k_int
        h = (bbox[:, 1] - bbox[:, 0]) / 256.0

        def psi(x, _sl=sl):
            # x: (A, P, d) block-i values for each anchor
            full = np.broadcast_to(anchors[:, None, :], x.shape[:-1] + (dims.nd,)).copy()
            full[..., _sl] = x
            return np.asarray(field(full), dtype=float)

        grid = np.broadcast_to(pts[None], (anchors.shape[0],) + pts.shape)
        vals = psi(grid)
        sup_norm = max(sup_norm, float(np.max(np.abs(vals))) if vals.size else 0.0)
        derivs = _fd_derivatives(psi, grid, h, k_int)
        deriv_sups = [float(np.max(np.linalg.norm(derivs[j].reshape(derivs[j].shape[:2] + (-1,)), axis=-1)))
                      for j in range(1, k_int + 1)]
        top = vals[..., None] if k_int == 0 else derivs[k_int].reshape(derivs[k_int].shape[:2] + (-1,))
        semi = float(np.max(pairwise_seminorm(top, pts, frac))) if frac > 0 else 0.0
        norm = float(sum(deriv_sups) + semi)
        per_dir.append({"block": i, "exponent": beta, "seminorm": semi, "derivative_sups": deriv_sups,
                        "norm": norm})
    for comp in per_dir:
        comp["bounded_norm"] = comp["norm"] + sup_norm
    total = float(sum(c["norm"] for c in per_dir))
    payload = {
        "directions": per_dir,
        "total": total,
        "sup": sup_norm,
        "total_bounded": float(sum(c["bounded_norm"] for c in per_dir)),
        "bounded": total + sup_norm,
        "box": box.tolist(),
        "samples": int(samples),
        "seed": int(seed),
    }
    return DiagnosticReport("holder_norm_anisotropic", payload, module="anisotropy", anchor="inhomogeneous_norm")
