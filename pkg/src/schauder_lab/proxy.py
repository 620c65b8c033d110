"""Frozen linearised Gaussian proxy.

For a freezing pair ``(tau, xi)`` the drift is linearised along the flow
``theta_{v,tau}(xi)`` keeping only the subdiagonal blocks of its Jacobian. The
resulting Ornstein-Uhlenbeck type process has resolvent ``R``, mean

    m_{s,t}(x) = theta_s + R(s,t) (x - theta_t)

and covariance ``K(s,t) = int_t^s R(s,u) B a(u, theta_u) B^T R(s,u)^T du``.

Everything here is batched: ``xi`` may carry leading axes, in which case one proxy
per leading index is built with a shared ``tau`` and time grid.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .anisotropy import ChainDims, scale_diagonal
from .errors import ConfigError, NumericalError, OrderingError, UnsupportedError
from .model import ChainProblem
from .quadrature import gauss_hermite_tensor, gauss_legendre, safe_cholesky

Array = np.ndarray


# --- flow ------------------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowPath:
    """RK4 path of ``theta' = F(v, theta)`` (optionally with the resolvent) on a uniform grid."""

    times: Array  # (K+1,)
    theta: Array  # batch + (K+1, nd)
    dtheta: Array  # batch + (K+1, nd)
    R: Array | None = None  # batch + (K+1, nd, nd), R(v_k, tau)
    dR: Array | None = None

    @property
    def tau(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def _locate(self, v):
        v = np.asarray(v, float)
        K = self.times.size - 1
        if np.any(v < self.times[0] - 1e-12) or np.any(v > self.times[-1] + 1e-12):
            raise OrderingError("time outside the computed flow interval")
        h = (self.times[-1] - self.times[0]) / K if K else 1.0
        k = np.clip(np.floor((v - self.times[0]) / h).astype(int), 0, max(K - 1, 0))
        s = (v - self.times[k]) / h
        return k, s, h

    @staticmethod
    def _hermite(y, dy, k, s, h, tail):
        # y: batch + (K+1,) + tail ; picks rows k (shape vshape) -> batch + vshape + tail
        y0, y1 = np.take(y, k, axis=-1 - tail), np.take(y, k + 1, axis=-1 - tail)
        d0, d1 = np.take(dy, k, axis=-1 - tail), np.take(dy, k + 1, axis=-1 - tail)
        s = s.reshape(s.shape + (1,) * tail)
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1

    def theta_at(self, v) -> Array:
        """Dense output ``theta_v``; shape batch + shape(v) + (nd,)."""
        if self.times.size == 1:
            return np.broadcast_to(self.theta[..., :1, :], self.theta.shape[:-2] + np.shape(v) + self.theta.shape[-1:])
        k, s, h = self._locate(v)
        return self._hermite(self.theta, self.dtheta, k, s, h, 1)

    def R_at(self, v) -> Array:
        """Dense output ``R(v, tau)``; shape batch + shape(v) + (nd, nd)."""
        if self.times.size == 1:
            return np.broadcast_to(self.R[..., :1, :, :], self.R.shape[:-3] + np.shape(v) + self.R.shape[-2:])
        k, s, h = self._locate(v)
        return self._hermite(self.R, self.dR, k, s, h, 2)


def solve_flow(problem: ChainProblem, tau: float, xi, t_end: float, steps: int = 256,
               with_resolvent: bool = False) -> FlowPath:
    """Fixed-step RK4 for the flow (and ``R' = DF(v, theta) R`` when requested)."""
    if steps < 16:
        raise ConfigError("at least 16 RK4 steps are required", field="proxy.steps")
    if t_end < tau:
        raise OrderingError("t_end must not precede tau")
    xi = np.asarray(xi, float)
    nd = problem.dims.nd
    bshape = xi.shape[:-1]
    times = np.linspace(tau, t_end, steps + 1) if t_end > tau else np.array([tau])
    h = (t_end - tau) / steps

    def rhs(v, th, R):
        f = problem.drift(v, th)
        if R is None:
            return f, None
        J = problem.drift_jacobian(v, th)
        return f, J @ R

    K = times.size
    theta = np.empty(bshape + (K, nd))
    dtheta = np.empty_like(theta)
    Rs = np.empty(bshape + (K, nd, nd)) if with_resolvent else None
    dRs = np.empty_like(Rs) if with_resolvent else None
    th = xi.copy()
    R = np.broadcast_to(np.eye(nd), bshape + (nd, nd)).copy() if with_resolvent else None
    for k in range(K):
        v = times[k]
        f, fR = rhs(v, th, R)
        theta[..., k, :], dtheta[..., k, :] = th, f
        if with_resolvent:
            Rs[..., k, :, :], dRs[..., k, :, :] = R, fR
        if k == K - 1:
            break
        k1, l1 = f, fR
        k2, l2 = rhs(v + h / 2, th + h / 2 * k1, None if R is None else R + h / 2 * l1)
        k3, l3 = rhs(v + h / 2, th + h / 2 * k2, None if R is None else R + h / 2 * l2)
        k4, l4 = rhs(v + h, th + h * k3, None if R is None else R + h * l3)
        th = th + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if with_resolvent:
            R = R + h / 6 * (l1 + 2 * l2 + 2 * l3 + l4)
    if not np.all(np.isfinite(theta)):
        raise NumericalError("flow blew up (non-finite values)")
    return FlowPath(times, theta, dtheta, Rs, dRs)


# --- proxy -----------------------------------------------------------------------------------

class FrozenProxy:
    """Linearised Gaussian dynamics frozen at ``(tau, xi)``; immutable after construction."""

    def __init__(self, problem: ChainProblem, tau: float, xi, t_end: float | None = None, steps: int = 256,
                 quad_nodes: int = 32):
        self.problem = problem
        self.dims: ChainDims = problem.dims
        self.tau = float(tau)
        self.xi = np.asarray(xi, float)
        self.t_end = float(problem.dims.T if t_end is None else t_end)
        self.quad_nodes = int(quad_nodes)
        self.flow = solve_flow(problem, self.tau, self.xi, self.t_end, steps, with_resolvent=True)

    @property
    def batch_shape(self) -> tuple:
        return self.xi.shape[:-1]

    def _check(self, t, s, strict=False):
        if t < self.tau - 1e-12 or s > self.t_end + 1e-12:
            raise OrderingError("times must satisfy tau <= t <= s <= t_end")
        if (s <= t) if strict else (s < t):
            raise OrderingError("expected t < s" if strict else "expected t <= s")

    def theta(self, v) -> Array:
        return self.flow.theta_at(v)

    def resolvent(self, t: float, s) -> Array:
        """``R(s, t)``; ``s`` may be an array of times."""
        s_arr = np.asarray(s, float)
        self._check(t, float(np.min(s_arr)))
        Rt = self.flow.R_at(t)
        Rs = self.flow.R_at(s_arr)
        inv = np.linalg.inv(Rt)
        inv = inv.reshape(inv.shape[:-2] + (1,) * s_arr.ndim + inv.shape[-2:])
        return Rs @ inv

    def mean(self, t: float, s, x) -> Array:
        """``m_{s,t}(x) = theta_s + R(s,t)(x - theta_t)``."""
        s_arr = np.asarray(s, float)
        R = self.resolvent(t, s_arr)
        x = np.asarray(x, float)
        th_t = self.theta(t)
        th_s = self.theta(s_arr)
        dx = x - th_t
        dx = dx.reshape(dx.shape[:-1] + (1,) * s_arr.ndim + dx.shape[-1:]) if s_arr.ndim else dx
        return th_s + np.einsum("...ij,...j->...i", R, dx)

    def mean_offset(self, t: float, s) -> Array:
        """Affine offset ``c`` with ``m_{s,t}(x) = R(s,t) x + c``."""
        nd = self.dims.nd
        return self.mean(t, s, np.zeros(self.batch_shape + (nd,)))

    def covariance(self, t: float, s, quad_nodes: int | None = None) -> Array:
        """Gauss-Legendre evaluation of ``K(s,t)``; ``s`` may be an array of times."""
        s_arr = np.asarray(s, float)
        if np.any(s_arr <= t):
            raise OrderingError("covariance requires s > t")
        self._check(t, float(np.min(s_arr)))
        q, w = gauss_legendre(quad_nodes or self.quad_nodes)
        d = self.dims.d
        u = t + (s_arr[..., None] - t) * q  # shape(s) + (Q,)
        Ru = self.flow.R_at(u)
        Rs = self.flow.R_at(s_arr)[..., None, :, :]
        # R(s,u) B = R(s) R(u)^{-1} B, using only the first block column of R(u)^{-1}
        Rsu_B = Rs @ np.linalg.solve(Ru, np.broadcast_to(np.eye(self.dims.nd)[:, :d], Ru.shape[:-1] + (d,)))
        th = self.flow.theta_at(u)
        a = self.problem.a(np.broadcast_to(u, th.shape[:-1]), th)
        integrand = Rsu_B @ a @ np.swapaxes(Rsu_B, -1, -2)
        K = np.einsum("...qij,q->...ij", integrand, w) * (s_arr - t)[..., None, None]
        return 0.5 * (K + np.swapaxes(K, -1, -2))

    # density ------------------------------------------------------------------------------
    def gaussian(self, t: float, s: float):
        """Return ``(R, c, K, L, P)`` for the frozen transition ``t -> s`` (scalar ``s``)."""
        self._check(t, s, strict=True)
        R = self.resolvent(t, s)
        c = self.mean_offset(t, s)
        K = self.covariance(t, s)
        L = safe_cholesky(K)
        P = np.linalg.inv(K)
        return R, c, K, L, 0.5 * (P + np.swapaxes(P, -1, -2))


def resolvent(proxy: FrozenProxy, t: float, s) -> Array:
    return proxy.resolvent(t, s)


def covariance(proxy: FrozenProxy, t: float, s, quad_nodes: int = 32) -> Array:
    return proxy.covariance(t, s, quad_nodes)


def mean(proxy: FrozenProxy, t: float, s, x) -> Array:
    return proxy.mean(t, s, x)


def gsp_diagnostic(proxy: FrozenProxy, t: float, s: float, C: float = 100.0) -> dict:
    """Eigenvalues of ``(s-t) T_{s-t}^{-1} K T_{s-t}^{-1}`` and the ``[1/C, C]`` verdict."""
    K = proxy.covariance(t, s)
    delta = s - t
    tinv = scale_diagonal(delta, proxy.dims, inverse=True)
    M = delta * K * tinv[:, None] * tinv[None, :]
    ev = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))
    if np.any(ev < -1e-10 * np.abs(ev).max()):
        raise NumericalError("rescaled covariance is not positive semidefinite")
    lo, hi = float(ev.min()), float(ev.max())
    return {"lambda_min": lo, "lambda_max": hi, "eigenvalues": ev, "passed": bool(lo >= 1 / C and hi <= C)}


def hermite_factor(z: Array, P: Array, order: int) -> Array:
    """Tensor ``H`` with ``d^k/dz^k N(0,K)(z) = H(z) N(0,K)(z)`` in full coordinates.

    ``z`` has shape (..., nd); ``P = K^{-1}`` broadcasts against it.
    """
    w = np.einsum("...ij,...j->...i", P, z)
    if order == 0:
        return np.ones(z.shape[:-1])
    if order == 1:
        return -w
    Pb = np.broadcast_to(P, w.shape + w.shape[-1:])
    if order == 2:
        return w[..., :, None] * w[..., None, :] - Pb
    if order == 3:
        www = w[..., :, None, None] * w[..., None, :, None] * w[..., None, None, :]
        return (-www + Pb[..., :, :, None] * w[..., None, None, :] + Pb[..., :, None, :] * w[..., None, :, None]
                + Pb[..., None, :, :] * w[..., :, None, None])
    raise UnsupportedError("density derivatives are implemented up to order 3")


def _theta_axes(theta, dims: ChainDims) -> list[int]:
    theta = tuple(int(v) for v in theta)
    if len(theta) != dims.n or any(v < 0 for v in theta):
        raise ConfigError("derivative multi-index must have one nonnegative entry per block", field="theta")
    if sum(theta) > 3:
        raise UnsupportedError("derivative order above 3 is not supported")
    return [i + 1 for i, k in enumerate(theta) for _ in range(k)]


def contract_to_blocks(H: Array, R: Array, blocks: list[int], dims: ChainDims) -> Array:
    """Turn a z-derivative tensor into x-derivatives ``D_{x_{b_1}} ... D_{x_{b_k}}`` via ``R^T``.

    ``H`` has shape S + (nd,)*k; the leading axes of ``R`` (if any) align with S.
    """
    k = len(blocks)
    out = H
    for ax, b in enumerate(blocks):
        Rb = R[..., :, dims.block(b)]
        Rb = Rb.reshape(Rb.shape[:-2] + (1,) * (k - 1) + Rb.shape[-2:])
        pos = out.ndim - k + ax
        out = np.moveaxis(np.einsum("...a,...ab->...b", np.moveaxis(out, pos, -1), Rb), -1, pos)
    return out


def proxy_density(proxy: FrozenProxy, t: float, s: float, x, y, theta=None) -> Array:
    """``D^theta_x p~(t, s, x, y)``; ``y`` may carry extra axes after the batch axes.

    The result has shape batch + shape(y)[:-1] + (d,)*|theta| (blocks in increasing order).
    """
    dims = proxy.dims
    theta = (0,) * dims.n if theta is None else theta
    blocks = _theta_axes(theta, dims)
    R, c, K, L, P = proxy.gaussian(t, s)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    m = np.einsum("...ij,...j->...i", R, x) + c
    extra = y.ndim - 1 - len(proxy.batch_shape)
    m = m.reshape(m.shape[:-1] + (1,) * extra + m.shape[-1:])
    z = m - y
    Pb = P.reshape(P.shape[:-2] + (1,) * extra + P.shape[-2:])
    quad = np.einsum("...i,...ij,...j->...", z, Pb, z)
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)
    logdet = logdet.reshape(logdet.shape + (1,) * extra)
    val = np.exp(-0.5 * quad - 0.5 * logdet - 0.5 * dims.nd * np.log(2 * np.pi))
    if not blocks:
        return val
    H = hermite_factor(z, Pb, len(blocks))
    Rb = R.reshape(R.shape[:-2] + (1,) * extra + R.shape[-2:])
    D = contract_to_blocks(H, Rb, blocks, dims)
    return D * val.reshape(val.shape + (1,) * len(blocks))


def gaussian_nodes(L: Array, mean_vec: Array, nodes: int = 20):
    """Whitened Gauss-Hermite nodes ``y = m + L z`` and weights for ``N(m, L L^T)``."""
    z, w = gauss_hermite_tensor(L.shape[-1], nodes)
    y = mean_vec[..., None, :] + np.einsum("...ij,qj->...qi", L, z)
    return y, w


def moment_identity_check(proxy: FrozenProxy, t: float, s: float, x, nodes: int = 20, M: Array | None = None
                          ) -> Array:
    """Max residuals of the five cancellation identities (single, unbatched proxy).

    Order: covariance block, ``D^2`` odd moment, ``D_k D^2`` odd moment, ``D^2`` quadratic
    moment (target ``M + M^T``), ``D_k D^2`` quadratic moment.
    """
    dims = proxy.dims
    if proxy.batch_shape:
        raise ConfigError("moment identities are checked on an unbatched proxy", field="xi")
    d = dims.d
    M = np.eye(d) if M is None else np.asarray(M, float)
    R, c, K, L, P = proxy.gaussian(t, s)
    m = R @ np.asarray(x, float) + c
    y, w = gaussian_nodes(L, m, nodes)
    z = m - y
    e1 = (y - m)[:, :d]
    r = np.zeros(5)
    r[0] = np.max(np.abs(np.einsum("q,qa,qb->ab", w, e1, e1) - K[:d, :d]))
    H2 = contract_to_blocks(hermite_factor(z, P, 2), R, [1, 1], dims)
    quad = np.einsum("qa,ab,qb->q", e1, M, e1)
    r[1] = np.max(np.abs(np.einsum("q,qab,qc->abc", w, H2, e1)))
    r[3] = np.max(np.abs(np.einsum("q,qab,q->ab", w, H2, quad) - (M + M.T)))
    H3full = hermite_factor(z, P, 3)
    r2, r4 = 0.0, 0.0
    for k in range(1, dims.n + 1):
        H3 = contract_to_blocks(H3full, R, [k, 1, 1], dims)
        r2 = max(r2, float(np.max(np.abs(np.einsum("q,qkab,qc->kabc", w, H3, e1)))))
        r4 = max(r4, float(np.max(np.abs(np.einsum("q,qkab,q->kab", w, H3, quad)))))
    r[2], r[4] = r2, r4
    return r


def density_sup(proxy: FrozenProxy, t: float, s: float, x, theta, nodes: int = 41, span: float = 6.0) -> float:
    """``sup_y |D^theta p~|`` over a whitened tensor grid of ``y`` around the mean."""
    dims = proxy.dims
    R, c, K, L, P = proxy.gaussian(t, s)
    m = R @ np.asarray(x, float) + c
    g1 = np.linspace(-span, span, nodes)
    grid = np.stack(np.meshgrid(*([g1] * dims.nd), indexing="ij"), -1).reshape(-1, dims.nd)
    y = m + grid @ L.T
    vals = proxy_density(proxy, t, s, x, y, theta)
    return float(np.max(np.abs(vals.reshape(vals.shape[0], -1))))


def multi_indices(n: int, max_order: int = 3):
    for theta in itertools.product(range(max_order + 1), repeat=n):
        if sum(theta) <= max_order:
            yield theta
