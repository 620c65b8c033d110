"""Frozen semigroup, Green kernel and the first-order parametrix (Duhamel) solver.

The solution is represented on a tensor space-time grid. Each grid node ``(t, x)``
carries its own proxy frozen at ``(t, x)``; the fixed point

    u = P~ g + G~ f + int_t^T int p~ (L - L~) u

is iterated (Picard) with ``u`` accessed by interpolation and its derivatives by
central differences on the grid.
"""
from __future__ import annotations

import itertools
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import NdBSpline, make_interp_spline

from .anisotropy import ChainDims, quasi_distance
from .errors import ConfigError, NonConvergenceError, OrderingError
from .model import ChainProblem
from .parallel import ordered_map
from .proxy import FrozenProxy, contract_to_blocks, gaussian_nodes, hermite_factor
from .quadrature import gauss_hermite_tensor, gauss_legendre, safe_cholesky
from .report import DiagnosticReport, write_csv

Array = np.ndarray


# --- fields ------------------------------------------------------------------------------------

def _second_difference(V: Array, h: float, axis: int) -> Array:
    V = np.moveaxis(V, axis, 0)
    out = np.empty_like(V)
    out[1:-1] = (V[2:] - 2 * V[1:-1] + V[:-2]) / h**2
    if V.shape[0] >= 4:
        out[0] = (2 * V[0] - 5 * V[1] + 4 * V[2] - V[3]) / h**2
        out[-1] = (2 * V[-1] - 5 * V[-2] + 4 * V[-3] - V[-4]) / h**2
    else:
        out[0], out[-1] = out[1], out[-2]
    return np.moveaxis(out, 0, axis)


class SampledField:
    """Scalar field on ``times x axes[0] x ... x axes[nd-1]`` (uniform axes).

    Interpolation is linear in time and multilinear in space. Points outside the box
    are clamped to the boundary (``outside="clamp"``) or extrapolated from the boundary
    cell (``"linear"``); ``extrapolations`` counts the affected queries.
    """

    def __init__(self, times, axes: Sequence[Array], values, dims: ChainDims, outside: str = "clamp"):
        self.times = np.asarray(times, float)
        self.axes = [np.asarray(a, float) for a in axes]
        self.values = np.asarray(values, float)
        self.dims = dims
        self.outside = outside
        if len(self.axes) != dims.nd:
            raise ConfigError("one axis per coordinate is required", field="grid.points")
        expected = (self.times.size,) + tuple(a.size for a in self.axes)
        if self.values.shape != expected:
            raise ConfigError(f"values shape {self.values.shape} does not match grid {expected}", field="grid")
        if np.any(np.diff(self.times) <= 0):
            raise ConfigError("time grid must be increasing", field="grid.time_points")
        if any(a.size < 3 for a in self.axes):
            raise ConfigError("at least three points per axis are required", field="grid.points")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("field values must be finite", field="values")
        self.steps = np.array([a[1] - a[0] for a in self.axes])
        self.extrapolations = 0
        self._lock = threading.Lock()  # the counter is bumped from worker threads
        self._channels = None

    # geometry ---------------------------------------------------------------------
    @property
    def space_shape(self) -> tuple:
        return tuple(a.size for a in self.axes)

    def nodes(self) -> Array:
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def interior_mask(self, margin: int) -> Array:
        mask = np.ones(self.space_shape, bool)
        for ax, n in enumerate(self.space_shape):
            idx = [slice(None)] * len(self.space_shape)
            idx[ax] = np.r_[0:margin, n - margin:n]
            mask[tuple(idx)] = False
        return mask

    # interpolation ----------------------------------------------------------------
    def _stencil(self, t, x, outside=None):
        outside = outside or self.outside
        x = np.asarray(x, float).reshape(-1, self.dims.nd)
        t = np.broadcast_to(np.asarray(t, float), x.shape[:1]).ravel()
        P = x.shape[0]
        if self.times.size == 1:
            jt = np.zeros(P, int)
            ft = np.zeros(P)
        else:
            jt = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 2)
            ft = np.clip((t - self.times[jt]) / (self.times[jt + 1] - self.times[jt]), 0.0, 1.0)
        idx_axes, frac_axes = [], []
        outside_pts = np.zeros(P, bool)
        for a, ax in enumerate(self.axes):
            pos = (x[:, a] - ax[0]) / self.steps[a]
            outside_pts |= (pos < -1e-9) | (pos > ax.size - 1 + 1e-9)
            i = np.clip(np.floor(pos).astype(int), 0, ax.size - 2)
            f = pos - i
            if outside == "clamp":
                f = np.clip(f, 0.0, 1.0)
            idx_axes.append(i)
            frac_axes.append(f)
        with self._lock:
            self.extrapolations += int(outside_pts.sum())
        strides = np.array([int(np.prod(self.space_shape[a + 1:])) for a in range(self.dims.nd)])
        nspace = int(np.prod(self.space_shape))
        idx_list, w_list = [], []
        for corner in itertools.product((0, 1), repeat=self.dims.nd):
            flat = np.zeros(P, int)
            w = np.ones(P)
            for a, c in enumerate(corner):
                flat += (idx_axes[a] + c) * strides[a]
                w *= frac_axes[a] if c else 1.0 - frac_axes[a]
            for ct in (0, 1):
                if self.times.size == 1 and ct:
                    continue
                idx_list.append((jt + ct) * nspace + flat)
                w_list.append(w * (ft if ct else 1.0 - ft))
        return np.stack(idx_list, 1), np.stack(w_list, 1)

    def _gather(self, data: Array, t, x, outside=None, chunk: int = 200_000) -> Array:
        x = np.asarray(x, float)
        lead = x.shape[:-1]
        xf = x.reshape(-1, self.dims.nd)
        tf = np.broadcast_to(np.asarray(t, float), lead).ravel()
        flat = data.reshape(-1, *data.shape[1 + self.dims.nd:]) if data.ndim > 1 + self.dims.nd else data.reshape(-1)
        out = np.empty((xf.shape[0],) + flat.shape[1:])
        for lo in range(0, xf.shape[0], chunk):
            hi = min(lo + chunk, xf.shape[0])
            idx, w = self._stencil(tf[lo:hi], xf[lo:hi], outside)
            vals = flat[idx]
            out[lo:hi] = np.einsum("pc,pc...->p...", w, vals)
        return out.reshape(lead + flat.shape[1:])

    def interpolate(self, t, x, outside=None) -> Array:
        return self._gather(self.values, t, x, outside)

    def slice_function(self, t: float, outside: str = "linear") -> Callable:
        """``x -> u(t, x)`` (used as terminal data of a chained segment)."""
        return lambda x: self.interpolate(t, x, outside)

    def smooth_slice(self, t: float, order: int = 5) -> Callable:
        """Tensor spline interpolant (degree ``order``, not-a-knot ends) of the slice nearest
        to ``t``; used where derivatives of the interpolant matter (Hölder-norm estimates).
        Polynomials of degree ``<= order`` are reproduced exactly."""
        j = int(np.argmin(np.abs(self.times - t)))
        coeffs = self.values[j]
        knots = []
        for ax, a in enumerate(self.axes):
            k = min(order, a.size - 1)
            spl = make_interp_spline(a, coeffs, k=k, axis=ax)
            coeffs = np.moveaxis(spl.c, 0, ax)  # BSpline stores the spline axis first
            knots.append(spl.t)
        degree = tuple(min(order, a.size - 1) for a in self.axes)
        spline = NdBSpline(tuple(knots), coeffs, degree, extrapolate=True)

        def fun(x):
            x = np.asarray(x, float)
            return spline(x.reshape(-1, self.dims.nd)).reshape(x.shape[:-1])

        return fun

    # derivatives ------------------------------------------------------------------
    @property
    def channels(self) -> Array:
        """Stacked finite-difference derivative fields: ``D_{x1}u``, ``D^2_{x1}u``, ``D_{x_i}u`` (i >= 2)."""
        if self._channels is None:
            dims = self.dims
            d = dims.d
            V = self.values
            chans = []
            grads = [np.gradient(V, self.steps[c], axis=1 + c, edge_order=2) for c in range(dims.nd)]
            chans += grads[:d]
            for a in range(d):
                for b in range(d):
                    if a == b:
                        chans.append(_second_difference(V, self.steps[a], 1 + a))
                    else:
                        chans.append(np.gradient(grads[a], self.steps[b], axis=1 + b, edge_order=2))
            chans += grads[d:]
            self._channels = np.stack(chans, axis=-1)
        return self._channels

    def derivatives(self, t, y) -> dict:
        return split_channels(self._gather(self.channels, t, y), self.dims)

    # export -----------------------------------------------------------------------
    def to_csv(self, path) -> None:
        nodes = self.nodes()
        rows = []
        flat = self.values.reshape(self.times.size, -1)
        for j, t in enumerate(self.times):
            for k in range(nodes.shape[0]):
                rows.append((t, *nodes[k], flat[j, k]))
        header = ["t"] + [f"x{c + 1}" for c in range(self.dims.nd)] + ["u"]
        write_csv(path, header, rows)

    def to_binary(self, path) -> None:
        """Header: magic, n, d, time count, axis sizes, grid vectors; payload row-major float64 (LE)."""
        head = struct.pack("<8sIII", b"SCHFLD01", self.dims.n, self.dims.d, self.times.size)
        head += struct.pack(f"<{self.dims.nd}I", *self.space_shape)
        vecs = np.concatenate([self.times] + self.axes).astype("<f8").tobytes()
        Path(path).write_bytes(head + vecs + np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path, gamma: float = 0.5, T: float | None = None) -> "SampledField":
        raw = Path(path).read_bytes()
        magic, n, d, nt = struct.unpack_from("<8sIII", raw, 0)
        if magic != b"SCHFLD01":
            raise ConfigError("not a field file", field="path")
        off = struct.calcsize("<8sIII")
        shape = struct.unpack_from(f"<{n * d}I", raw, off)
        off += 4 * n * d
        sizes = [nt, *shape]
        vec = np.frombuffer(raw, "<f8", sum(sizes), off)
        off += 8 * sum(sizes)
        parts = np.split(vec, np.cumsum(sizes)[:-1])
        values = np.frombuffer(raw, "<f8", int(np.prod(sizes)), off).reshape(sizes)
        dims = ChainDims(n, d, gamma, T if T is not None else float(parts[0][-1]) or 1.0)
        return cls(parts[0], parts[1:], values, dims)


def split_channels(ch: Array, dims: ChainDims) -> dict:
    d = dims.d
    out = {"D1": ch[..., :d], "D11": ch[..., d:d + d * d].reshape(ch.shape[:-1] + (d, d))}
    rest = ch[..., d + d * d:]
    out["Dk"] = [rest[..., (i - 2) * d:(i - 1) * d] for i in range(2, dims.n + 1)]
    return out


class CallableField:
    """Field interface over an analytic ``u(t, y)`` with central-difference derivatives."""

    def __init__(self, fun: Callable, dims: ChainDims, step: float = 1e-4):
        self.fun = fun
        self.dims = dims
        self.step = step
        self.extrapolations = 0

    def interpolate(self, t, y, outside=None) -> Array:
        return np.asarray(self.fun(t, np.asarray(y, float)), float)

    def derivatives(self, t, y) -> dict:
        dims, h = self.dims, self.step
        y = np.asarray(y, float)
        u = lambda z: self.interpolate(t, z)

        def e(c):
            v = np.zeros(dims.nd)
            v[c] = h
            return v

        d = dims.d
        grads = [(u(y + e(c)) - u(y - e(c))) / (2 * h) for c in range(dims.nd)]
        D1 = np.stack(grads[:d], -1)
        D11 = np.empty(y.shape[:-1] + (d, d))
        u0 = u(y)
        for a in range(d):
            D11[..., a, a] = (u(y + e(a)) - 2 * u0 + u(y - e(a))) / h**2
            for b in range(a + 1, d):
                D11[..., a, b] = D11[..., b, a] = (
                    u(y + e(a) + e(b)) - u(y + e(a) - e(b)) - u(y - e(a) + e(b)) + u(y - e(a) - e(b))
                ) / (4 * h * h)
        Dk = [np.stack(grads[(i - 1) * d:i * d], -1) for i in range(2, dims.n + 1)]
        return {"D1": D1, "D11": D11, "Dk": Dk}


# --- frozen semigroup and Green kernel --------------------------------------------------

def frozen_semigroup_apply(proxy: FrozenProxy, psi: Callable, t: float, s: float, x, nodes: int = 20,
                           order_theta=None) -> Array:
    """``int D^theta_x p~(t,s,x,y) psi(y) dy`` by whitened tensor Gauss-Hermite (theta defaults to 0)."""
    if s <= t:
        raise OrderingError("semigroup needs t < s")
    dims = proxy.dims
    R, c, K, L, P = proxy.gaussian(t, s)
    m = np.einsum("...ij,...j->...i", R, np.asarray(x, float)) + c
    y, w = gaussian_nodes(L, m, nodes)
    vals = np.asarray(psi(y), float)
    if order_theta is None or sum(order_theta) == 0:
        return np.einsum("...q,q->...", vals, w)
    blocks = [i + 1 for i, k in enumerate(order_theta) for _ in range(k)]
    H = hermite_factor(m[..., None, :] - y, P[..., None, :, :], len(blocks))
    D = contract_to_blocks(H, R[..., None, :, :], blocks, dims)
    sub = "abc"[: len(blocks)]
    return np.einsum(f"...q,q,...q{sub}->...{sub}", vals, w, D)


def green_apply(proxy: FrozenProxy, f: Callable, t: float, t1: float, t2: float, x, time_nodes: int = 16,
                nodes: int = 20) -> Array:
    """``int_{t1}^{t2} ds int p~(t,s,x,y) f(s,y) dy`` with Gauss-Legendre in time."""
    if not t <= t1 < t2:
        raise OrderingError("green kernel needs t <= t1 < t2")
    q, wq = gauss_legendre(time_nodes)
    s_nodes = t1 + (t2 - t1) * q
    total = 0.0
    x = np.asarray(x, float)
    for s, w in zip(s_nodes, wq):
        if s - t < 1e-14:
            val = f(t, x)
        else:
            val = frozen_semigroup_apply(proxy, lambda y, _s=s: f(_s, y), t, s, x, nodes)
        total = total + w * (t2 - t1) * val
    return total


# --- perturbation terms ----------------------------------------------------------------------

@dataclass
class PerturbationTerms:
    delta1: Array
    delta_i: list
    coefficients: dict = field(default_factory=dict)

    @property
    def total(self) -> Array:
        return self.delta1 + sum(self.delta_i) if self.delta_i else self.delta1


def mismatch_coefficients(problem: ChainProblem, s, theta, jac, y) -> dict:
    """Coefficients of ``(L - L~)`` at ``(s, y)`` for a proxy linearised at ``theta``.

    ``jac`` holds ``D_{x_{i-1}}F_i(s, theta)`` for ``i = 2..n``. Shapes: ``theta`` broadcasts
    against ``y``.
    """
    dims = problem.dims
    s_b = np.broadcast_to(np.asarray(s, float), np.broadcast_shapes(np.shape(y)[:-1], np.shape(theta)[:-1]))
    th = np.broadcast_to(theta, s_b.shape + (dims.nd,))
    Fy = problem.drift(s_b, y)
    Ft = problem.drift(s_b, th)
    out = {"c1": Fy[..., :dims.d] - Ft[..., :dims.d], "ca": problem.a(s_b, y) - problem.a(s_b, th), "ck": []}
    for i in range(2, dims.n + 1):
        sl, sp = dims.block(i), dims.block(i - 1)
        lin = np.einsum("...ab,...b->...a", jac[i - 2], (y - th)[..., sp])
        out["ck"].append(Fy[..., sl] - Ft[..., sl] - lin)
    return out


def apply_mismatch(coef: dict, deriv: dict) -> tuple[Array, list]:
    d1 = np.einsum("...a,...a->...", coef["c1"], deriv["D1"]) + 0.5 * np.einsum(
        "...ab,...ab->...", coef["ca"], deriv["D11"])
    di = [np.einsum("...a,...a->...", c, D) for c, D in zip(coef["ck"], deriv["Dk"])]
    return d1, di


def perturbation_residual(problem: ChainProblem, proxy: FrozenProxy, u_field, s: float, y) -> PerturbationTerms:
    """``Delta_1`` and ``Delta_i`` at ``(s, y)`` using the proxy's transported point ``theta_s``."""
    th = proxy.theta(s)
    y = np.asarray(y, float)
    jac = [problem.subdiagonal_jacobian(s, th, i) for i in range(2, problem.dims.n + 1)]
    extra = y.ndim - th.ndim
    th_b = th.reshape(th.shape[:-1] + (1,) * extra + th.shape[-1:])
    jac = [J.reshape(J.shape[:-2] + (1,) * extra + J.shape[-2:]) for J in jac]
    coef = mismatch_coefficients(problem, s, th_b, jac, y)
    d1, di = apply_mismatch(coef, u_field.derivatives(s, y))
    return PerturbationTerms(d1, di, coef)


def remainder_integral(problem: ChainProblem, proxy: FrozenProxy, u_field, t: float, x, s_lo: float, s_hi: float,
                       gh_nodes: int = 8, time_nodes: int = 16, order_theta=None) -> Array:
    """``int_{s_lo}^{s_hi} ds int D^theta_x p~(t,s,x,y) (L - L~)u(s,y) dy`` (singularity-aware when s_lo = t)."""
    if s_hi <= s_lo:
        shape = proxy.batch_shape + ((proxy.dims.d,) * (sum(order_theta) if order_theta else 0))
        return np.zeros(shape)
    dims = proxy.dims
    r, wr = gauss_legendre(time_nodes)
    if s_lo <= t + 1e-15:
        s_nodes = t + (s_hi - t) * r**2
        ws = 2 * (s_hi - t) * r * wr
    else:
        s_nodes = s_lo + (s_hi - s_lo) * r
        ws = (s_hi - s_lo) * wr
    x = np.asarray(x, float)
    R = proxy.resolvent(t, s_nodes)
    m = proxy.mean(t, s_nodes, x)
    K = proxy.covariance(t, s_nodes)
    L = safe_cholesky(K)
    z, wz = gauss_hermite_tensor(dims.nd, gh_nodes)
    y = m[..., None, :] + np.einsum("...ij,qj->...qi", L, z)
    th = proxy.theta(s_nodes)
    jac = [problem.subdiagonal_jacobian(np.broadcast_to(s_nodes, th.shape[:-1]), th, i)[..., None, :, :]
           for i in range(2, dims.n + 1)]
    coef = mismatch_coefficients(problem, s_nodes[:, None], th[..., None, :], jac, y)
    d1, di = apply_mismatch(coef, u_field.derivatives(np.broadcast_to(s_nodes[:, None], y.shape[:-1]), y))
    integrand = d1 + sum(di) if di else d1  # batch + (S, Q)
    W = ws[:, None] * wz[None, :]
    if not order_theta or sum(order_theta) == 0:
        return np.einsum("...sq,sq->...", integrand, W)
    blocks = [i + 1 for i, k in enumerate(order_theta) for _ in range(k)]
    P = np.linalg.inv(K)
    H = hermite_factor(m[..., None, :] - y, P[..., None, :, :], len(blocks))
    D = contract_to_blocks(H, R[..., None, :, :], blocks, dims)
    sub = "abc"[: len(blocks)]
    return np.einsum(f"...sq,sq,...sq{sub}->...{sub}", integrand, W, D)


# --- the grid solver ----------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    box: tuple
    points: tuple
    time_points: int = 9
    margin: int = 2
    proxy_steps: int = 64
    gh_nodes: int = 8
    gh_nodes_data: int = 20
    time_nodes: int = 16

    def axes(self) -> list[Array]:
        return [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.box, self.points)]

    @classmethod
    def uniform(cls, dims: ChainDims, half_widths, points, **kw) -> "GridSpec":
        hw = np.broadcast_to(np.asarray(half_widths, float), (dims.n,))
        pts = np.broadcast_to(np.asarray(points, int), (dims.n,))
        box = tuple((-float(hw[i]), float(hw[i])) for i in range(dims.n) for _ in range(dims.d))
        return cls(box, tuple(int(pts[i]) for i in range(dims.n) for _ in range(dims.d)), **kw)


@dataclass
class SolveResult:
    field: SampledField
    history: list
    iterations: int
    converged: bool
    base: Array
    extrapolations: int = 0
    segments: list | None = None  # filled by time chaining

    @property
    def values(self) -> Array:
        return self.field.values


class _Slice:
    """Precomputed quadrature for all nodes of one time slice."""

    def __init__(self, problem, t, t_end, X, grid: GridSpec, terminal):
        dims = problem.dims
        proxy = FrozenProxy(problem, t, X, t_end=t_end, steps=grid.proxy_steps)
        # data part: P~g + G~f with the exact data functions
        base = frozen_semigroup_apply(proxy, terminal, t, t_end, X, grid.gh_nodes_data)
        if problem.has_source:
            base = base + green_apply(proxy, problem.f, t, t, t_end, X, grid.time_nodes, grid.gh_nodes_data)
        self.base = base
        r, wr = gauss_legendre(grid.time_nodes)
        s = t + (t_end - t) * r**2
        ws = 2 * (t_end - t) * r * wr
        K = proxy.covariance(t, s)
        L = safe_cholesky(K)
        z, wz = gauss_hermite_tensor(dims.nd, grid.gh_nodes)
        th = proxy.theta(s)  # (B, S, nd)
        self.y = th[..., None, :] + np.einsum("bsij,qj->bsqi", L, z)
        jac = [problem.subdiagonal_jacobian(np.broadcast_to(s, th.shape[:-1]), th, i)[..., None, :, :]
               for i in range(2, dims.n + 1)]
        self.coef = mismatch_coefficients(problem, s[:, None], th[..., None, :], jac, self.y)
        self.s = np.broadcast_to(s[:, None], self.y.shape[:-1])
        self.W = ws[:, None] * wz[None, :]

    def remainder(self, u: SampledField) -> Array:
        d1, di = apply_mismatch(self.coef, u.derivatives(self.s, self.y))
        integrand = d1 + sum(di) if di else d1
        return np.einsum("bsq,sq->b", integrand, self.W)


def parametrix_solve(problem: ChainProblem, grid: GridSpec, tol: float = 1e-8, max_iter: int = 30,
                     t_start: float = 0.0, t_end: float | None = None, terminal: Callable | None = None,
                     threads: int | None = None) -> SolveResult:
    """Picard iteration for the first-order parametrix expansion on a space-time grid."""
    dims = problem.dims
    t_end = dims.T if t_end is None else float(t_end)
    if not t_start < t_end:
        raise OrderingError("t_start must precede t_end")
    terminal = terminal or problem.g
    times = np.linspace(t_start, t_end, grid.time_points)
    axes = grid.axes()
    probe = SampledField(times, axes, np.zeros((times.size,) + tuple(a.size for a in axes)), dims)
    X = probe.nodes()
    space_shape = probe.space_shape

    slices = ordered_map(lambda t: _Slice(problem, t, t_end, X, grid, terminal), list(times[:-1]), threads)
    base = np.empty((times.size, X.shape[0]))
    for j, sl in enumerate(slices):
        base[j] = sl.base
    base[-1] = terminal(X)

    def field_of(vals):
        return SampledField(times, axes, vals.reshape((times.size,) + space_shape), dims)

    u = base.copy()
    history = []
    converged = False
    extrap = 0
    for _ in range(max_iter):
        current = field_of(u)
        rem = ordered_map(lambda sl: sl.remainder(current), slices, threads)
        extrap += current.extrapolations
        new = base.copy()
        for j, r in enumerate(rem):
            new[j] += r
        change = float(np.max(np.abs(new - u)))
        history.append(change)
        u = new
        if change < tol:
            converged = True
            break
        if len(history) >= 4 and history[-1] > history[-2] > history[-3] > history[-4]:
            raise NonConvergenceError("Picard iteration diverges", history)
    out = field_of(u)
    return SolveResult(out, history, len(history), converged, base.reshape(out.values.shape), extrap)


def time_chained_solve(problem: ChainProblem, N: int, grid: GridSpec, tol: float = 1e-8, max_iter: int = 30,
                       threads: int | None = None) -> SolveResult:
    """Solve on ``N`` backward segments, each taking its terminal data from the previous one."""
    if N < 1:
        raise ConfigError("N must be a positive integer", field="N")
    T = problem.dims.T
    edges = T * (1.0 - np.arange(N + 1) / N)
    terminal = problem.g
    results = []
    for k in range(N):
        try:
            res = parametrix_solve(problem, grid, tol, max_iter, t_start=edges[k + 1], t_end=edges[k],
                                   terminal=terminal, threads=threads)
        except NonConvergenceError as exc:
            raise NonConvergenceError(f"segment {k + 1}: {exc}", exc.history, segment=k + 1) from exc
        results.append(res)
        terminal = res.field.slice_function(edges[k + 1], outside="linear")
    # stitch: earliest segment first, dropping duplicated interface times
    times, vals = [], []
    for k, res in enumerate(reversed(results)):
        f = res.field
        keep = slice(None) if k == N - 1 else slice(0, -1)
        times.append(f.times[keep])
        vals.append(f.values[keep])
    field_ = SampledField(np.concatenate(times), results[0].field.axes, np.concatenate(vals), problem.dims)
    out = SolveResult(field_, [r.history for r in results], max(r.iterations for r in results),
                      all(r.converged for r in results), np.concatenate([r.base for r in reversed(results)]),
                      sum(r.extrapolations for r in results))
    out.segments = [{"segment": k + 1, "t_start": float(edges[k + 1]), "t_end": float(edges[k]),
                     "iterations": r.iterations} for k, r in enumerate(results)]
    return out


# --- freezing-point switch -------------------------------------------------------------------

def _switch_term(px, pxp, u_field, t, t0, xp, nodes, theta, dims):
    if t0 <= t:
        return np.zeros((dims.d, dims.d)) if theta else 0.0
    u0 = lambda y: u_field.interpolate(t0, y)
    return (frozen_semigroup_apply(pxp, u0, t, t0, xp, nodes, theta)
            - frozen_semigroup_apply(px, u0, t, t0, xp, nodes, theta))


def discontinuity_term(problem: ChainProblem, u_field, t: float, x, x_prime, c0: float, order: int = 2,
                       proxy_steps: int = 128, semigroup_nodes: int = 20) -> float:
    """Size of the term created by switching the freezing point from ``x'`` to ``x`` at ``t0``:
    ``|D^order (P~^{x'} - P~^{x})_{t,t0} u(t0, .)(x')|`` with ``t0 = (t + c0 d^2(x,x')) ^ T``."""
    dims = problem.dims
    x = np.asarray(x, float)
    xp = np.asarray(x_prime, float)
    t0 = min(t + c0 * float(quasi_distance(x, xp, dims)) ** 2, dims.T)
    if t0 <= t:
        return 0.0
    theta = (2,) + (0,) * (dims.n - 1) if order == 2 else None
    px = FrozenProxy(problem, t, x, t_end=t0, steps=proxy_steps)
    pxp = FrozenProxy(problem, t, xp, t_end=t0, steps=proxy_steps)
    return float(np.max(np.abs(_switch_term(px, pxp, u_field, t, t0, xp, semigroup_nodes, theta, dims))))


# --- regime split ---------------------------------------------------------------------------------

def regime_split_expand(problem: ChainProblem, u_field, t: float, x, x_prime, c0: float, order: int = 0,
                        gh_nodes: int = 8, time_nodes: int = 16, proxy_steps: int = 128,
                        semigroup_nodes: int = 20) -> DiagnosticReport:
    """Regime split of ``u(t,x) - u(t,x')`` (``order=0``) or of ``D^2_{x_1}`` of it (``order=2``).

    Returns the off-diagonal part on ``[t, t0]`` (freezings ``x`` and ``x'``), the diagonal part
    on ``[t0, T]`` (common freezing ``x``) and the discontinuity term created by switching
    the freezing point at ``t0``; each is also divided by ``d^gamma(x, x')``.
    """
    if not 0 < c0 <= 1:
        raise ConfigError("c0 must lie in (0, 1]", field="c0")
    if order not in (0, 2):
        raise ConfigError("order must be 0 or 2", field="order")
    dims = problem.dims
    T = dims.T
    x = np.asarray(x, float)
    xp = np.asarray(x_prime, float)
    dist = float(quasi_distance(x, xp, dims))
    t0 = min(t + c0 * dist**2, T)
    theta = (2,) + (0,) * (dims.n - 1) if order == 2 else None
    px = FrozenProxy(problem, t, x, steps=proxy_steps)
    pxp = FrozenProxy(problem, t, xp, steps=proxy_steps)

    def rem(proxy, at, lo, hi):
        return remainder_integral(problem, proxy, u_field, t, at, lo, hi, gh_nodes, time_nodes, theta)

    off = rem(px, x, t, t0) - rem(pxp, xp, t, t0)
    diag = rem(px, x, t0, T) - rem(px, xp, t0, T)
    disc = _switch_term(px, pxp, u_field, t, t0, xp, semigroup_nodes, theta, dims)
    dg = dist**dims.gamma if dist > 0 else np.inf
    mag = lambda v: float(np.max(np.abs(v)))
    payload = {
        "t0": t0, "distance": dist, "c0": c0, "order": order,
        "off_diagonal": mag(off), "diagonal": mag(diag), "discontinuity": mag(disc),
        "off_diagonal_ratio": mag(off) / dg, "diagonal_ratio": mag(diag) / dg, "discontinuity_ratio": mag(disc) / dg,
    }
    return DiagnosticReport("regime_split", payload, module="solver", anchor="regime_split")
