"""Thermic (heat-kernel) Besov norms of 1-D samples and the decay profile of the
degenerate perturbation terms.

Norm of order ``-alpha`` (``alpha > 0``, thermic derivative order 0)::

    ||f|| = ||h_{v0} * f||_1 + int_0^1 v^{alpha/2 - 1} ||h_v * f||_1 dv

with ``h_v`` the centred Gaussian of variance ``v``. The low-pass part uses a Gaussian
multiplier (``v0 = 1``), an equivalent choice to a compactly supported cutoff. The
``v``-integral is a Simpson rule in ``log v`` on ``[v_min, 1]``; the piece below
``v_min`` is estimated from the value at ``v_min`` and bounded by ``||f||_1``.

Two evaluation routes are available:

* ``"fft"``: FFT convolution of the sample with a sampled kernel (smooth samples).
* ``"pl"``: exact convolution of the piecewise-linear interpolant, used in
  divergence form (``f = dTheta/dy``) where ``h_v * Theta'`` is a finite sum of
  Gaussian CDFs. It is accurate for every ``v`` regardless of the sample scale.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.integrate import simpson
from scipy.signal import fftconvolve
from scipy.special import ndtr

from .errors import ConfigError, DomainError, OrderingError, UnsupportedError
from .model import ChainProblem
from .parallel import ordered_map
from .proxy import FrozenProxy, _theta_axes, proxy_density
from .report import DiagnosticReport

Array = np.ndarray
INF_SENTINEL = 1e12
DECAY_TOL = 1e-6


class TruncationWarning(UserWarning):
    """Sample does not decay at the grid boundary."""


@dataclass(frozen=True)
class ThermicConfig:
    alpha_tilde: float
    h: float = 0.01
    R: float = 10.0
    v_min: float = 1e-6
    v_nodes: int = 64
    v0: float = 1.0
    strict: bool = False

    def __post_init__(self):
        if not self.alpha_tilde > 0:
            raise ConfigError("alpha_tilde must be positive", field="besov.alpha_tilde")
        if not self.h > 0:
            raise ConfigError("grid step must be positive", field="besov.h")
        if not self.R > 0:
            raise ConfigError("grid extent must be positive", field="besov.R")
        if not 0 < self.v_min < 1:
            raise ConfigError("v_min must lie in (0, 1)", field="besov.v_min")
        if self.v_nodes < 3:
            raise ConfigError("at least three v nodes are required", field="besov.v_nodes")
        if not self.v0 > 0:
            raise ConfigError("low-pass variance must be positive", field="besov.v0")

    @property
    def v_grid(self) -> Array:
        return np.geomspace(self.v_min, 1.0, self.v_nodes)

    def grid(self) -> Array:
        m = int(round(self.R / self.h))
        return self.h * np.arange(-m, m + 1)


def alpha_tilde(i: int, gamma: float) -> float:
    """Regularity index ``(2 + gamma)/(2i - 1)`` of block ``i``."""
    return (2.0 + gamma) / (2 * i - 1)


def beta_split(i: int, gamma: float) -> float:
    """Split exponent ``(2i-3)(2i-1)/(2i-3-gamma)`` for block ``i >= 2``."""
    if i < 2:
        raise DomainError("split exponent is defined for i >= 2")
    return (2 * i - 3) * (2 * i - 1) / (2 * i - 3 - gamma)


class ThermicNorm(NamedTuple):
    lowpass: float
    tail: float
    total: float
    endpoint: float
    endpoint_bound: float


# --- convolution ---------------------------------------------------------------------------

def _check_decay(values: Array, strict: bool) -> None:
    peak = float(np.max(np.abs(values), initial=0.0))
    edge = max(float(np.max(np.abs(values[..., 0]))), float(np.max(np.abs(values[..., -1]))))
    if peak > 0 and edge >= DECAY_TOL * peak:
        msg = f"sample does not decay at the boundary (edge/peak = {edge / peak:.2e})"
        if strict:
            raise DomainError(msg)
        warnings.warn(msg, TruncationWarning, stacklevel=3)


def _kernel(v: float, h: float) -> Array:
    half = max(int(np.ceil(10.0 * np.sqrt(v) / h)), 1)
    z = h * np.arange(-half, half + 1)
    k = np.exp(-0.5 * z * z / v)
    return k / k.sum()


def _convolve_full(values: Array, h: float, v: float, derivative: bool = False) -> Array:
    if derivative:
        values = np.gradient(values, h, edge_order=2)
    return fftconvolve(values, _kernel(v, h), mode="full")


def heat_convolve(sample, v: float, h: float, strict: bool = False) -> Array:
    """``h_v * f`` on the sample's own grid (the kernel is renormalised so mass is exact)."""
    if not v > 0:
        raise DomainError("variance must be positive")
    values = np.asarray(sample, float)
    _check_decay(values, strict)
    k = _kernel(v, h)
    return fftconvolve(values, k, mode="same") if k.size <= values.size else \
        _crop(fftconvolve(values, k, mode="full"), values.size, k.size)


def _crop(full: Array, n: int, m: int) -> Array:
    start = (m - 1) // 2
    return full[start:start + n]


def _l1_fft(values: Array, h: float, v: float, divergence: bool) -> float:
    return float(h * np.sum(np.abs(_convolve_full(values, h, v, divergence))))


def _l1_pl_divergence(values: Array, h: float, v: float) -> Array:
    """``||h_v * Theta'||_1`` for the piecewise-linear interpolant of each row of ``values``."""
    V = np.atleast_2d(values)
    N = V.shape[-1]
    y = h * np.arange(N)
    slopes = np.diff(V, axis=-1) / h
    jumps = np.diff(np.pad(slopes, [(0, 0), (1, 1)]), axis=-1)  # (B, N)
    sv = np.sqrt(v)
    step = h / 2 if sv < 2 * h else sv / 4
    lo, hi = y[0] - 8 * sv, y[-1] + 8 * sv
    nz = int(np.ceil((hi - lo) / step))
    z = lo + step * (np.arange(nz) + 0.5)
    out = np.empty(V.shape[0])
    block = max(1, 4_000_000 // max(nz * N, 1))
    for b0 in range(0, V.shape[0], block):
        G = np.zeros((min(block, V.shape[0] - b0), nz))
        for c0 in range(0, nz, 2048):
            Phi = ndtr((z[c0:c0 + 2048, None] - y[None, :]) / sv)
            G[:, c0:c0 + 2048] = jumps[b0:b0 + block] @ Phi.T
        out[b0:b0 + block] = step * np.sum(np.abs(G), axis=-1)
    return out


def _assemble(cfg: ThermicConfig, norms_v: Array, norm_v0: Array, norm_f: Array) -> list[ThermicNorm]:
    a = 0.5 * cfg.alpha_tilde
    v = cfg.v_grid
    logv = np.log(v)
    integrand = norms_v * v ** a  # dv/v = dlog v
    tail = simpson(integrand, x=logv, axis=-1)
    endpoint = norms_v[..., 0] * cfg.v_min**a / a
    bound = norm_f * cfg.v_min**a / a
    out = []
    for lp, tl, ep, bd in zip(np.atleast_1d(norm_v0), np.atleast_1d(tail + endpoint), np.atleast_1d(endpoint),
                              np.atleast_1d(bound)):
        tl = float(tl)
        if not np.isfinite(tl) or tl > INF_SENTINEL:
            tl = float("inf")
        out.append(ThermicNorm(float(lp), tl, float(lp) + tl, float(ep), float(bd)))
    return out


def thermic_norm_neg(sample, cfg: ThermicConfig, h: float | None = None, divergence: bool = False,
                     method: str = "fft") -> ThermicNorm:
    """Thermic norm of order ``-alpha_tilde`` of ``f`` (or of ``f'`` when ``divergence``)."""
    return thermic_norm_batch(np.atleast_2d(np.asarray(sample, float)), cfg, h, divergence, method)[0]


def thermic_norm_batch(samples: Array, cfg: ThermicConfig, h: float | None = None, divergence: bool = False,
                       method: str = "fft") -> list[ThermicNorm]:
    """Row-wise :func:`thermic_norm_neg` for samples of shape ``(B, N)``."""
    h = cfg.h if h is None else float(h)
    V = np.atleast_2d(np.asarray(samples, float))
    _check_decay(V, cfg.strict)
    if method == "pl":
        if not divergence:
            raise UnsupportedError("the piecewise-linear route is implemented in divergence form only")
        norms_v = np.stack([_l1_pl_divergence(V, h, v) for v in cfg.v_grid], axis=-1)
        norm_v0 = _l1_pl_divergence(V, h, cfg.v0)
        norm_f = np.sum(np.abs(np.diff(V, axis=-1)), axis=-1)
    elif method == "fft":
        norms_v = np.array([[_l1_fft(row, h, v, divergence) for v in cfg.v_grid] for row in V])
        norm_v0 = np.array([_l1_fft(row, h, cfg.v0, divergence) for row in V])
        norm_f = np.sum(np.abs(np.diff(V, axis=-1)), axis=-1) if divergence else h * np.sum(np.abs(V), axis=-1)
    else:
        raise ConfigError(f"unknown method {method!r}", field="besov.method")
    return _assemble(cfg, norms_v, norm_v0, norm_f)


def thermic_tail_split(sample, cfg: ThermicConfig, v_split: float, h: float | None = None,
                       divergence: bool = False, method: str = "fft") -> dict:
    """Split the tail integral at ``v_split`` on the merged node set.

    Both pieces and the total use the composite trapezoid rule in ``log v`` on the same
    nodes, so ``below + above == total`` is a quadrature identity.
    """
    if not cfg.v_min < v_split < 1:
        raise DomainError("split point must lie inside the v grid")
    h = cfg.h if h is None else float(h)
    V = np.atleast_2d(np.asarray(sample, float))
    v = np.union1d(cfg.v_grid, [v_split])
    if method == "pl":
        norms = np.array([_l1_pl_divergence(V, h, vv)[0] for vv in v])
    else:
        norms = np.array([_l1_fft(V[0], h, vv, divergence) for vv in v])
    g = norms * v ** (0.5 * cfg.alpha_tilde)
    lv = np.log(v)
    k = int(np.searchsorted(v, v_split))
    below = float(np.trapezoid(g[:k + 1], lv[:k + 1]))
    above = float(np.trapezoid(g[k:], lv[k:]))
    total = float(np.trapezoid(g, lv))
    return {"below": below, "above": above, "total": total, "residual": abs(below + above - total),
            "v_split": float(v_split)}


# --- Hölder side and duality ---------------------------------------------------------------

def _pair_seminorm(f: Array, x: Array, beta: float, max_points: int = 2000) -> float:
    stride = max(1, int(np.ceil(f.size / max_points)))
    fs, xs = f[::stride], x[::stride]
    best = 0.0
    for lo in range(0, fs.size, 256):
        df = np.abs(fs[lo:lo + 256, None] - fs[None, :])
        dx = np.abs(xs[lo:lo + 256, None] - xs[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(dx > 0, df / dx**beta, 0.0)
        best = max(best, float(q.max()))
    return best


def holder_norm_scalar(sample, x, alpha_tilde: float) -> float:
    """``C_b^alpha`` norm: sup norms of derivatives up to ``floor(alpha)`` plus the
    fractional seminorm of the top derivative (finite differences on the grid)."""
    if not 0 < alpha_tilde < 3:
        raise DomainError("alpha_tilde must lie in (0, 3)")
    k = int(np.floor(alpha_tilde))
    if np.isclose(alpha_tilde, k):
        raise UnsupportedError("integer orders (Zygmund case) are not supported")
    f = np.asarray(sample, float)
    x = np.asarray(x, float)
    total = 0.0
    for _ in range(k):
        total += float(np.max(np.abs(f)))
        f = np.gradient(f, x, edge_order=2)
    total += float(np.max(np.abs(f)))
    return total + _pair_seminorm(f, x, alpha_tilde - k)


def duality_ratio(f, g, cfg: ThermicConfig, x=None) -> float:
    """``|int f g| / (||g||_{C^alpha} ||f||_{B^{-alpha}})`` for samples on the config grid."""
    x = cfg.grid() if x is None else np.asarray(x, float)
    f = np.asarray(f, float)
    g = np.asarray(g, float)
    pairing = abs(float(np.trapezoid(f * g, x)))
    denom = holder_norm_scalar(g, x, cfg.alpha_tilde) * thermic_norm_neg(f, cfg).total
    return pairing / denom if denom > 0 else 0.0


def duality_constant(cfg: ThermicConfig) -> DiagnosticReport:
    """Largest duality ratio over a fixed catalog of test pairs."""
    x = cfg.grid()
    gauss = lambda s: np.exp(-0.5 * (x / s) ** 2) / (s * np.sqrt(2 * np.pi))
    fs = {
        "gauss": gauss(1.0),
        "gauss_narrow": gauss(0.1),
        "dgauss": -x * gauss(1.0),
        "wave_packet": np.sin(4 * x) * gauss(0.7),
    }
    gs = {
        "cos": np.cos(x),
        "sin3": np.sin(3 * x),
        "cusp": np.abs(np.sin(x)) ** cfg.alpha_tilde if cfg.alpha_tilde < 1 else np.sin(x) * np.abs(np.sin(x)),
        "one": np.ones_like(x),
    }
    rows = {f"{a}|{b}": duality_ratio(fv, gv, cfg, x) for a, fv in fs.items() for b, gv in gs.items()}
    c_dual = max(rows.values())
    return DiagnosticReport("duality_constant", {"ratios": rows, "c_dual": c_dual, "alpha_tilde": cfg.alpha_tilde},
                            module="besov", anchor="duality", passed=bool(np.isfinite(c_dual)))


# --- perturbation-term profile -----------------------------------------------------------------

def _slice_geometry(K: Array, m: Array, i_idx: int, off: Array, mode: str, off_points: int):
    """Off-block nodes/weights and the conditional mean/std of coordinate ``i_idx``."""
    if mode == "slice":
        y_off = m[off][None, :]
        w = np.ones(1)
    else:
        Koo = K[np.ix_(off, off)]
        L = np.linalg.cholesky(Koo)
        u = np.linspace(-8.0, 8.0, off_points)
        du = u[1] - u[0]
        Z = np.stack(np.meshgrid(*([u] * off.size), indexing="ij"), -1).reshape(-1, off.size)
        y_off = m[off] + Z @ L.T
        w = np.full(Z.shape[0], du**off.size * np.prod(np.diag(L)))
    Kio = K[i_idx, off]
    Koo_inv = np.linalg.inv(K[np.ix_(off, off)])
    cmean = m[i_idx] + (y_off - m[off]) @ (Koo_inv @ Kio)
    cstd = np.sqrt(max(K[i_idx, i_idx] - Kio @ Koo_inv @ Kio, 0.0))
    return y_off, w, cmean, cstd


def _resolved_config(cfg: ThermicConfig, h: float) -> ThermicConfig:
    """Lower ``v_min`` below the squared grid step, keeping the node density per decade."""
    v_min = min(cfg.v_min, 1e-2 * h * h)
    if v_min == cfg.v_min:
        return cfg
    per_decade = (cfg.v_nodes - 1) / np.log10(1.0 / cfg.v_min)
    nodes = int(np.ceil(per_decade * np.log10(1.0 / v_min))) + 1
    return replace(cfg, v_min=v_min, v_nodes=nodes)


def psi_profile_at(problem: ChainProblem, proxy: FrozenProxy, level_i: int, theta, t: float, x, s: float,
                   cfg: ThermicConfig, mode: str = "integrate", y_points: int = 121, off_points: int = 49,
                   u_field=None) -> dict:
    """Thermic norm of ``Psi = d/dy_i (D^theta p~ * Delta_i)`` at one ``s`` (d = 1)."""
    dims = problem.dims
    nd = dims.nd
    i_idx = level_i - 1
    R, c, K, L, P = proxy.gaussian(t, s)
    m = R @ x + c
    th = proxy.theta(s)
    J = problem.subdiagonal_jacobian(s, th, level_i)[0, 0]
    off = np.array([k for k in range(nd) if k != i_idx])
    y_off, w, cmean, cstd = _slice_geometry(K, m, i_idx, off, mode, off_points)
    span = 10.0 * cstd
    yi = np.linspace(-span, span, y_points)
    h = yi[1] - yi[0]
    B = y_off.shape[0]
    Y = np.empty((B, y_points, nd))
    Y[..., off] = y_off[:, None, :]
    Y[..., i_idx] = cmean[:, None] + yi[None, :]
    dens = proxy_density(proxy, t, s, x, Y, theta)
    dens = dens.reshape(B, y_points, -1)[..., 0]
    F = problem.drift_blocks[level_i - 1]
    Fy = np.asarray(F(s, Y), float)[..., 0]
    Fth = float(np.asarray(F(s, th), float)[0])
    delta = Fy - Fth - J * (Y[..., i_idx - 1] - th[i_idx - 1])
    Theta = dens * delta
    scale = float(np.max(np.abs(Theta)))
    peak = float(np.max(np.abs(dens)))
    if scale <= 1e-14 * max(peak, 1e-300):
        return {"s": s, "norm": 0.0, "lowpass": 0.0, "tail": 0.0, "pairing": 0.0, "zero": True}
    local = _resolved_config(cfg, h)
    norms = thermic_norm_batch(Theta, local, h=h, divergence=True, method="pl")
    lowpass = float(np.dot(w, [q.lowpass for q in norms]))
    tail = float(np.dot(w, [q.tail for q in norms]))
    out = {"s": s, "norm": lowpass + tail, "lowpass": lowpass, "tail": tail, "zero": False,
           "endpoint": float(np.dot(w, [q.endpoint for q in norms]))}
    if u_field is not None:
        du = u_field.derivatives(s, Y)["Dk"][level_i - 2][..., 0]
        out["pairing"] = float(np.dot(w, np.trapezoid(Theta * du, dx=h, axis=-1)))
    return out


def psi_besov_profile(problem: ChainProblem, u_field=None, level_i: int = 2, theta=(2, 0), t: float = 0.0,
                      x=None, time_grid=None, mode: str = "integrate", cfg: ThermicConfig | None = None,
                      y_points: int = 121, off_points: int = 49, threads: int | None = None) -> DiagnosticReport:
    """Log-log decay of the thermic norm of ``Psi`` against ``s - t``.

    ``mode="slice"`` fixes the off-blocks at the transported point ``theta_{s,t}(x)``;
    ``mode="integrate"`` integrates the slice norms against Lebesgue measure in the
    off-block variables over the Gaussian envelope (requires ``n <= 3``).
    """
    dims = problem.dims
    if dims.d != 1:
        raise UnsupportedError("the profile is implemented for d = 1")
    if not 2 <= level_i <= dims.n:
        raise DomainError("level_i must lie in 2..n")
    if mode not in ("slice", "integrate"):
        raise ConfigError(f"unknown mode {mode!r}", field="besov.mode")
    if mode == "integrate" and dims.n > 3:
        raise UnsupportedError("integrate mode supports n <= 3")
    theta = tuple(theta)
    _theta_axes(theta, dims)
    x = np.zeros(dims.nd) if x is None else np.asarray(x, float)
    if time_grid is None:
        time_grid = t + 2.0 ** -np.arange(3, 10)
    s_vals = np.sort(np.asarray(time_grid, float))
    if np.any(s_vals <= t) or s_vals[-1] > dims.T:
        raise OrderingError("time grid must lie in (t, T]")
    cfg = cfg or ThermicConfig(alpha_tilde(level_i, dims.gamma))
    proxy = FrozenProxy(problem, t, x, t_end=float(s_vals[-1]), steps=256)
    rows = ordered_map(lambda s: psi_profile_at(problem, proxy, level_i, theta, t, x, float(s), cfg, mode,
                                                y_points, off_points, u_field), s_vals, threads)
    gaps = s_vals - t
    norms = np.array([r["norm"] for r in rows])
    predicted = -(sum(k * (j + 0.5) for j, k in enumerate(theta)) - dims.gamma / 2)
    payload = {"mode": mode, "level_i": level_i, "theta": list(theta), "t": t, "x": x, "gaps": gaps,
               "norms": norms, "rows": rows, "alpha_tilde": cfg.alpha_tilde, "predicted_slope": predicted}
    notes = ["off-blocks fixed at the transported point (slice surrogate)"] if mode == "slice" else []
    if np.all(norms == 0.0):
        payload.update(slope=None, exact_cancellation=True)
        return DiagnosticReport("psi_besov_profile", payload, module="besov", anchor="first_besov_control",
                                passed=True, notes=notes + ["exact cancellation: Psi vanishes identically"])
    pos = norms > 0
    slope, intercept = np.polyfit(np.log(gaps[pos]), np.log(norms[pos]), 1)
    payload.update(slope=float(slope), intercept=float(intercept), exact_cancellation=False,
                   slope_error=float(abs(slope - predicted)))
    return DiagnosticReport("psi_besov_profile", payload, module="besov", anchor="first_besov_control",
                            passed=bool(abs(slope - predicted) <= 0.2), notes=notes)
