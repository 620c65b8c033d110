"""Chain problems, assumption checks and spatial mollification."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .anisotropy import ChainDims, pairwise_seminorm
from .errors import ConfigError, ModelError, ShapeError
from .quadrature import box_points, gauss_legendre

Array = np.ndarray


def _zero_source(t, x):
    return np.zeros(np.shape(x)[:-1])


def sqrtm_psd(a: Array) -> Array:
    """Symmetric square root of a batch of PSD matrices (..., d, d)."""
    w, v = np.linalg.eigh(a)
    w = np.sqrt(np.clip(w, 0.0, None))
    return (v * w[..., None, :]) @ np.swapaxes(v, -1, -2)


@dataclass(frozen=True)
class ChainProblem:
    """Coefficients of ``d_t u + <F, Du> + 1/2 Tr(a D^2_{x_1} u) = -f`` with ``u(T) = g``.

    Every callable is vectorised: ``x`` has shape ``(..., nd)`` and ``t`` is a scalar or
    broadcasts against ``x[..., 0]``. ``drift_blocks[i-1]`` returns ``(..., d)``, the
    diffusion returns ``(..., d, d)``, source and terminal return ``(...)``.

    ``linear_drift`` / ``constant_a`` are optional closed forms (matrix ``A`` with
    ``F(x) = A x`` and constant ``a``) used only by exact oracles.
    """

    dims: ChainDims
    drift_blocks: tuple
    diffusion_a: Callable
    terminal_g: Callable
    source_f: Callable | None = None
    sigma: Callable | None = None
    catalog_id: str | None = None
    params: dict = field(default_factory=dict)
    linear_drift: Array | None = None
    constant_a: Array | None = None

    def __post_init__(self):
        if len(self.drift_blocks) != self.dims.n:
            raise ShapeError(f"expected {self.dims.n} drift blocks, got {len(self.drift_blocks)}")
        object.__setattr__(self, "drift_blocks", tuple(self.drift_blocks))

    # evaluation ---------------------------------------------------------------------
    def drift(self, t, x) -> Array:
        x = np.asarray(x, dtype=float)
        try:
            parts = [np.broadcast_to(np.asarray(F(t, x), dtype=float), x.shape[:-1] + (self.dims.d,))
                     for F in self.drift_blocks]
        except Exception as exc:  # pragma: no cover - defensive wrapper
            raise ModelError(f"drift evaluation failed: {exc}") from exc
        return np.concatenate(parts, axis=-1)

    def a(self, t, x) -> Array:
        x = np.asarray(x, dtype=float)
        d = self.dims.d
        return np.broadcast_to(np.asarray(self.diffusion_a(t, x), dtype=float), x.shape[:-1] + (d, d))

    def sigma_at(self, t, x) -> Array:
        if self.sigma is not None:
            x = np.asarray(x, dtype=float)
            d = self.dims.d
            return np.broadcast_to(np.asarray(self.sigma(t, x), dtype=float), x.shape[:-1] + (d, d))
        return sqrtm_psd(self.a(t, x))

    def f(self, t, x) -> Array:
        x = np.asarray(x, dtype=float)
        src = self.source_f or _zero_source
        return np.broadcast_to(np.asarray(src(t, x), dtype=float), x.shape[:-1])

    def g(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.terminal_g(x), dtype=float), x.shape[:-1])

    @property
    def has_source(self) -> bool:
        return self.source_f is not None

    def subdiagonal_jacobian(self, t, x, i: int, rel_step: float = 1e-5) -> Array:
        """``D_{x_{i-1}} F_i(t, x)`` by central differences, shape ``(..., d, d)``."""
        dims = self.dims
        x = np.asarray(x, dtype=float)
        sl = dims.block(i - 1)
        F = self.drift_blocks[i - 1]
        if self.linear_drift is not None:
            blk = self.linear_drift[dims.block(i), sl]
            return np.broadcast_to(blk, x.shape[:-1] + blk.shape).copy()
        h = rel_step * (1.0 + np.linalg.norm(x, axis=-1))
        out = np.empty(x.shape[:-1] + (dims.d, dims.d))
        for b in range(dims.d):
            e = np.zeros(x.shape)
            e[..., sl.start + b] = h
            fp = np.broadcast_to(np.asarray(F(t, x + e), dtype=float), x.shape[:-1] + (dims.d,))
            fm = np.broadcast_to(np.asarray(F(t, x - e), dtype=float), x.shape[:-1] + (dims.d,))
            out[..., :, b] = (fp - fm) / (2.0 * h[..., None])
        return out

    def drift_jacobian(self, t, x, rel_step: float = 1e-5) -> Array:
        """Full ``nd x nd`` matrix holding only the subdiagonal blocks ``D_{x_{i-1}}F_i``."""
        dims = self.dims
        x = np.asarray(x, dtype=float)
        J = np.zeros(x.shape[:-1] + (dims.nd, dims.nd))
        if self.linear_drift is not None:
            A = self.linear_drift
            for i in range(2, dims.n + 1):
                J[..., dims.block(i), dims.block(i - 1)] = A[dims.block(i), dims.block(i - 1)]
            return J
        for i in range(2, dims.n + 1):
            J[..., dims.block(i), dims.block(i - 1)] = self.subdiagonal_jacobian(t, x, i, rel_step)
        return J

    @property
    def is_linear_gaussian(self) -> bool:
        return self.linear_drift is not None and self.constant_a is not None and not self.has_source


# --- assumption checks ----------------------------------------------------------------------

@dataclass
class AssumptionReport:
    kappa_hat: float | None = None
    bounded_violation: bool | None = None
    hormander_min_sv: list | None = None
    hormander_floor: float | None = None
    holder_moduli: list | None = None
    pass_flags: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def merge(self, other: "AssumptionReport") -> "AssumptionReport":
        out = replace(self, pass_flags=dict(self.pass_flags), notes=list(self.notes))
        for name in ("kappa_hat", "bounded_violation", "hormander_min_sv", "hormander_floor", "holder_moduli"):
            val = getattr(other, name)
            if val is not None:
                setattr(out, name, val)
        out.pass_flags.update(other.pass_flags)
        out.notes.extend(other.notes)
        return out

    @property
    def passed(self) -> bool:
        return all(self.pass_flags.values())

    def to_dict(self) -> dict:
        return {
            "kappa_hat": self.kappa_hat,
            "bounded_violation": self.bounded_violation,
            "hormander_min_sv": self.hormander_min_sv,
            "hormander_floor": self.hormander_floor,
            "holder_moduli": self.holder_moduli,
            "pass_flags": dict(sorted(self.pass_flags.items())),
            "notes": list(self.notes),
        }


def default_box(dims: ChainDims, half_width: float = 2.0) -> Array:
    return np.tile([-half_width, half_width], (dims.nd, 1)).astype(float)


def _sample_times(problem: ChainProblem, samples: int, seed: int) -> Array:
    return problem.dims.T * box_points(np.array([[0.0, 1.0]]), samples, seed + 1)[:, 0]


def check_uniform_ellipticity(problem: ChainProblem, samples: int = 256, seed: int = 0, box=None,
                              kappa_cap: float = 1e3) -> AssumptionReport:
    box = default_box(problem.dims) if box is None else np.asarray(box, float)
    x = box_points(box, samples, seed)
    t = _sample_times(problem, samples, seed)
    a = problem.a(t, x)
    asym = float(np.max(np.abs(a - np.swapaxes(a, -1, -2))))
    if asym > 1e-8:
        raise ModelError(f"diffusion matrix not symmetric (max asymmetry {asym:.3e})")
    w = np.linalg.eigvalsh(a)
    lmin, lmax = float(w.min()), float(w.max())
    positive = lmin > 0
    kappa = float(max(lmax, 1.0 / lmin)) if positive else float("inf")
    kappa = max(kappa, 1.0)
    return AssumptionReport(kappa_hat=kappa, bounded_violation=kappa > kappa_cap,
                            pass_flags={"uniform_ellipticity": bool(positive)})


def check_hormander(problem: ChainProblem, samples: int = 256, seed: int = 0, box=None,
                    floor: float = 1e-6, points: Array | None = None) -> AssumptionReport:
    dims = problem.dims
    note = "nondegeneracy sets proxied by a smallest-singular-value floor"
    if dims.n == 1:
        return AssumptionReport(hormander_min_sv=[], hormander_floor=floor, pass_flags={"hormander": True},
                                notes=[note])
    box = default_box(dims) if box is None else np.asarray(box, float)
    x = box_points(box, samples, seed) if points is None else np.asarray(points, float)
    t = _sample_times(problem, x.shape[0], seed)
    mins = []
    for i in range(2, dims.n + 1):
        sv = np.linalg.svd(problem.subdiagonal_jacobian(t, x, i), compute_uv=False)
        mins.append(float(sv.min()))
    return AssumptionReport(hormander_min_sv=mins, hormander_floor=floor,
                            pass_flags={"hormander": bool(min(mins) > floor)}, notes=[note])


def drift_regularity_exponent(i: int, j: int, gamma: float) -> float:
    return (max(2 * i - 3, 0) + gamma) / (2 * j - 1)


def _block_seminorm(problem, i, j, box, samples, seed):
    dims = problem.dims
    beta = drift_regularity_exponent(i, j, dims.gamma)
    k = int(np.floor(beta))
    frac = beta - k
    anchors = box_points(box, samples, seed)
    sl = dims.block(j)
    bbox = box[sl]
    corners = np.array(np.meshgrid(*bbox, indexing="ij")).reshape(dims.d, -1).T
    pts = np.vstack([corners, box_points(bbox, samples, seed + 31 * j)])
    full = np.repeat(anchors[:, None, :], pts.shape[0], axis=1)
    full[..., sl] = pts[None]
    t = _sample_times(problem, samples, seed)[:, None]
    if k == 0:
        vals = np.asarray(problem.drift_blocks[i - 1](t, full), float)
        vals = np.broadcast_to(vals, full.shape[:-1] + (dims.d,))
    else:
        # first derivative along block j (here j = i-1), flattened d x d
        vals = problem.subdiagonal_jacobian(t, full, i).reshape(full.shape[:-1] + (-1,))
    return beta, k, float(np.max(pairwise_seminorm(vals, pts, frac)))


SEMINORM_FLOOR = 1e-6


def check_drift_regularity(problem: ChainProblem, box=None, samples: int = 64, seed: int = 0,
                           growth_tol: float = 1.5) -> AssumptionReport:
    """Hölder moduli of ``F_i`` in each admissible block ``j`` at the threshold exponents.

    The estimate is repeated with four times as many samples; a ratio above
    ``growth_tol`` flags a seminorm that keeps growing (numerically infinite).
    """
    dims = problem.dims
    box = default_box(dims) if box is None else np.asarray(box, float)
    rows = []
    ok = True
    for i in range(1, dims.n + 1):
        for j in range(max(i - 1, 1), dims.n + 1):
            beta, k, coarse = _block_seminorm(problem, i, j, box, samples, seed)
            _, _, fine = _block_seminorm(problem, i, j, box, 4 * samples, seed)
            if max(coarse, fine) < SEMINORM_FLOOR:  # finite-difference noise of a constant Jacobian
                coarse = fine = 0.0
            growth = fine / coarse if coarse > 0 else (1.0 if fine == 0 else np.inf)
            finite = bool(np.isfinite(fine) and growth <= growth_tol)
            ok &= finite
            rows.append({"level": i, "variable": j, "exponent": beta, "derivative_order": k,
                         "seminorm": fine, "seminorm_coarse": coarse, "growth": float(growth), "finite": finite})
    return AssumptionReport(holder_moduli=rows, pass_flags={"drift_regularity": bool(ok)})


def check_structure(problem: ChainProblem, samples: int = 128, seed: int = 0, box=None) -> dict:
    """Numerical checks of the chain structure, symmetry of ``a`` and ``sigma sigma^T = a``."""
    dims = problem.dims
    box = default_box(dims) if box is None else np.asarray(box, float)
    x = box_points(box, samples, seed)
    t = _sample_times(problem, samples, seed)
    rng = np.random.default_rng(seed)
    dep = 0.0
    for i in range(3, dims.n + 1):
        xp = x.copy()
        xp[:, : (i - 2) * dims.d] += rng.normal(size=(samples, (i - 2) * dims.d))
        dep = max(dep, float(np.max(np.abs(problem.drift_blocks[i - 1](t, xp) - problem.drift_blocks[i - 1](t, x)))))
    a = problem.a(t, x)
    s = problem.sigma_at(t, x)
    return {
        "structure_violation": dep,
        "asymmetry": float(np.max(np.abs(a - np.swapaxes(a, -1, -2)))),
        "sigma_reconstruction": float(np.max(np.abs(s @ np.swapaxes(s, -1, -2) - a))),
    }


def check_assumptions(problem: ChainProblem, samples: int = 256, seed: int = 0, box=None) -> AssumptionReport:
    rep = check_uniform_ellipticity(problem, samples, seed, box)
    rep = rep.merge(check_hormander(problem, samples, seed, box))
    return rep.merge(check_drift_regularity(problem, box, max(16, samples // 8), seed))


# --- mollification ----------------------------------------------------------------------------

def _bump(z):
    out = np.zeros_like(z)
    inside = np.abs(z) < 1
    out[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
    return out


_BUMP_MASS = None


def bump_mass() -> float:
    """Integral of the 1-D bump ``exp(-1/(1-z^2))`` over ``(-1, 1)``."""
    global _BUMP_MASS
    if _BUMP_MASS is None:
        from scipy.integrate import quad

        _BUMP_MASS = 2.0 * quad(lambda z: np.exp(-1.0 / (1.0 - z * z)), 0.0, 1.0, epsabs=1e-15, epsrel=1e-13)[0]
    return _BUMP_MASS


@dataclass(frozen=True)
class Mollifier:
    """Level-``m`` mollifier ``phi_m(z) = m^{nd} phi(m z)``.

    ``phi`` is a product of 1-D bumps, each rescaled to ``[-1/sqrt(nd), 1/sqrt(nd)]`` so the
    cube support sits inside the unit ball.
    """

    m: int
    dim: int

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("mollification level must be >= 1", field="mollification.m")

    @property
    def radius(self) -> float:
        return 1.0 / np.sqrt(self.dim)

    def kernel(self, z: Array) -> Array:
        """``phi(z)`` for points ``z`` of shape ``(..., dim)``."""
        r = self.radius
        z = np.asarray(z, float) / r
        return np.prod(_bump(z), axis=-1) / (bump_mass() * r) ** self.dim

    def kernel_m(self, z: Array) -> Array:
        return self.m ** self.dim * self.kernel(self.m * np.asarray(z, float))

    def nodes(self, quad_points: int) -> tuple[Array, Array]:
        """Tensor quadrature for ``int psi(x - z) phi_m(z) dz``: displacements and weights."""
        s, w = gauss_legendre(quad_points)
        s = 2.0 * s - 1.0
        w1 = 2.0 * w * _bump(s)
        w1 = w1 / w1.sum()
        grids = np.meshgrid(*([s] * self.dim), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], -1) * self.radius / self.m
        wts = np.ones(pts.shape[0])
        for g in np.meshgrid(*([w1] * self.dim), indexing="ij"):
            wts = wts * g.ravel()
        return pts, wts


MOLLIFY_BUDGET = 20_000


def _convolve(fun, pts, wts, vshape, with_t=True):
    def wrapped(*args):
        if with_t:
            t, x = args
        else:
            (x,) = args
        x = np.asarray(x, float)
        shifted = x[..., None, :] - pts
        if with_t:
            tt = np.asarray(t, float)[..., None] if np.ndim(t) else t
            vals = fun(tt, shifted)
        else:
            vals = fun(shifted)
        vals = np.broadcast_to(np.asarray(vals, float), shifted.shape[:-1] + vshape)
        w = wts.reshape((-1,) + (1,) * len(vshape))
        return np.sum(vals * w, axis=x.ndim - 1)

    return wrapped


def mollify(problem: ChainProblem, mollifier: Mollifier, quad_points: int = 8, data: bool = False) -> ChainProblem:
    """Convolve drift and diffusion (and optionally ``f``, ``g``) with ``phi_m`` in space."""
    nd = problem.dims.nd
    if mollifier.dim != nd:
        raise ConfigError("mollifier dimension must equal n*d", field="mollification.dim")
    if quad_points < 8:
        raise ConfigError("at least 8 quadrature points per dimension", field="mollification.quad_points")
    if quad_points ** nd > MOLLIFY_BUDGET:
        raise ConfigError(f"{quad_points}^{nd} nodes exceed the mollification budget {MOLLIFY_BUDGET}",
                          field="mollification.quad_points")
    pts, wts = mollifier.nodes(quad_points)
    d = problem.dims.d
    drift = tuple(_convolve(F, pts, wts, (d,)) for F in problem.drift_blocks)
    a = _convolve(problem.diffusion_a, pts, wts, (d, d))
    f = problem.source_f
    g = problem.terminal_g
    if data:
        g = _convolve(problem.terminal_g, pts, wts, (), with_t=False)
        if f is not None:
            f = _convolve(f, pts, wts, ())
    params = dict(problem.params, mollification=mollifier.m)
    return replace(problem, drift_blocks=drift, diffusion_a=a, sigma=None, source_f=f, terminal_g=g,
                   params=params)
