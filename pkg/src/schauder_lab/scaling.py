"""Anisotropic rescaling ``x -> S x`` with ``S = lam^{-1/2} T_lam`` (block ``i`` scaled by
``lam^{i-1/2}``) and the checks built on it.

If ``X`` solves the chain SDE then ``S^{-1} X`` solves the chain with

    F_lam(t, y) = S^{-1} F(t, S y),   a_lam(t, y) = a(t, S y) / lam,

so transition densities correspond through ``p_lam(t,s,x,y) = det(S) p(t,s,Sx,Sy)``
with ``det(S) = lam^{n^2 d / 2}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anisotropy import quasi_distance, scale_diagonal
from .errors import ConfigError, DomainError
from .model import ChainProblem, default_box
from .proxy import FrozenProxy, proxy_density
from .quadrature import box_points
from .report import DiagnosticReport

Array = np.ndarray


def scaling_vector(lam: float, dims) -> Array:
    """Diagonal of ``S = lam^{-1/2} T_lam``."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    return lam**-0.5 * scale_diagonal(lam, dims)


@dataclass(frozen=True)
class ScaledProblem:
    base: ChainProblem
    lam: float
    problem: ChainProblem

    @property
    def S(self) -> Array:
        return scaling_vector(self.lam, self.base.dims)

    def to_scaled(self, x) -> Array:
        """Original coordinates -> scaled coordinates (``S^{-1} x``)."""
        return np.asarray(x, float) / self.S

    def from_scaled(self, y) -> Array:
        return np.asarray(y, float) * self.S


def rescale_problem(problem: ChainProblem, lam: float, check_horizon: bool = True) -> ScaledProblem:
    """Rescaled coefficients. With ``check_horizon`` the range ``T <= lam <= 1`` is enforced."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    dims = problem.dims
    if check_horizon and (lam > 1 or dims.T / lam > 1):
        raise ConfigError(f"lambda = {lam} violates T/lambda <= 1 <= 1/lambda (T = {dims.T})", field="lambda")
    S = scaling_vector(lam, dims)

    def block(i, F):
        fac = lam ** (0.5 - i)
        return lambda t, y: fac * np.asarray(F(t, np.asarray(y, float) * S), float)

    blocks = tuple(block(i, F) for i, F in enumerate(problem.drift_blocks, start=1))
    a_fun = lambda t, y: np.asarray(problem.diffusion_a(t, np.asarray(y, float) * S), float) / lam
    g_fun = lambda y: problem.terminal_g(np.asarray(y, float) * S)
    f_fun = None
    if problem.source_f is not None:
        f_fun = lambda t, y: problem.source_f(t, np.asarray(y, float) * S)
    sig = None
    if problem.sigma is not None:
        sig = lambda t, y: np.asarray(problem.sigma(t, np.asarray(y, float) * S), float) * lam**-0.5
    lin = None if problem.linear_drift is None else problem.linear_drift * S[None, :] / S[:, None]
    ca = None if problem.constant_a is None else problem.constant_a / lam
    scaled = ChainProblem(dims, blocks, a_fun, g_fun, f_fun, sig, catalog_id=problem.catalog_id,
                          params={**problem.params, "lambda": lam}, linear_drift=lin, constant_a=ca)
    return ScaledProblem(problem, float(lam), scaled)


def evaluation_residual(p: ChainProblem, q: ChainProblem, points, t: float = 0.0) -> float:
    """Largest absolute difference of drift, diffusion, terminal and source values."""
    x = np.asarray(points, float)
    diffs = [np.abs(p.drift(t, x) - q.drift(t, x)).max(), np.abs(p.a(t, x) - q.a(t, x)).max(),
             np.abs(p.g(x) - q.g(x)).max(), np.abs(p.f(t, x) - q.f(t, x)).max()]
    return float(max(diffs))


def density_factor(lam: float, dims, theta=None) -> float:
    """``lam^{n^2 d/2 + sum theta_i (i - 1/2)}``."""
    theta = (0,) * dims.n if theta is None else theta
    return lam ** (dims.n**2 * dims.d / 2 + sum(k * (i + 0.5) for i, k in enumerate(theta)))


def _pairs(problem, samples, seed, box, gap):
    dims = problem.dims
    box = default_box(dims, 1.0) if box is None else np.asarray(box, float)
    pts = box_points(box, 2 * samples, seed)
    return pts[:samples], pts[samples:]


def density_scaling_check(problem: ChainProblem, lam: float, samples: int = 16, seed: int = 0, t: float = 0.0,
                          s: float | None = None, theta=None, box=None, steps: int = 256) -> DiagnosticReport:
    """Relative residual of ``D^theta p~_lam^xi(t,s,x,y) = factor * D^theta p~^{S xi}(t,s,Sx,Sy)``.

    The freezing point is ``xi = x``; ``y`` is drawn around the scaled proxy mean so the
    compared values are not negligible.
    """
    dims = problem.dims
    s = dims.T if s is None else s
    sp = rescale_problem(problem, lam, check_horizon=False)
    S = sp.S
    X, Z = _pairs(problem, samples, seed, box, None)
    worst = 0.0
    for x, z in zip(X, Z):
        prox_l = FrozenProxy(sp.problem, t, x, t_end=s, steps=steps)
        prox_b = FrozenProxy(problem, t, x * S, t_end=s, steps=steps)
        R, c, K, L, P = prox_l.gaussian(t, s)
        y = R @ x + c + L @ (z - z.mean())
        lhs = proxy_density(prox_l, t, s, x, y, theta)
        rhs = density_factor(lam, dims, theta) * proxy_density(prox_b, t, s, x * S, y * S, theta)
        scale = max(float(np.max(np.abs(lhs))), 1e-300)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))) / scale)
    return DiagnosticReport("density_scaling", {"lambda": lam, "theta": list(theta or (0,) * dims.n),
                                                "max_relative_residual": worst, "samples": samples, "seed": seed},
                            module="scaling", anchor="density_correspondence", passed=worst < 1e-6)


def density_scaling_slope(problem: ChainProblem, lams, theta, x=None, t: float = 0.0, s: float | None = None,
                          steps: int = 256) -> dict:
    """Log-log slope in ``lam`` of ``|D^theta p~_lam(x, m)| / |D^theta p~(Sx, Sm)|``."""
    dims = problem.dims
    s = dims.T if s is None else s
    x = np.full(dims.nd, 0.3) if x is None else np.asarray(x, float)
    ratios = []
    for lam in lams:
        sp = rescale_problem(problem, lam, check_horizon=False)
        S = sp.S
        prox_l = FrozenProxy(sp.problem, t, x, t_end=s, steps=steps)
        prox_b = FrozenProxy(problem, t, x * S, t_end=s, steps=steps)
        R, c, K, L, _ = prox_l.gaussian(t, s)
        y = R @ x + c + 0.5 * L @ np.ones(dims.nd)
        a = np.abs(proxy_density(prox_l, t, s, x, y, theta)).max()
        b = np.abs(proxy_density(prox_b, t, s, x * S, y * S, theta)).max()
        ratios.append(a / b)
    slope = float(np.polyfit(np.log(lams), np.log(ratios), 1)[0])
    expected = dims.n**2 * dims.d / 2 + sum(k * (i + 0.5) for i, k in enumerate(theta))
    return {"slope": slope, "expected": expected, "ratios": ratios}


def scaled_covariance_sensitivity(problem: ChainProblem, lam: float, c0: float, samples: int = 32, seed: int = 0,
                                  box=None, t: float = 0.0, steps: int = 128) -> DiagnosticReport:
    """Empirical constant of ``|K~^{xi,lam}_11 - K~^{xi',lam}_11| <= C c0 lam^{gamma/2} d^{2+gamma}(x,x')``
    at ``v = t + c0 lam d^2(x,x')`` (proxies of the rescaled problem frozen at ``x`` and ``x'``)."""
    if not (0 < lam <= 1 and 0 < c0 <= 1):
        raise DomainError("lambda and c0 must lie in (0, 1]")
    dims = problem.dims
    gam = dims.gamma
    sp = rescale_problem(problem, lam, check_horizon=False).problem
    box = default_box(dims, 0.5) if box is None else np.asarray(box, float)
    X, Xp = _pairs(problem, samples, seed, box, None)
    blk = dims.block(1)
    ratios = []
    for x, xp in zip(X, Xp):
        dist = float(quasi_distance(x, xp, dims))
        if dist <= 1e-12:
            continue
        v = t + c0 * lam * dist**2
        if v > dims.T:
            continue
        K = FrozenProxy(sp, t, x, t_end=v, steps=steps).covariance(t, v)[blk, blk]
        Kp = FrozenProxy(sp, t, xp, t_end=v, steps=steps).covariance(t, v)[blk, blk]
        ratios.append(float(np.linalg.norm(K - Kp, 2)) / (c0 * lam ** (gam / 2) * dist ** (2 + gam)))
    const = max(ratios) if ratios else 0.0
    return DiagnosticReport("scaled_covariance_sensitivity",
                            {"lambda": lam, "c0": c0, "constant": const, "pairs": len(ratios), "seed": seed},
                            module="scaling", anchor="scaled_covariance",
                            passed=bool(np.isfinite(const)))


def diffusion_modulus_identity(problem: ChainProblem, lam: float, samples: int = 64, seed: int = 0,
                               box=None) -> dict:
    """Compare ``[a_lam]_gamma`` on sampled pairs with ``lam^{gamma/2-1}`` times the quotient of ``a``
    on the mapped pairs (an algebraic identity of the estimator)."""
    dims = problem.dims
    gam = dims.gamma
    sp = rescale_problem(problem, lam, check_horizon=False)
    X, Y = _pairs(problem, samples, seed, box, None)
    S = sp.S
    num_l = np.linalg.norm((sp.problem.a(0.0, X) - sp.problem.a(0.0, Y)).reshape(samples, -1), axis=-1)
    den_l = quasi_distance(X, Y, dims) ** gam
    num_b = np.linalg.norm((problem.a(0.0, X * S) - problem.a(0.0, Y * S)).reshape(samples, -1), axis=-1)
    den_b = quasi_distance(X * S, Y * S, dims) ** gam
    lhs = float(np.max(num_l / den_l))
    rhs = float(lam ** (gam / 2 - 1) * np.max(num_b / den_b))
    return {"scaled": lhs, "predicted": rhs, "relative_gap": abs(lhs - rhs) / max(abs(rhs), 1e-300)}
