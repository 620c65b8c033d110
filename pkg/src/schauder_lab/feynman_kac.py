"""Euler-Maruyama simulation of the chain and Feynman-Kac Monte Carlo estimates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, ModelError, OrderingError, UnsupportedError
from .model import ChainProblem
from .parallel import ordered_map
from .proxy import FrozenProxy

CHUNK = 4096


@dataclass(frozen=True)
class McConfig:
    paths: int = 10_000
    steps: int = 100
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self):
        if self.paths < 2:
            raise ConfigError("at least two paths are required", field="mc.paths")
        if self.steps < 1:
            raise ConfigError("at least one time step is required", field="mc.steps")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", field="mc.seed")


def path_normals(seed: int, path: int, steps: int, d: int, antithetic: bool = False) -> np.ndarray:
    """Brownian increments (unit variance) of one path from a Philox stream keyed by ``(seed, path)``.

    The Philox counter advances with the step index, so the stream of a path never
    depends on how paths are grouped or scheduled.
    """
    key_path, sign = (path // 2, -1.0 if path % 2 else 1.0) if antithetic else (path, 1.0)
    gen = np.random.Generator(np.random.Philox(key=[seed, key_path]))
    return sign * gen.standard_normal((steps, d))


def _simulate_chunk(problem: ChainProblem, t, s, x0, first, count, cfg: McConfig, accumulate_f: bool):
    """Simulate ``count`` paths (global indices ``first..``) from every start point in ``x0`` (k, nd)."""
    dims = problem.dims
    d = dims.d
    h = (s - t) / cfg.steps
    dW = np.stack([path_normals(cfg.seed, p, cfg.steps, d, cfg.antithetic) for p in range(first, first + count)])
    dW *= np.sqrt(h)
    X = np.broadcast_to(x0[:, None, :], (x0.shape[0], count, dims.nd)).copy()
    integral = np.zeros(X.shape[:-1])
    for k in range(cfg.steps):
        tk = t + k * h
        try:
            drift = problem.drift(tk, X)
            sig = problem.sigma_at(tk, X)
            if accumulate_f:
                integral += problem.f(tk, X) * h
        except Exception as exc:
            raise ModelError(f"coefficient evaluation failed at step {k}, paths {first}..{first + count - 1}: {exc}"
                             ) from exc
        noise = np.einsum("kpab,pb->kpa", sig, dW[:, k, :])
        X = X + drift * h
        X[..., :d] += noise
        if not np.all(np.isfinite(X)):
            raise ModelError(f"non-finite state at step {k}, paths {first}..{first + count - 1}")
    return X, integral


def _run(problem, t, x0, s, cfg, accumulate_f, threads):
    if not t < s:
        raise OrderingError("simulation requires t < s")
    chunks = [(lo, min(CHUNK, cfg.paths - lo)) for lo in range(0, cfg.paths, CHUNK)]
    parts = ordered_map(lambda c: _simulate_chunk(problem, t, s, x0, c[0], c[1], cfg, accumulate_f), chunks, threads)
    return np.concatenate([p[0] for p in parts], axis=1), np.concatenate([p[1] for p in parts], axis=1)


def simulate_chain(problem: ChainProblem, t: float, x, s: float, cfg: McConfig, threads: int | None = None
                   ) -> np.ndarray:
    """Endpoints ``X_s`` (paths, nd) started from ``x`` at time ``t``."""
    x0 = np.atleast_2d(np.asarray(x, float))
    X, _ = _run(problem, t, x0, s, cfg, False, threads)
    return X[0] if np.ndim(x) == 1 else X


@dataclass(frozen=True)
class FkResult:
    estimate: float
    halfwidth: float
    paths: int
    steps: int
    seed: int

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "halfwidth": self.halfwidth, "paths": self.paths,
                "steps": self.steps, "seed": self.seed}


def fk_estimate_many(problem: ChainProblem, t: float, points, cfg: McConfig, threads: int | None = None
                     ) -> list[FkResult]:
    """Feynman-Kac estimates at several start points sharing the same path streams."""
    T = problem.dims.T
    pts = np.atleast_2d(np.asarray(points, float))
    if t > T:
        raise OrderingError("t must not exceed the horizon")
    if t == T:
        return [FkResult(float(problem.g(p)), 0.0, cfg.paths, cfg.steps, cfg.seed) for p in pts]
    X, integral = _run(problem, t, pts, T, cfg, problem.has_source, threads)
    samples = problem.g(X) + integral
    out = []
    for row in samples:
        est = float(np.mean(row))
        sd = float(np.std(row, ddof=1))
        out.append(FkResult(est, 1.96 * sd / np.sqrt(cfg.paths), cfg.paths, cfg.steps, cfg.seed))
    return out


def fk_estimate(problem: ChainProblem, t: float, x, cfg: McConfig, threads: int | None = None) -> FkResult:
    return fk_estimate_many(problem, t, [np.asarray(x, float)], cfg, threads)[0]


def gaussian_chain_oracle(problem: ChainProblem, t: float, x, g: str | None = None) -> float:
    """Exact ``E[g(X_T)]`` for affine drift, constant diffusion and ``g`` of degree <= 2.

    ``g`` names a terminal family (``"one"``, ``"x1"``, ``"x2"``, ``"xn"``, ``"x1_sq"``);
    by default the problem's own family is used.
    """
    if problem.linear_drift is None or problem.constant_a is None:
        raise UnsupportedError("oracle needs a linear drift and a constant diffusion")
    if problem.has_source:
        raise UnsupportedError("oracle does not handle a source term")
    dims = problem.dims
    g = g or problem.params.get("g")
    T = dims.T
    x = np.asarray(x, float)
    A = problem.linear_drift
    mean = expm((T - t) * A) @ x
    if t < T:
        cov = FrozenProxy(problem, t, x, steps=64).covariance(t, T)
    else:
        cov = np.zeros((dims.nd, dims.nd))
    first = lambda i: (i - 1) * dims.d
    table = {
        "zero": lambda: 0.0,
        "one": lambda: 1.0,
        "x1": lambda: mean[0],
        "x2": lambda: mean[first(min(2, dims.n))],
        "xn": lambda: mean[first(dims.n)],
        "x1_sq": lambda: mean[0] ** 2 + cov[0, 0],
    }
    if g not in table:
        raise UnsupportedError(f"terminal family {g!r} is not polynomial of degree <= 2")
    return float(table[g]())
