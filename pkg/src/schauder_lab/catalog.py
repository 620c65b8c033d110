"""Built-in parametrised chain problems.

All callables follow the vectorised conventions of :class:`ChainProblem`. Terminal
and source data are chosen by name from small families so configs stay declarative.
"""
from __future__ import annotations

import numpy as np

from .anisotropy import ChainDims
from .errors import ConfigError
from .model import ChainProblem


def toy_matrix(dims: ChainDims) -> np.ndarray:
    """``A_0``: identity blocks on the subdiagonal, zeros elsewhere."""
    A = np.zeros((dims.nd, dims.nd))
    for i in range(2, dims.n + 1):
        A[dims.block(i), dims.block(i - 1)] = np.eye(dims.d)
    return A


def _first(x, dims, i):
    """First coordinate of block i."""
    return x[..., (i - 1) * dims.d]


def terminal_family(name: str, dims: ChainDims):
    n = dims.n
    table = {
        "zero": lambda x: np.zeros(x.shape[:-1]),
        "one": lambda x: np.ones(x.shape[:-1]),
        "x1": lambda x: _first(x, dims, 1),
        "x2": lambda x: _first(x, dims, min(2, n)),
        "xn": lambda x: _first(x, dims, n),
        "x1_sq": lambda x: _first(x, dims, 1) ** 2,
        "sin_x1": lambda x: np.sin(_first(x, dims, 1)),
        "smooth": lambda x: np.sin(_first(x, dims, 1)) + 0.5 * np.cos(_first(x, dims, n)),
        # C^{2+gamma} threshold profile: rough in the last block at the anisotropic index
        "rough": lambda x: (0.5 * np.sin(_first(x, dims, 1)) ** 2 + 0.25)
        * np.abs(np.sin(_first(x, dims, n))) ** ((2 + dims.gamma) / (2 * n - 1)),
    }
    if name not in table:
        raise ConfigError(f"unknown terminal family {name!r}", field="params.g")
    return table[name]


def source_family(name: str | None, dims: ChainDims):
    if name in (None, "zero"):
        return None
    n = dims.n
    table = {
        "one": lambda t, x: np.ones(np.shape(x)[:-1]),
        "x1": lambda t, x: _first(x, dims, 1),
        "smooth": lambda t, x: 0.5 * np.cos(_first(x, dims, 1) - _first(x, dims, n)),
        "rough": lambda t, x: 0.5 * np.abs(np.sin(_first(x, dims, 1))) ** dims.gamma,
    }
    if name not in table:
        raise ConfigError(f"unknown source family {name!r}", field="params.f")
    return table[name]


def _const_diffusion(dims, scale):
    a = scale * np.eye(dims.d)
    return (lambda t, x: np.broadcast_to(a, np.shape(x)[:-1] + a.shape)), a


def _scalar_diffusion(dims, fn):
    eye = np.eye(dims.d)
    return lambda t, x: fn(t, x)[..., None, None] * eye


def _linear_blocks(A, dims):
    blocks = []
    for i in range(1, dims.n + 1):
        rows = A[dims.block(i)]
        blocks.append(lambda t, x, _r=rows: x @ _r.T)
    return blocks


def kolmogorov(dims: ChainDims, a_scale: float = 1.0, g: str = "x2", f: str | None = None) -> ChainProblem:
    A = toy_matrix(dims)
    a_fun, a = _const_diffusion(dims, a_scale)
    return ChainProblem(dims, tuple(_linear_blocks(A, dims)), a_fun, terminal_family(g, dims),
                        source_family(f, dims), catalog_id="kolmogorov",
                        params={"a_scale": a_scale, "g": g, "f": f}, linear_drift=A, constant_a=a)


def perturbed_ou(dims: ChainDims, beta: float = 0.4, damping: float = 0.5, eps: float = 0.3,
                 g: str = "smooth", f: str | None = None) -> ChainProblem:
    """``F = A x + (F~_1(x), 0, ..., 0)`` with ``A`` the toy matrix plus damping on block 1."""
    A = toy_matrix(dims)
    A[dims.block(1), dims.block(1)] = -damping * np.eye(dims.d)
    lin = _linear_blocks(A, dims)
    n = dims.n

    def F1(t, x):
        pert = beta * np.sin(_first(x, dims, 1) + _first(x, dims, n))
        return lin[0](t, x) + pert[..., None]

    a_fun = _scalar_diffusion(dims, lambda t, x: 1.0 + eps * np.sin(_first(x, dims, 1)) ** 2)
    return ChainProblem(dims, (F1, *lin[1:]), a_fun, terminal_family(g, dims), source_family(f, dims),
                        catalog_id="perturbed_ou", params={"beta": beta, "damping": damping, "eps": eps, "g": g, "f": f})


def kinetic(dims: ChainDims, c1: float = 0.5, c2: float = 0.25, c3: float = 0.1, ca: float = 0.25,
            g: str = "smooth", f: str | None = "smooth") -> ChainProblem:
    """Smooth nonlinear kinetic chain (n = 2)."""
    if dims.n != 2:
        raise ConfigError("kinetic problems need n = 2", field="n")

    def F1(t, x):
        return (-c1 * np.sin(x[..., :dims.d]) + 0.3 * np.cos(x[..., dims.d:]))

    def F2(t, x):
        x1, x2 = x[..., :dims.d], x[..., dims.d:]
        return x1 + c2 * np.sin(x1) + c3 * np.cos(x2)

    a_fun = _scalar_diffusion(dims, lambda t, x: 1.0 + ca * np.sin(_first(x, dims, 1)) * np.cos(_first(x, dims, 2)))
    return ChainProblem(dims, (F1, F2), a_fun, terminal_family(g, dims), source_family(f, dims),
                        catalog_id="kinetic", params={"c1": c1, "c2": c2, "c3": c3, "ca": ca, "g": g, "f": f})


def kinetic_rough(dims: ChainDims, c1: float = 0.2, c2: float = 0.0, ca: float = 0.3, damping: float = 0.0,
                  g: str = "smooth", f: str | None = None) -> ChainProblem:
    """Kinetic chain at the Hölder thresholds.

    ``F_2 = x_1 + c1 |x_1|^{1+gamma} + c2 |x_2|^{(1+gamma)/3}``, diffusion rough in ``x_1``.
    """
    if dims.n != 2:
        raise ConfigError("kinetic problems need n = 2", field="n")
    gam = dims.gamma

    def F1(t, x):
        return -damping * x[..., :dims.d]

    def F2(t, x):
        x1, x2 = x[..., :dims.d], x[..., dims.d:]
        return x1 + c1 * np.abs(x1) ** (1 + gam) + c2 * np.abs(x2) ** ((1 + gam) / 3)

    a_fun = _scalar_diffusion(
        dims, lambda t, x: 1.0 + ca * np.abs(np.sin(_first(x, dims, 1))) ** gam
    )
    return ChainProblem(dims, (F1, F2), a_fun, terminal_family(g, dims), source_family(f, dims),
                        catalog_id="kinetic_rough",
                        params={"c1": c1, "c2": c2, "ca": ca, "damping": damping, "g": g, "f": f})


def sawtooth(dims: ChainDims, amp: float = 0.3, period: float = 1.0, g: str = "smooth", f: str | None = None):
    """Toy drift with the sawtooth diffusion ``a = 1 + amp |x_1 mod period|``."""
    A = toy_matrix(dims)
    a_fun = _scalar_diffusion(dims, lambda t, x: 1.0 + amp * np.abs(np.mod(_first(x, dims, 1), period)))
    return ChainProblem(dims, tuple(_linear_blocks(A, dims)), a_fun, terminal_family(g, dims),
                        source_family(f, dims), catalog_id="sawtooth", params={"amp": amp, "period": period},
                        linear_drift=A)


CATALOG = {
    "kolmogorov": (kolmogorov, {}),
    "kolmogorov_n1": (kolmogorov, {"n": 1}),
    "kolmogorov_n2": (kolmogorov, {"n": 2}),
    "kolmogorov_n3": (kolmogorov, {"n": 3}),
    "perturbed_ou": (perturbed_ou, {}),
    "kinetic": (kinetic, {"n": 2}),
    "kinetic_rough": (kinetic_rough, {"n": 2}),
    "sawtooth": (sawtooth, {}),
}


def make_problem(name: str, params: dict | None = None, gamma: float = 0.5, T: float = 1.0) -> ChainProblem:
    """Instantiate a catalog entry. ``params`` may carry ``n`` and ``d`` next to model parameters."""
    if name not in CATALOG:
        raise ConfigError(f"unknown problem {name!r}; choose from {sorted(CATALOG)}", field="problem")
    factory, fixed = CATALOG[name]
    params = dict(params or {})
    n = int(params.pop("n", fixed.get("n", 2)))
    if "n" in fixed and n != fixed["n"]:
        raise ConfigError(f"{name} requires n = {fixed['n']}", field="params.n")
    d = int(params.pop("d", 1))
    dims = ChainDims(n, d, gamma, T)
    try:
        return factory(dims, **params)
    except TypeError as exc:
        raise ConfigError(str(exc), field="params") from exc
