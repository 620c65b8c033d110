"""Experiment configuration, the Schauder-ratio report and the pipeline runner."""
from __future__ import annotations

import json
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .anisotropy import holder_norm_anisotropic
from .besov import ThermicConfig, TruncationWarning, alpha_tilde, duality_constant, psi_besov_profile
from .catalog import CATALOG, make_problem
from .errors import ConfigError, SchauderLabError
from .feynman_kac import McConfig, fk_estimate_many, gaussian_chain_oracle
from .model import ChainProblem, Mollifier, check_assumptions, mollify
from .proxy import FrozenProxy, gsp_diagnostic, moment_identity_check
from .report import DiagnosticReport, dumps_json, write_csv
from .scaling import density_scaling_check, scaled_covariance_sensitivity
from .sensitivity import SensitivitySettings, sensitivity_suite
from .solver import GridSpec, parametrix_solve, time_chained_solve

EXPERIMENTS = ("check", "proxy", "solve", "fk", "besov", "scale", "schauder", "sensitivity", "full")


# --- configuration ----------------------------------------------------------------------------

def _num(value, path, lo=None, hi=None, integer=False, lo_open=False, hi_open=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=path)
    if integer and int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", field=path)
    if not np.isfinite(value):
        raise ConfigError("value must be finite", field=path)
    if lo is not None and (value <= lo if lo_open else value < lo):
        raise ConfigError(f"value {value} below the allowed range", field=path)
    if hi is not None and (value >= hi if hi_open else value > hi):
        raise ConfigError(f"value {value} above the allowed range", field=path)
    return int(value) if integer else float(value)


def _section(raw: dict, key: str, allowed: set) -> dict:
    sec = raw.get(key, {})
    if not isinstance(sec, dict):
        raise ConfigError("expected an object", field=key)
    for k in sec:
        if k not in allowed:
            raise ConfigError(f"unknown key {k!r}", field=f"{key}.{k}")
    return sec


@dataclass(frozen=True)
class GridConfig:
    half_width: float = 4.0
    points: int = 17
    time_points: int = 5
    proxy_steps: int = 64
    gh_nodes: int = 8

    def spec(self, problem: ChainProblem) -> GridSpec:
        return GridSpec.uniform(problem.dims, self.half_width, self.points, time_points=self.time_points,
                                proxy_steps=self.proxy_steps, gh_nodes=self.gh_nodes)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "full"
    problem: str = "kolmogorov"
    params: dict = field(default_factory=dict)
    gamma: float = 0.5
    T: float = 1.0
    seed: int = 0
    grid: GridConfig = field(default_factory=GridConfig)
    tol: float = 1e-8
    max_iter: int = 30
    segments: int = 1
    mollification_levels: tuple = (8, 16, 32)
    quad_points: int = 8
    c0: float = 0.5
    lam: tuple = (1.0,)
    mc_paths: int = 10_000
    mc_steps: int = 100
    antithetic: bool = False
    points: tuple = ()
    theta: tuple = (2, 0)
    besov_mode: str = "integrate"
    samples: int = 16
    out: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object", field="$")
        top = {"experiment", "problem", "params", "gamma", "T", "seed", "grid", "solver", "mollification", "c0",
               "lambda", "mc", "points", "besov", "sensitivity", "out"}
        for k in raw:
            if k not in top:
                raise ConfigError(f"unknown key {k!r}", field=k)
        kw = {}
        exp = raw.get("experiment", "full")
        if exp not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {exp!r}; choose from {list(EXPERIMENTS)}", field="experiment")
        kw["experiment"] = exp
        prob = raw.get("problem", "kolmogorov")
        if prob not in CATALOG:
            raise ConfigError(f"unknown problem {prob!r}; choose from {sorted(CATALOG)}", field="problem")
        kw["problem"] = prob
        params = raw.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("expected an object", field="params")
        kw["params"] = dict(params)
        kw["gamma"] = _num(raw.get("gamma", 0.5), "gamma", 0.0, 1.0, lo_open=True, hi_open=True)
        kw["T"] = _num(raw.get("T", 1.0), "T", 0.0, lo_open=True)
        kw["seed"] = _num(raw.get("seed", 0), "seed", 0, 2**64 - 1, integer=True)
        g = _section(raw, "grid", {"half_width", "points", "time_points", "proxy_steps", "gh_nodes"})
        kw["grid"] = GridConfig(
            half_width=_num(g.get("half_width", 4.0), "grid.half_width", 0.0, lo_open=True),
            points=_num(g.get("points", 17), "grid.points", 3, 401, integer=True),
            time_points=_num(g.get("time_points", 5), "grid.time_points", 2, 257, integer=True),
            proxy_steps=_num(g.get("proxy_steps", 64), "grid.proxy_steps", 16, integer=True),
            gh_nodes=_num(g.get("gh_nodes", 8), "grid.gh_nodes", 2, 40, integer=True))
        s = _section(raw, "solver", {"tol", "max_iter", "segments"})
        kw["tol"] = _num(s.get("tol", 1e-8), "solver.tol", 0.0, lo_open=True)
        kw["max_iter"] = _num(s.get("max_iter", 30), "solver.max_iter", 1, integer=True)
        kw["segments"] = _num(s.get("segments", 1), "solver.segments", 1, 64, integer=True)
        m = _section(raw, "mollification", {"levels", "quad_points"})
        levels = m.get("levels", [8, 16, 32])
        if not isinstance(levels, list) or not levels:
            raise ConfigError("expected a non-empty list", field="mollification.levels")
        kw["mollification_levels"] = tuple(_num(v, f"mollification.levels[{i}]", 1, integer=True)
                                           for i, v in enumerate(levels))
        kw["quad_points"] = _num(m.get("quad_points", 8), "mollification.quad_points", 8, integer=True)
        kw["c0"] = _num(raw.get("c0", 0.5), "c0", 0.0, 1.0, lo_open=True)
        lam = raw.get("lambda", [1.0])
        lam = lam if isinstance(lam, list) else [lam]
        kw["lam"] = tuple(_num(v, f"lambda[{i}]", 0.0, 1.0, lo_open=True) for i, v in enumerate(lam))
        for i, v in enumerate(kw["lam"]):
            if kw["T"] / v > 1:
                raise ConfigError(f"T/lambda = {kw['T'] / v} exceeds 1", field=f"lambda[{i}]")
        mc = _section(raw, "mc", {"paths", "steps", "antithetic"})
        kw["mc_paths"] = _num(mc.get("paths", 10_000), "mc.paths", 2, integer=True)
        kw["mc_steps"] = _num(mc.get("steps", 100), "mc.steps", 1, integer=True)
        anti = mc.get("antithetic", False)
        if not isinstance(anti, bool):
            raise ConfigError("expected true or false", field="mc.antithetic")
        kw["antithetic"] = anti
        pts = raw.get("points", [])
        if not isinstance(pts, list):
            raise ConfigError("expected a list of points", field="points")
        kw["points"] = tuple(tuple(_num(c, f"points[{i}][{j}]") for j, c in enumerate(p))
                             for i, p in enumerate(pts))
        b = _section(raw, "besov", {"theta", "mode"})
        theta = b.get("theta", [2, 0])
        if not isinstance(theta, list):
            raise ConfigError("expected a list", field="besov.theta")
        kw["theta"] = tuple(_num(v, f"besov.theta[{i}]", 0, 3, integer=True) for i, v in enumerate(theta))
        mode = b.get("mode", "integrate")
        if mode not in ("slice", "integrate"):
            raise ConfigError(f"unknown mode {mode!r}", field="besov.mode")
        kw["besov_mode"] = mode
        sens = _section(raw, "sensitivity", {"samples"})
        kw["samples"] = _num(sens.get("samples", 16), "sensitivity.samples", 2, integer=True)
        out = raw.get("out")
        if out is not None and not isinstance(out, str):
            raise ConfigError("expected a path string", field="out")
        kw["out"] = out
        cfg = cls(**kw)
        problem = cfg.build_problem()  # validates params against the catalog entry
        nd = problem.dims.nd
        for i, p in enumerate(cfg.points):
            if len(p) != nd:
                raise ConfigError(f"expected {nd} coordinates", field=f"points[{i}]")
        if len(cfg.theta) != problem.dims.n:
            raise ConfigError(f"expected {problem.dims.n} entries", field="besov.theta")
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", field="config") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}", field="config") from exc
        return cls.from_dict(raw)

    def build_problem(self) -> ChainProblem:
        return make_problem(self.problem, self.params, gamma=self.gamma, T=self.T)

    def mc(self) -> McConfig:
        return McConfig(self.mc_paths, self.mc_steps, self.seed, self.antithetic)

    def probe_points(self, problem: ChainProblem) -> np.ndarray:
        if self.points:
            return np.array(self.points, float)
        return np.zeros((1, problem.dims.nd))


# --- Schauder ratio ----------------------------------------------------------------------------

def _norm_box(problem: ChainProblem, grid: GridConfig, fraction: float = 0.5) -> np.ndarray:
    hw = fraction * grid.half_width
    return np.tile([-hw, hw], (problem.dims.nd, 1))


def data_norm(problem: ChainProblem, box, samples: int, seed: int, time_samples: int = 5) -> dict:
    """``||g||_{C^{2+gamma}_d} + sup_t ||f(t)||_{C^gamma_d}`` on ``box``."""
    dims = problem.dims
    g_norm = holder_norm_anisotropic(problem.g, dims, 2, box, samples, seed)["bounded"]
    f_norm = 0.0
    if problem.has_source:
        for t in np.linspace(0.0, dims.T, time_samples):
            f_norm = max(f_norm, holder_norm_anisotropic(lambda x, _t=t: problem.f(_t, x), dims, 0, box, samples,
                                                         seed)["bounded"])
    return {"g": g_norm, "f": f_norm, "total": g_norm + f_norm}


def schauder_constant_report(problem: ChainProblem, levels=(8, 16, 32), grid: GridConfig | None = None,
                             quad_points: int = 8, samples: int = 16, seed: int = 0, tol: float = 1e-8,
                             max_iter: int = 30, stability: float = 0.05) -> DiagnosticReport:
    """Ratio ``R_m = ||u_m||_{C^{2+gamma}_d} / (data norm)`` for each mollification level ``m``.

    ``u_m(0, .)`` is read from a quintic spline through the grid slice, so its derivatives
    exist at the finite-difference scale of the norm estimator. Norms are restricted to
    the central half of the solve box.
    """
    grid = grid or GridConfig()
    dims = problem.dims
    box = _norm_box(problem, grid)
    data = data_norm(problem, box, samples, seed)
    rows = []
    for m in levels:
        pm = mollify(problem, Mollifier(int(m), dims.nd), quad_points)
        res = parametrix_solve(pm, grid.spec(pm), tol, max_iter)
        u0 = res.field.smooth_slice(0.0)
        u_norm = holder_norm_anisotropic(u0, dims, 2, box, samples, seed)["bounded"]
        ratio = u_norm / data["total"] if data["total"] > 0 else 0.0
        rows.append({"m": int(m), "solution_norm": u_norm, "data_norm": data["total"], "ratio": ratio,
                     "iterations": res.iterations, "converged": res.converged})
    ratios = np.array([r["ratio"] for r in rows])
    ref = float(np.max(np.abs(ratios)))
    spread = float((ratios.max() - ratios.min()) / ref) if ref > 0 else 0.0
    passed = bool(spread <= stability and all(r["converged"] for r in rows) and np.all(np.isfinite(ratios)))
    return DiagnosticReport("schauder_constant", {"rows": rows, "relative_spread": spread, "data": data,
                                                  "box": box, "samples": samples, "seed": seed},
                            module="schauder_lab", anchor="schauder_estimate", passed=passed)


def chained_consistency(problem: ChainProblem, N: int, grid: GridConfig, tol: float = 1e-10) -> DiagnosticReport:
    """Sup difference on interior nodes at ``t = 0`` between an ``N``-segment and a single solve."""
    spec = grid.spec(problem)
    one = parametrix_solve(problem, spec, tol)
    chained = time_chained_solve(problem, N, spec, tol)
    mask = one.field.interior_mask(spec.margin)
    diff = float(np.max(np.abs(one.field.values[0][mask] - chained.field.values[0][mask])))
    return DiagnosticReport("chained_consistency", {"segments": N, "max_difference": diff,
                                                    "segment_iterations": chained.segments},
                            module="schauder_lab", anchor="time_chaining", passed=diff < 1e-6)


# --- pipelines ------------------------------------------------------------------------------------

@dataclass
class Bundle:
    reports: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)

    def add(self, report: DiagnosticReport, table: tuple | None = None):
        self.reports.append(report)
        if table is not None:
            self.tables[report.name] = table

    @property
    def passed(self) -> bool:
        return all(r.passed is not False for r in self.reports)


def _check(cfg, problem, bundle):
    rep = check_assumptions(problem, seed=cfg.seed)
    bundle.add(DiagnosticReport("assumptions", rep.to_dict(), module="model", anchor="assumptions",
                                passed=rep.passed))


def _proxy(cfg, problem, bundle):
    rows = []
    worst = 0.0
    gsp_ok = True
    for x in cfg.probe_points(problem):
        proxy = FrozenProxy(problem, 0.0, x)
        for gap in (problem.dims.T / 4, problem.dims.T / 2, problem.dims.T):
            g = gsp_diagnostic(proxy, 0.0, gap)
            res = moment_identity_check(proxy, 0.0, gap, x)
            worst = max(worst, float(np.max(res)))
            gsp_ok &= g["passed"]
            rows.append([*x, gap, g["lambda_min"], g["lambda_max"], *np.asarray(res, float)])
    header = [f"x{i + 1}" for i in range(problem.dims.nd)] + ["gap", "lambda_min", "lambda_max"] + \
        [f"identity_{k + 1}" for k in range(5)]
    bundle.add(DiagnosticReport("proxy", {"max_identity_residual": worst, "gsp_passed": gsp_ok, "rows": rows},
                                module="proxy", anchor="proxy", passed=bool(gsp_ok and worst < 1e-5)),
               (header, rows))


def _solve(cfg, problem, bundle, out_dir):
    spec = cfg.grid.spec(problem)
    if cfg.segments > 1:
        res = time_chained_solve(problem, cfg.segments, spec, cfg.tol, cfg.max_iter)
    else:
        res = parametrix_solve(problem, spec, cfg.tol, cfg.max_iter)
    pts = cfg.probe_points(problem)
    vals = res.field.interpolate(0.0, pts)
    if out_dir is not None:
        res.field.to_csv(out_dir / "field.csv")
        res.field.to_binary(out_dir / "field.bin")
    rows = [[*p, v] for p, v in zip(pts, vals)]
    bundle.add(DiagnosticReport("solve", {"iterations": res.iterations, "history": res.history,
                                          "converged": res.converged, "extrapolations": res.extrapolations,
                                          "values": rows, "segments": res.segments},
                                module="solver", anchor="parametrix", passed=res.converged),
               ([f"x{i + 1}" for i in range(problem.dims.nd)] + ["u"], rows))


def _fk(cfg, problem, bundle):
    pts = cfg.probe_points(problem)
    results = fk_estimate_many(problem, 0.0, pts, cfg.mc())
    rows = []
    for p, r in zip(pts, results):
        oracle = None
        if problem.is_linear_gaussian:
            try:
                oracle = gaussian_chain_oracle(problem, 0.0, p)
            except SchauderLabError:
                oracle = None
        rows.append([*p, r.estimate, r.halfwidth, "" if oracle is None else oracle])
    payload = {"estimates": [dict(r.to_dict(), x=list(p)) for p, r in zip(pts, results)], "rows": rows}
    payload.update(results[0].to_dict())  # the first probe point doubles as the headline estimate
    bundle.add(DiagnosticReport("fk", payload, module="feynman_kac", anchor="representation"),
               ([f"x{i + 1}" for i in range(problem.dims.nd)] + ["estimate", "halfwidth", "oracle"], rows))


def _besov(cfg, problem, bundle):
    rep = psi_besov_profile(problem, theta=cfg.theta, mode=cfg.besov_mode)
    rows = [[g, n] for g, n in zip(rep["gaps"], rep["norms"])]
    bundle.add(rep, (["gap", "norm"], rows))
    bundle.add(duality_constant(ThermicConfig(alpha_tilde(2, problem.dims.gamma))))


def _scale(cfg, problem, bundle):
    rows = []
    ok = True
    for lam in cfg.lam:
        r = density_scaling_check(problem, lam, seed=cfg.seed)
        c = scaled_covariance_sensitivity(problem, lam, cfg.c0, seed=cfg.seed)
        ok &= bool(r.passed)
        rows.append([lam, r["max_relative_residual"], c["constant"]])
    bundle.add(DiagnosticReport("scale", {"rows": rows}, module="scaling", anchor="density_correspondence",
                                passed=ok), (["lambda", "density_residual", "covariance_constant"], rows))


def _schauder(cfg, problem, bundle):
    rep = schauder_constant_report(problem, cfg.mollification_levels, cfg.grid, cfg.quad_points, cfg.samples,
                                   cfg.seed, cfg.tol, cfg.max_iter)
    rows = [[r["m"], r["solution_norm"], r["data_norm"], r["ratio"]] for r in rep["rows"]]
    bundle.add(rep, (["m", "solution_norm", "data_norm", "ratio"], rows))


def _sensitivity(cfg, problem, bundle):
    rep = sensitivity_suite(problem, settings=SensitivitySettings(samples=cfg.samples, seed=cfg.seed, c0=cfg.c0))
    rows = [[r["lemma"], r["constant"], r["refined"], r["stable"]] for r in rep["rows"]]
    bundle.add(rep, (["lemma", "constant", "refined", "stable"], rows))


PIPELINES = {
    "check": ("check",),
    "proxy": ("proxy",),
    "solve": ("solve",),
    "fk": ("fk",),
    "besov": ("besov",),
    "scale": ("scale",),
    "schauder": ("schauder",),
    "sensitivity": ("sensitivity",),
    "full": ("check", "solve", "schauder", "sensitivity", "besov"),
}


def run_experiment(cfg: ExperimentConfig, out_dir=None, strict: bool = False) -> tuple[dict, bool]:
    """Run the configured pipeline; write ``report.json`` and CSV tables to ``out_dir``.

    Returns the summary document and the all-pass verdict. ``strict`` turns numerical
    warnings (truncation, runtime) into errors.
    """
    out = Path(out_dir) if out_dir is not None else (Path(cfg.out) if cfg.out else None)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    problem = cfg.build_problem()
    bundle = Bundle()
    with warnings.catch_warnings():
        if strict:
            warnings.simplefilter("error", TruncationWarning)
            warnings.simplefilter("error", RuntimeWarning)
        for step in PIPELINES[cfg.experiment]:
            if step == "solve":
                _solve(cfg, problem, bundle, out)
            else:
                globals()[f"_{step}"](cfg, problem, bundle)
    summary = {
        "config": {k: v for k, v in asdict(cfg).items() if k != "out"},
        "reports": [r.to_dict() for r in bundle.reports],
        "passed": bundle.passed,
        "metadata": {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()), "version": __version__},
    }
    if out is not None:
        (out / "report.json").write_text(dumps_json(summary))
        for name, (header, rows) in sorted(bundle.tables.items()):
            write_csv(out / f"{name}.csv", header, rows)
    return summary, bundle.passed


def strip_metadata(document: dict) -> dict:
    return {k: v for k, v in document.items() if k != "metadata"}
