"""Acceptance criteria, one test per criterion; each prints a PASS/FAIL line."""
import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from schauder_lab.besov import psi_besov_profile
from schauder_lab.catalog import make_problem
from schauder_lab.feynman_kac import McConfig, fk_estimate_many, gaussian_chain_oracle
from schauder_lab.lab import GridConfig, chained_consistency, schauder_constant_report
from schauder_lab.proxy import FrozenProxy, density_sup, gsp_diagnostic, moment_identity_check, proxy_density
from schauder_lab.scaling import density_scaling_check, evaluation_residual, rescale_problem
from schauder_lab.sensitivity import sensitivity_suite
from schauder_lab.solver import GridSpec, parametrix_solve

GRID_BUDGET = 0.004  # see scripts/grid_budget.py
PROBES = np.array([[a, b] for a in (-0.5, 0.0, 0.5) for b in (-0.5, 0.0, 0.5)])


def test_c01_gaussian_proxy(l0, verdict):
    start = time.perf_counter()
    mass_err, cov_err = 0.0, 0.0
    x = np.array([0.3, -0.2])
    proxy = FrozenProxy(l0, 0.0, x)
    for delta in (1e-2, 1e-1, 1.0):
        K = proxy.covariance(0.0, delta)
        exact = np.array([[delta, delta**2 / 2], [delta**2 / 2, delta**3 / 3]])
        cov_err = max(cov_err, float(np.max(np.abs(K - exact))))
        # midpoint rule on a whitened box of +-9 standard deviations
        R, c, _, L, _ = proxy.gaussian(0.0, delta)
        z1 = np.linspace(-9, 9, 721)
        dz = z1[1] - z1[0]
        Z = np.stack(np.meshgrid(z1, z1, indexing="ij"), -1).reshape(-1, 2)
        y = R @ x + c + Z @ L.T
        mass = proxy_density(proxy, 0.0, delta, x, y).sum() * dz * dz * abs(np.linalg.det(L))
        mass_err = max(mass_err, abs(mass - 1.0))
    elapsed = time.perf_counter() - start
    ok = mass_err < 1e-6 and cov_err < 1e-8 and elapsed < 5.0
    verdict(1, ok, f"mass err {mass_err:.2e} (<1e-6), cov err {cov_err:.2e} (<1e-8), {elapsed:.2f}s (<5s)")
    assert ok


def test_c02_moment_identities(verdict):
    problems = [make_problem("kolmogorov", {}), make_problem("perturbed_ou", {}), make_problem("kinetic", {})]
    worst = 0.0
    for p in problems:
        x = np.full(p.dims.nd, 0.4)
        proxy = FrozenProxy(p, 0.0, x)
        for gap in (0.05, 0.25, 1.0):
            worst = max(worst, float(np.max(moment_identity_check(proxy, 0.0, gap, x, nodes=20))))
    ok = worst < 1e-5
    verdict(2, ok, f"max identity residual {worst:.2e} (<1e-5) over 3 problems x 3 gaps")
    assert ok


def test_c03_derivative_time_scaling(l0, verdict):
    start = time.perf_counter()
    x = np.array([0.2, -0.1])
    proxy = FrozenProxy(l0, 0.0, x)
    gaps = np.geomspace(1e-3, 1e-1, 5)
    errs = {}
    for theta in [(1, 0), (2, 0), (0, 1), (2, 1)]:
        sups = [density_sup(proxy, 0.0, g, x, theta) for g in gaps]
        slope = np.polyfit(np.log(gaps), np.log(sups), 1)[0]
        expected = -(sum(k * (i + 0.5) for i, k in enumerate(theta)) + 2.0)
        errs[theta] = abs(slope - expected)
    elapsed = time.perf_counter() - start
    ok = max(errs.values()) <= 0.1 and elapsed < 30.0
    detail = ", ".join(f"{t}: {e:.3f}" for t, e in errs.items())
    verdict(3, ok, f"slope errors {detail} (<=0.1), {elapsed:.1f}s (<30s)")
    assert ok


def test_c04_good_scaling(l0, verdict):
    proxy = FrozenProxy(l0, 0.0, np.zeros(2))
    eigs = np.array([gsp_diagnostic(proxy, 0.0, g)["eigenvalues"] for g in (1e-3, 1e-2, 1e-1, 0.5, 1.0)])
    exact = np.sort(np.linalg.eigvalsh(np.array([[1, 0.5], [0.5, 1 / 3]])))
    inside = bool(np.all((eigs >= 1e-2) & (eigs <= 1e2)))
    spread = float(np.max(eigs.max(0) - eigs.min(0)))
    err = float(np.max(np.abs(eigs - exact)))
    ok = inside and spread < 1e-6 and err < 1e-8
    verdict(4, ok, f"eigs {eigs[0].round(4).tolist()}, gap-spread {spread:.1e} (<1e-6), err {err:.1e} (<1e-8)")
    assert ok


def test_c05_solver_exactness(verdict):
    start = time.perf_counter()
    p = make_problem("kolmogorov", {"g": "x2"})
    grid = GridSpec.uniform(p.dims, 3.0, 13, time_points=5)
    res = parametrix_solve(p, grid, tol=1e-8)
    mask = res.field.interior_mask(grid.margin)
    nodes = res.field.nodes()[mask.ravel()]
    oracle = np.array([gaussian_chain_oracle(p, 0.0, x) for x in nodes])
    err = float(np.max(np.abs(res.field.values[0][mask] - oracle)))
    elapsed = time.perf_counter() - start
    ok = res.iterations == 1 and res.history[0] < 1e-8 and err < 1e-4 and elapsed < 60.0
    verdict(5, ok, f"iterations {res.iterations}, residual {res.history[0]:.1e} (<1e-8), "
                   f"closed-form err {err:.1e} (<1e-4), {elapsed:.1f}s (<60s)")
    assert ok


@pytest.mark.slow
def test_c06_oracle_equivalence(verdict):
    p = make_problem("kinetic", {})
    grid = GridSpec.uniform(p.dims, 5.0, 21, time_points=9)
    u = parametrix_solve(p, grid, tol=1e-7).field.interpolate(0.0, PROBES)
    mc = fk_estimate_many(p, 0.0, PROBES, McConfig(paths=100_000, steps=1000, seed=1))
    excess = [abs(ui - r.estimate) - (r.halfwidth + GRID_BUDGET) for ui, r in zip(u, mc)]
    ok = max(excess) <= 0.0
    verdict(6, ok, f"max |u - MC| - (CI + {GRID_BUDGET}) = {max(excess):.4f} (<=0) at 9 probes")
    assert ok


@pytest.mark.slow
def test_c07_besov_decay(verdict):
    rough = psi_besov_profile(make_problem("kinetic_rough", {}), theta=(2, 0))
    linear = psi_besov_profile(make_problem("kolmogorov", {}), theta=(2, 0))
    ok = bool(rough.passed and linear["exact_cancellation"])
    verdict(7, ok, f"slope {rough['slope']:.3f} vs {rough['predicted_slope']:.3f} (+-0.2); "
                   f"linear drift exact zero: {linear['exact_cancellation']}")
    assert ok


@pytest.mark.slow
def test_c08_sensitivity_suite(verdict):
    rep = sensitivity_suite(make_problem("kinetic_rough", {}), samples=16, seed=0)
    rows = {r["lemma"]: r for r in rep["rows"]}
    disc = rows["discontinuity"]
    ok = bool(rep.passed)
    detail = ", ".join(f"{k} {r['constant']:.3g}/{r['refined']:.3g}" for k, r in rows.items())
    verdict(8, ok, f"{detail}; disc slope {disc['slope']:.3f} vs {disc['target_slope']:.3f} (+-0.3)")
    assert ok


def test_c09_scaling_identities(verdict):
    names = ["kolmogorov", "perturbed_ou", "kinetic", "kinetic_rough", "sawtooth"]
    worst, exact = 0.0, 0.0
    pts = np.random.default_rng(0).uniform(-2, 2, (64, 2))
    for name in names:
        p = make_problem(name, {}, T=0.25)
        for lam in (1.0, 0.5, 0.25):
            worst = max(worst, density_scaling_check(p, lam, seed=1)["max_relative_residual"])
        exact = max(exact, evaluation_residual(rescale_problem(p, 1.0).problem, p, pts))
    ok = worst < 1e-6 and exact <= 1e-12
    verdict(9, ok, f"density residual {worst:.1e} (<1e-6), lambda=1 residual {exact:.1e} (<=1e-12)")
    assert ok


@pytest.mark.slow
def test_c10_schauder_stability(verdict):
    spreads = {}
    for name, params in [("kolmogorov", {"g": "sin_x1"}), ("sawtooth", {})]:
        rep = schauder_constant_report(make_problem(name, params), (8, 16, 32))
        spreads[name] = (rep["relative_spread"], rep.passed)
    chain = chained_consistency(make_problem("kolmogorov", {}), 4, GridConfig())
    ok = all(p for _, p in spreads.values()) and chain.passed
    detail = ", ".join(f"{k} spread {s:.1e}" for k, (s, _) in spreads.items())
    verdict(10, ok, f"{detail} (<=5%); N=4 vs N=1 {chain['max_difference']:.1e} (<1e-6)")
    assert ok


def _run_cli(cmd, config, out, threads):
    env = dict(os.environ, SCHAUDER_LAB_THREADS=str(threads))
    subprocess.run([sys.executable, "-m", "schauder_lab.cli", cmd, "--config", str(config), "--out", str(out)],
                   check=False, env=env, capture_output=True)
    doc = json.loads((out / "report.json").read_text())
    doc.pop("metadata")
    csvs = {f.name: f.read_bytes() for f in sorted(out.glob("*.csv"))}
    return json.dumps(doc, sort_keys=True), csvs


@pytest.mark.slow
def test_c11_determinism(tmp_path, verdict):
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"problem": "kinetic", "seed": 7, "mc": {"paths": 4000, "steps": 50},
                                  "points": [[0.0, 0.0], [0.5, -0.5]],
                                  "grid": {"points": 11, "half_width": 3.0, "time_points": 4}}))
    same = {}
    for cmd in ("fk", "solve"):
        runs = [_run_cli(cmd, config, tmp_path / f"{cmd}{k}", k) for k in (1, 8, 1)]
        same[cmd] = all(r == runs[0] for r in runs)
    ok = all(same.values())
    verdict(11, ok, f"byte-identical reports across SCHAUDER_LAB_THREADS in {{1, 8}}: {same}")
    assert ok
