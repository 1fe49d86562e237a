"""Acceptance suite: one recorded PASS/FAIL line per criterion, listed in the terminal summary."""

import itertools
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from acceptance_log import record
from oampnr import synthesis as syn
from oampnr.cli import cmd_fit, cmd_montecarlo
from oampnr.config import RunProfile, load_profile
from oampnr.correlators import (arm_marginal, first_order_scan, fringe_contrast, g2_classical, g2_multiphoton_grid,
                                g2_visibility, joint_pnr_distribution, scan_oam_map, visibility)
from oampnr.fock import FockEvaluator
from oampnr.source import ModePairGaussian, SourceParams, mean_amplitude, mode_pair_state
from oampnr.special import gaussian_moment_hyp1f1, gaussian_moment_I
from oracles import QuadratureOracle, moment_quad, random_gamma, thermal_law

THETA = math.pi / 4
SHIPPED = Path(__file__).resolve().parents[1] / "profiles" / "paper_fit.json"


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.abs(b)))


def test_01_normalization(paper_fit):
    s = mode_pair_state(0, 0, paper_fit.geometry, paper_fit.source)
    t0 = time.perf_counter()
    probs = FockEvaluator(s, THETA, 20, precision="double").joint_probabilities(20, 20)
    dt = time.perf_counter() - t0
    total = math.fsum(probs.ravel().tolist())
    dist = joint_pnr_distribution(s, THETA, 20, 20)
    ok = total >= 1 - 1e-6 and dist.total >= 1 - 1e-6 and dt <= 600
    assert record(1, "normalization at (0,0)", ok,
                  f"sum P(N,M<=20) = {total:.12f} (tail {1 - total:.2e}), double precision in {dt:.2f} s")


def test_02_thermal_oracle(paper_fit):
    src = SourceParams(mu0=0.0, eta0=paper_fit.source.eta0, lambda_bw=paper_fit.source.lambda_bw,
                       zeta=paper_fit.source.zeta, theta=THETA)
    s = mode_pair_state(0, 0, paper_fit.geometry, src)
    nbar = 2 * s.sigma1 * math.cos(THETA) ** 2
    # arm-1 law from the joint distribution, summed over the other arm to a negligible tail
    joint = FockEvaluator(s, THETA, 60).joint_probabilities(15, 60)
    got = np.array([math.fsum(row) for row in joint.tolist()])
    want = np.array([thermal_law(nbar, n) for n in range(16)])
    err = _rel(got, want)
    g2 = g2_classical(s)
    ok = err <= 1e-9 and g2 == 2.0
    assert record(2, "thermal oracle", ok, f"max rel err P(N<=15) = {err:.1e} (nbar {nbar:.4f}), g2 = {g2!r}")


def test_03_factorized_oracle():
    rng = np.random.default_rng(3)
    worst_p = worst_g = 0.0
    g2s = []
    for _ in range(3):
        mu1, mu2, s1, s2, _eta = random_gamma(rng)
        s = ModePairGaussian.from_moments(mu1, mu2, s1, s2, 0.0)
        dist = joint_pnr_distribution(s, 0.7, 10, 10, tail_tol=None)
        prod = np.outer(arm_marginal(s, 0.7, 1, 10), arm_marginal(s, 0.7, 2, 10))
        keep = prod > 1e-250
        worst_p = max(worst_p, _rel(dist.probs[keep], prod[keep]))
        worst_g = max(worst_g, float(np.max(np.abs(g2_multiphoton_grid(s, 0.7, 6) - 1))))
        g2s.append(g2_classical(s))
    ok = worst_p <= 1e-9 and worst_g <= 1e-9 and all(g == 1.0 for g in g2s)
    assert record(3, "factorized oracle", ok,
                  f"joint vs product rel {worst_p:.1e}, max |g2~ - 1| = {worst_g:.1e}, g2 = {g2s}")


def test_04_quadrature_oracle(random_states):
    worst = 0.0
    for s in random_states:
        q = QuadratureOracle(s.gamma, s.mean_vector, 0.6)
        ev = FockEvaluator(s, 0.6, 5)
        for idx in itertools.product(range(4), repeat=4):
            a, b = ev.element(*idx), q.element(*idx)
            worst = max(worst, abs(a - b) / abs(b))
    assert record(4, "quadrature oracle", worst <= 1e-6,
                  f"max rel err over N,M,K,L<=3 on 3 random states = {worst:.1e}")


def test_05_monte_carlo(paper_fit, tmp_path):
    details, ok = [], True
    for l1, l2 in ((0, 0), (0, 3)):
        p = paper_fit.replace(modes=type(paper_fit.modes)(l1=l1, l2=l2))
        out = tmp_path / f"mc_{l1}_{l2}"
        out.mkdir()
        cmd_montecarlo(p, out)
        rep = json.loads((out / "mc_report.json").read_text())
        ok &= rep["samples"] == 10**6 and rep["tv_ok"] and rep["g2_ok"]
        details.append(f"({l1},{l2}) TV {rep['tv_distance']:.2e} < 3x{rep['tv_aggregate_stderr']:.2e}, "
                       f"g2 {rep['g2_mc']:.4f}+-{rep['g2_mc_stderr']:.4f} vs {rep['g2_analytic']:.4f}")
    assert record(5, "Monte Carlo agreement at 1e6 samples", ok, "; ".join(details))


def test_06_fit_anchor(tmp_path):
    cmd_fit(RunProfile(), tmp_path)
    fitted = load_profile(tmp_path / "paper_fit.json")
    g2 = g2_classical(mode_pair_state(0, 0, fitted.geometry, fitted.source))
    shipped = load_profile(SHIPPED)
    same = fitted.source == shipped.source
    assert record(6, "fit reaches g2 = 1.74", abs(g2 - 1.74) <= 0.05,
                  f"g2(0,0) = {g2:.9f} at lambda {fitted.source.lambda_bw:g}, zeta {fitted.source.zeta:g}; "
                  f"matches shipped profile: {same}")


@pytest.fixture(scope="module")
def scan(paper_fit):
    p = paper_fit
    ls = list(range(-15, 16))
    states = [mode_pair_state(l1, 3, p.geometry, p.source) for l1 in ls]
    cl = np.array([g2_classical(s) for s in states])
    grids = np.array([g2_multiphoton_grid(s, THETA, 8) for s in states])
    g00 = g2_multiphoton_grid(mode_pair_state(0, 0, p.geometry, p.source), THETA, 8)
    return ls, cl, grids, g00


def test_07_interference_argmax(scan):
    ls, cl, grids, g00 = scan
    cl_arg = ls[int(np.argmax(cl))]
    vcl, ccl = g2_visibility(cl), visibility(cl)
    pairs = list(itertools.product(range(9), repeat=2))
    # the g2 - 1 visibility of the classical curve reaches 1 where eta vanishes, so a peak
    # projection must tie it to rounding and also show a strictly larger raw contrast
    hi = [pr for pr in pairs if g00[pr] > 1 and ls[int(np.argmax(grids[:, pr[0], pr[1]]))] == 3
          and g2_visibility(grids[:, pr[0], pr[1]]) >= vcl - 1e-12 and visibility(grids[:, pr[0], pr[1]]) > ccl]
    lo = [pr for pr in pairs if g00[pr] < 1 and ls[int(np.argmax(grids[:, pr[0], pr[1]]))] == -3]
    best = max(hi, key=lambda pr: visibility(grids[:, pr[0], pr[1]]), default=None)
    ok = cl_arg == 3 and bool(hi) and bool(lo)
    bd = (f"{best} vis(g2-1) {g2_visibility(grids[:, best[0], best[1]]):.4f} contrast "
          f"{visibility(grids[:, best[0], best[1]]):.3f}") if best else "none"
    assert record(7, "interference argmax structure", ok,
                  f"classical argmax {cl_arg} (vis(g2-1) {vcl:.4f}, contrast {ccl:.3f}); "
                  f"{len(hi)} bunched projections peak at 3, best {bd}; holes peaking at -3: {lo}")


def test_08_oam_maps(paper_fit):
    p = paper_fit
    ls = list(range(-15, 16))
    maps = {pr: scan_oam_map(p.geometry, p.source, ls, pr).values for pr in ((4, 4), (7, 7), (1, 4), (1, 7))}
    diag = {pr: bool(np.all(np.argmax(maps[pr], axis=1) == np.arange(len(ls)))) for pr in ((4, 4), (7, 7))}
    top = {pr: float(maps[pr].max()) for pr in ((4, 4), (7, 7))}
    holes = {pr: float(np.diag(maps[pr]).max()) for pr in ((1, 4), (1, 7))}
    ok = all(diag.values()) and top[(7, 7)] > top[(4, 4)] and all(v < 1 for v in holes.values())
    assert record(8, "OAM map structure over [-15,15]", ok,
                  f"diagonal peaks {diag}, peak (7,7) {top[(7, 7)]:.3f} > (4,4) {top[(4, 4)]:.3f}, "
                  f"max diagonal of (1,4) {holes[(1, 4)]:.4f} and (1,7) {holes[(1, 7)]:.4f}")


def test_09_first_order(paper_fit):
    ls = list(range(-15, 16))
    fo = first_order_scan(paper_fit.geometry, paper_fit.source, ls, (0, 4, 7))
    p0, p4, p7 = fo.values[:, 1], fo.values[:, 2], fo.values[:, 3]
    i = ls.index(0)
    local_min = p0[i] < p0[i - 1] and p0[i] < p0[i + 1]
    c4, c7 = fringe_contrast(p4), fringe_contrast(p7)
    assert record(9, "first-order structure", local_min and c7 > c4,
                  f"P0 local minimum at l1=0: {local_min}; contrast P7 {c7:.3f} vs P4 {c4:.3f}")


def test_10_special_functions():
    rng = np.random.default_rng(17)
    grid = [(int(rng.integers(0, 21)), float(10 ** rng.uniform(-1, 1)), float(rng.uniform(-5, 5)))
            for _ in range(200)]
    q = max(abs(gaussian_moment_I(n, a, b) / moment_quad(n, a, b) - 1) for n, a, b in grid)
    hgrid = [(n, float(10 ** rng.uniform(-1, 1)), float(rng.uniform(-5, 5))) for n in range(11) for _ in range(10)]
    h = max(abs(gaussian_moment_I(n, a, b) / gaussian_moment_hyp1f1(n, a, b) - 1) for n, a, b in hgrid)
    assert record(10, "special functions", q <= 1e-10 and h <= 1e-8,
                  f"recurrence vs quadrature {q:.1e} on {len(grid)} points, vs 1F1 {h:.1e} on n<=10")


def test_11_synthesis(paper_fit):
    g512 = syn.GridSpec(512, 16.0)
    lags = np.arange(1, 11)
    d = syn.structure_function([syn.kolmogorov_screen(g512, 0.25, i) for i in range(200)], lags)
    slope = float(np.polyfit(np.log(lags), np.log(d), 1)[0])
    g256 = syn.GridSpec(256, 8.0)
    ls = list(range(-10, 11))
    amps = syn.project_frames((syn.seeded_frame(g256, 1.0, 0.25, 0, i) for i in range(1000)), ls)
    ratios = np.array([syn.intensity_ratio(amps[:, k] - amps[:, k].mean()) for k in range(len(ls))])
    inside = np.abs(ratios - 2) <= 0.1
    shape_ls = list(range(-12, 13))
    a = syn.project_frames([syn.synthesize_frame(g512, 1.0, None)], shape_ls, geom=paper_fit.geometry)[0]
    m = np.array([mean_amplitude(l, paper_fit.geometry, SourceParams(mu0=1.0, zeta=0.0)) for l in shape_ls])
    corr = abs(np.vdot(m, a)) / (np.linalg.norm(m) * np.linalg.norm(a))
    ok = abs(slope - 5 / 3) <= 0.15 and bool(inside.all()) and corr >= 0.99
    worst = ls[int(np.argmax(np.abs(ratios - 2)))]
    assert record(11, "synthesis oracle", ok,
                  f"structure slope {slope:.3f}; per-mode <I^2>/<I>^2 within 2+-0.1 for {int(inside.sum())}/"
                  f"{len(ls)} modes (worst l={worst} at {ratios[ls.index(worst)]:.3f}, mode mean "
                  f"{ratios.mean():.3f}); slit shape correlation {corr:.5f}")


def test_12_memo_speedup(paper_fit):
    s = mode_pair_state(0, 3, paper_fit.geometry, paper_fit.source)
    speed = {}
    for n, cap in ((12, 12), (20, 20)):
        times = []
        for memo in (True, False):
            t0 = time.perf_counter()
            FockEvaluator(s, THETA, cap, memo=memo).joint_probabilities(n, n)
            times.append(time.perf_counter() - t0)
        speed[(n, cap)] = (times[1] / times[0], *times)
    ok = all(v[0] >= 5 for v in speed.values())
    assert record(12, "memoization speedup", ok, "; ".join(
        f"{n + 1}x{n + 1} grid at cap {cap}: {v[0]:.1f}x ({v[1]:.2f} s vs {v[2]:.2f} s)"
        for (n, cap), v in speed.items()))
