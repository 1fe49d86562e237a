"""Command-line front end: ``oampnr <subcommand> --profile p.json --out dir``.

Exit codes: 0 success, 2 configuration error, 3 numerical tolerance failure,
4 precision-loss abort.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import synthesis as syn
from .config import RunProfile, dump_profile, load_profile
from .correlators import (TAIL_TOL, arm_marginal, first_order_scan, g2_classical, g2_multiphoton,
                          g2_multiphoton_grid, g2_visibility, joint_pnr_distribution, visibility)
from .errors import ConfigError, OamPnrError
from .fitting import FitRow, fit_profile
from .montecarlo import McConfig, consistency, estimate_g2_classical, sample_joint_pnr
from .output import read_table, require_same_digest, svg_curves, svg_heatmap, write_json, write_table
from .source import covariance, mode_pair_state

log = logging.getLogger("oampnr")


def _pmap(fn: Callable, items: Sequence, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(min(workers, len(items))) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _state(p: RunProfile, l1: int, l2: int):
    return mode_pair_state(l1, l2, p.geometry, p.source)


# jointpnr


def cmd_jointpnr(p: RunProfile, out: Path, fmt: str = "csv", svg: bool = False, workers: int = 1) -> list[Path]:
    st = _state(p, p.modes.l1, p.modes.l2)
    dist = joint_pnr_distribution(st, p.source.theta, p.caps.nmax, p.caps.mmax, tail_tol=TAIL_TOL)
    digest = p.digest()
    rows = [(n, m, dist.probs[n, m]) for n in range(dist.nmax + 1) for m in range(dist.mmax + 1)]
    files = [write_table(out / "joint_pnr", ("N", "M", "probability"), rows, digest, fmt)]
    files.append(write_json(out / "joint_pnr_summary.json", {
        "digest": digest, "l1": st.l1, "l2": st.l2, "theta": p.source.theta, "nmax": dist.nmax, "mmax": dist.mmax,
        "total": dist.total, "tail_mass": dist.tail_mass, "clamped": dist.clamped,
        "g2_classical": g2_classical(st), "moment_g2": dist.moment_g2() if min(dist.mean_counts()) > 0 else None,
    }))
    if svg:
        files.append(svg_heatmap(out / "joint_pnr.svg", dist.probs, list(range(dist.mmax + 1)),
                                 list(range(dist.nmax + 1)), f"P(N,M) at l=({st.l1},{st.l2})", "M", "N"))
    return files


# g2map


def _g2_cell(args):
    p, l1, l2 = args
    return g2_classical(_state(p, l1, l2))


def cmd_g2map(p: RunProfile, out: Path, fmt: str = "csv", svg: bool = False, workers: int = 1) -> list[Path]:
    ls = p.caps.l_range
    cells = [(p, a, b) for a in ls for b in ls]
    vals = np.array(_pmap(_g2_cell, cells, workers)).reshape(len(ls), len(ls))
    rows = [(a, b, vals[i, j]) for i, a in enumerate(ls) for j, b in enumerate(ls)]
    files = [write_table(out / "g2_map", ("l1", "l2", "g2"), rows, p.digest(), fmt)]
    if svg:
        files.append(svg_heatmap(out / "g2_map.svg", vals, ls, ls, "classical g2(l1,l2)", "l2", "l1"))
    return files


# g2tilde


def _g2t_cell(args):
    p, l1, l2, n1, n2 = args
    return g2_multiphoton(_state(p, l1, l2), p.source.theta, n1, n2, p.caps.photon_cap)


def cmd_g2tilde(p: RunProfile, out: Path, fmt: str = "csv", svg: bool = False, workers: int = 1,
                mode: str = "oam") -> list[Path]:
    digest = p.digest()
    if mode == "oam":
        n1, n2 = p.g2tilde.n1, p.g2tilde.n2
        ls = p.caps.l_range
        cells = [(p, a, b, n1, n2) for a in ls for b in ls]
        vals = np.array(_pmap(_g2t_cell, cells, workers)).reshape(len(ls), len(ls))
        rows = [(a, b, vals[i, j]) for i, a in enumerate(ls) for j, b in enumerate(ls)]
        stem = f"g2tilde_oam_n{n1}_{n2}"
        files = [write_table(out / stem, ("l1", "l2", "g2tilde"), rows, digest, fmt)]
        if svg:
            files.append(svg_heatmap(out / f"{stem}.svg", vals, ls, ls, f"g2~({n1},{n2}) over OAM", "l2", "l1",
                                     center=1.0))
        return files
    if mode == "photon":
        l1, l2 = p.modes.l1, p.modes.l2
        nmax = p.caps.n_grid
        vals = g2_multiphoton_grid(_state(p, l1, l2), p.source.theta, nmax, p.caps.photon_cap)
        rows = [(a, b, vals[a, b]) for a in range(nmax + 1) for b in range(nmax + 1)]
        stem = f"g2tilde_photon_l{l1}_{l2}"
        files = [write_table(out / stem, ("n1", "n2", "g2tilde"), rows, digest, fmt)]
        trace = sorted(rows, key=lambda r: (r[0] + r[1], r[0]))
        files.append(write_table(out / f"{stem}_trace", ("n_total", "n1", "n2", "g2tilde"),
                                 [(a + b, a, b, v) for a, b, v in trace], digest, fmt))
        if svg:
            ax = list(range(nmax + 1))
            files.append(svg_heatmap(out / f"{stem}.svg", vals, ax, ax, f"g2~(n1,n2) at l=({l1},{l2})", "n2", "n1",
                                     center=1.0))
        return files
    raise ConfigError(f"unknown g2tilde mode {mode!r}")


# interference


def _scan_row(args):
    p, l1 = args
    st = _state(p, l1, p.interference.l2)
    vals = [g2_classical(st)]
    if p.interference.projections:
        grid_n = max(max(pr) for pr in p.interference.projections)
        grid = g2_multiphoton_grid(st, p.source.theta, grid_n, p.caps.photon_cap)
        vals += [grid[a, b] for a, b in p.interference.projections]
    return vals


def interference_table(p: RunProfile, workers: int = 1) -> tuple[list[int], list[str], np.ndarray]:
    ls = p.caps.l_range
    vals = np.array(_pmap(_scan_row, [(p, l) for l in ls], workers))
    names = ["g2_classical"] + [f"g2tilde_{a}_{b}" for a, b in p.interference.projections]
    return ls, names, vals


def cmd_interference(p: RunProfile, out: Path, fmt: str = "csv", svg: bool = False, workers: int = 1) -> list[Path]:
    digest = p.digest()
    ls, names, vals = interference_table(p, workers)
    files = [write_table(out / "interference", ["l1", *names], [[l, *v] for l, v in zip(ls, vals)], digest, fmt)]
    st00 = _state(p, 0, 0)
    n_need = max([0] + [max(pr) for pr in p.interference.projections])
    g00 = g2_multiphoton_grid(st00, p.source.theta, n_need, p.caps.photon_cap) if n_need else None
    summary = []
    for k, name in enumerate(names):
        col = vals[:, k]
        cls = ""
        if k > 0:
            a, b = p.interference.projections[k - 1]
            cls = "bunched" if g00[a, b] > 1 else "hole"
        # g2 - 1 visibility is only meaningful for curves that never dip below 1
        vis = g2_visibility(col) if col.min() >= 1.0 else ""
        summary.append([name, ls[int(np.argmax(col))], vis, visibility(col), cls])
    files.append(write_table(out / "interference_summary",
                             ("curve", "argmax_l1", "visibility", "contrast", "class_at_00"),
                             summary, digest, fmt))
    fo = first_order_scan(p.geometry, p.source, ls, p.interference.first_order)
    cols = fo.meta["columns"]
    files.append(write_table(out / "first_order", ["l1", *cols], [[l, *r] for l, r in zip(ls, fo.values)],
                             digest, fmt))
    if svg:
        files.append(svg_curves(out / "interference.svg", ls, {n: vals[:, k] for k, n in enumerate(names)},
                                f"scan over l1 at l2={p.interference.l2}", "l1", normalize=True))
        files.append(svg_curves(out / "first_order.svg", ls, {c: fo.values[:, k] for k, c in enumerate(cols)},
                                "first-order scan", "l1", normalize=True))
    return files


# montecarlo


def _analytic_from_table(path: Path, digest: str, nmax: int, mmax: int) -> np.ndarray:
    d, cols, rows = read_table(path)
    require_same_digest(d, digest)
    if list(cols) != ["N", "M", "probability"]:
        raise ConfigError(f"{path}: not a joint distribution table")
    out = np.zeros((nmax + 1, mmax + 1))
    for n, m, v in rows:
        n, m = int(n), int(m)
        if n <= nmax and m <= mmax:
            out[n, m] = float(v)
    return out


def cmd_montecarlo(p: RunProfile, out: Path, fmt: str = "csv", svg: bool = False, workers: int = 1,
                   analytic: Path | None = None) -> list[Path]:
    digest = p.digest()
    st = _state(p, p.modes.l1, p.modes.l2)
    theta = p.source.theta
    nmax, mmax = p.caps.nmax, p.caps.mmax
    if analytic is not None:
        probs = _analytic_from_table(Path(analytic), digest, nmax, mmax)
    else:
        probs = joint_pnr_distribution(st, theta, nmax, mmax, tail_tol=TAIL_TOL).probs
    cap = max(nmax, mmax)
    emp = sample_joint_pnr(st, theta, p.mc, cap=cap, workers=workers)
    g2_cfg = replace(p.mc, seed=p.mc.seed + 1)
    g2_mc = estimate_g2_classical(st, theta, g2_cfg)
    rep = consistency(probs, emp, g2_classical(st), g2_mc)
    se = emp.stderr_map
    rows = [(n, m, int(emp.counts[n, m]), emp.probs[n, m], se[n, m]) for n in range(nmax + 1) for m in range(mmax + 1)]
    files = [write_table(out / "mc_joint", ("N", "M", "count", "probability", "stderr"), rows, digest, fmt)]
    files.append(write_table(out / "mc_consistency", ("N", "M", "analytic", "empirical", "stderr"), rep.rows,
                             digest, fmt))
    files.append(write_json(out / "mc_report.json", {
        "digest": digest, "samples": emp.total, "overflow": emp.overflow, "seed": p.mc.seed,
        "tv_distance": rep.tv, "tv_aggregate_stderr": rep.tv_stderr, "tv_ok": rep.tv_ok,
        "g2_mc": rep.g2_mc, "g2_mc_stderr": rep.g2_mc_stderr, "g2_analytic": rep.g2_analytic, "g2_ok": rep.g2_ok,
        "cells_checked": rep.cells_checked, "cells_inside_3sigma": rep.cells_inside, "coverage": rep.coverage,
        "verdict": "PASS" if rep.passed else "FAIL",
    }))
    if svg:
        diff = emp.probs[: nmax + 1, : mmax + 1] - probs
        files.append(svg_heatmap(out / "mc_residual.svg", diff, list(range(mmax + 1)), list(range(nmax + 1)),
                                 "empirical - analytic P(N,M)", "M", "N", center=0.0))
    return files


# synthesize


def _frame_amps(args):
    s, geom, ls, lo, hi = args
    frames = (syn.seeded_frame(s.grid, s.w0, s.r0, s.seed, i, s.bias, s.subharmonics) for i in range(lo, hi))
    return syn.project_frames(frames, ls, s.p_max, geom, s.w0, s.basis)


def _fit_sigma_spectrum(p: RunProfile, ls: list[int], sig: np.ndarray) -> tuple[float, float, np.ndarray]:
    """Least-squares (eta0, lambda) of the model variance spectrum over a log-lambda grid."""
    from .source import SourceParams

    best = None
    for lam in np.geomspace(5, 2000, 121):
        sp = SourceParams(eta0=1.0, lambda_bw=float(lam))
        m = np.array([covariance(l, l, p.geometry, sp).real for l in ls])
        e0 = float(np.dot(m, sig) / np.dot(m, m))
        rms = float(np.sqrt(np.mean((e0 * m / sig - 1) ** 2)))
        if best is None or rms < best[0]:
            best = (rms, e0, float(lam), e0 * m)
    return best[1], best[2], best[3]


def cmd_synthesize(p: RunProfile, out: Path, fmt: str = "csv", svg: bool = False, workers: int = 1) -> list[Path]:
    s = p.synthesis
    digest = p.digest()
    ls = list(range(-s.l_max, s.l_max + 1))
    step = 50  # frames per task; amplitudes are concatenated in frame order
    chunks = [(s, p.geometry, ls, lo, min(lo + step, s.frames)) for lo in range(0, s.frames, step)]
    amps = np.concatenate(_pmap(_frame_amps, chunks, workers))
    rows = []
    sig = []
    for k, l in enumerate(ls):
        st = syn.statistics_from_amplitudes(amps[:, k], amps[:, k])
        sig.append(st.sigma1)
        rows.append([l, st.mu1.real, st.mu1.imag, st.errors["mu1"], st.sigma1, st.errors["sigma1"],
                     syn.intensity_ratio(amps[:, k] - amps[:, k].mean())])
    sig = np.array(sig)
    eta0, lam, model = _fit_sigma_spectrum(p, ls, sig)
    for r, m in zip(rows, model):
        r.append(m)
    cols = ("l", "mu_re", "mu_im", "mu_stderr", "sigma", "sigma_stderr", "intensity_ratio", "sigma_model")
    files = [write_table(out / "oam_statistics", cols, rows, digest, fmt)]
    # maps from the first few frames (regenerated with the same substreams)
    first = [syn.seeded_frame(s.grid, s.w0, s.r0, s.seed, i, s.bias, s.subharmonics) for i in range(min(4, s.frames))]
    maps = syn.intensity_phase_maps(first, floor=1e-6, plane="far")
    pos, neg = maps.charges(maps.interior())
    syn.write_pgm(out / "intensity.pgm", maps.mean_intensity)
    syn.write_pgm(out / "phase_singularities.pgm", syn.singularity_overlay(maps))
    files += [out / "intensity.pgm", out / "phase_singularities.pgm"]
    idx = np.argwhere(maps.singularities != 0)
    files.append(write_table(out / "singularities", ("row", "col", "charge"),
                             [(int(i), int(j), int(maps.singularities[i, j])) for i, j in idx], digest, fmt))
    rms = float(np.sqrt(np.mean((model / sig - 1) ** 2)))
    files.append(write_json(out / "synthesis_summary.json", {
        "digest": digest, "frames": s.frames, "r0": s.r0, "w0": s.w0, "n_pixels": s.n_pixels, "extent": s.extent,
        "wavelength_nm": syn.WAVELENGTH_NM, "basis": s.basis, "fitted_eta0": eta0, "fitted_lambda": lam,
        "sigma_model_rms": rms, "map_plane": "far", "map_extent": maps.grid.extent,
        "interior_radius": maps.rms_radius(), "singularities_positive": pos, "singularities_negative": neg,
        "singularities_total": int(np.count_nonzero(maps.singularities)),
    }))
    if svg:
        files.append(svg_curves(out / "oam_spectrum.svg", ls, {"sigma": sig, "model": model},
                                "OAM variance spectrum", "l"))
    return files


# fit


def cmd_fit(p: RunProfile, out: Path, fmt: str = "csv", svg: bool = False, workers: int = 1,
            max_scans: int | None = None) -> list[Path]:
    best, rows = fit_profile(p, max_scans)
    files = [write_table(out / "fit_residuals", FitRow.COLUMNS, [r.row() for r in rows], p.digest(), fmt)]
    path = out / "paper_fit.json"
    dump_profile(best, path)
    files.append(path)
    return files


COMMANDS = {
    "jointpnr": cmd_jointpnr,
    "g2map": cmd_g2map,
    "g2tilde": cmd_g2tilde,
    "interference": cmd_interference,
    "montecarlo": cmd_montecarlo,
    "synthesize": cmd_synthesize,
    "fit": cmd_fit,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oampnr", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--profile", type=Path, help="JSON run profile (defaults apply when omitted)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    common.add_argument("--seed", type=int, help="override the Monte Carlo / synthesis seed")
    common.add_argument("--format", choices=("csv", "json"), default="csv", dest="fmt")
    common.add_argument("--svg", action="store_true", help="also render SVG figures")
    common.add_argument("-v", "--verbose", action="store_true")
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "g2tilde":
            sp.add_argument("--mode", choices=("oam", "photon"), default="oam")
            sp.add_argument("--n1", type=int)
            sp.add_argument("--n2", type=int)
        if name in ("g2tilde", "jointpnr", "montecarlo"):
            sp.add_argument("--l1", type=int)
            sp.add_argument("--l2", type=int)
        if name == "interference":
            sp.add_argument("--l2", type=int)
        if name == "montecarlo":
            sp.add_argument("--analytic", type=Path, help="joint_pnr.csv to compare against instead of recomputing")
        if name == "fit":
            sp.add_argument("--max-scans", type=int)
    return ap


def _apply_overrides(p: RunProfile, args) -> RunProfile:
    if args.seed is not None:
        p = p.replace(mc=replace(p.mc, seed=args.seed), synthesis=replace(p.synthesis, seed=args.seed))
    l1 = getattr(args, "l1", None)
    l2 = getattr(args, "l2", None)
    if args.command == "interference":
        if l2 is not None:
            p = p.replace(interference=replace(p.interference, l2=l2))
    elif l1 is not None or l2 is not None:
        p = p.replace(modes=replace(p.modes, l1=p.modes.l1 if l1 is None else l1, l2=p.modes.l2 if l2 is None else l2))
    n1, n2 = getattr(args, "n1", None), getattr(args, "n2", None)
    if n1 is not None or n2 is not None:
        p = p.replace(g2tilde=replace(p.g2tilde, n1=p.g2tilde.n1 if n1 is None else n1,
                                      n2=p.g2tilde.n2 if n2 is None else n2))
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        profile = _apply_overrides(load_profile(args.profile), args)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        kw = {}
        if args.command == "g2tilde":
            kw["mode"] = args.mode
        if args.command == "montecarlo" and args.analytic is not None:
            kw["analytic"] = args.analytic
        if args.command == "fit":
            kw["max_scans"] = args.max_scans
        files = COMMANDS[args.command](profile, out, args.fmt, args.svg, max(1, args.workers), **kw)
    except OamPnrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
