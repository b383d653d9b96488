"""Config-driven experiment runner and verification suites.

Subcommands: run, verify, sweep, entropy, report.  Configs and reports are
JSON, series are CSV, snapshots use the binary format of the grid module.
Outputs are byte-identical for identical configs and seeds (no timestamps),
so golden-file comparisons work.

Exit codes: 0 success / all checks passed, 1 usage or config error (including
failed checks), 2 domain abort (range excursion, convexity or construction
failure).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from itertools import product
from pathlib import Path

import numpy as np

from .diagnostics import (CheckReport, calibrate_residual_constant,
                          choose_entropy_params, contraction_report,
                          entropy_residual_coupled, entropy_residual_diffusion,
                          estimate_ratio_report, morrey_report,
                          reverse_holder_report, sup_norm_report)
from .errors import DomainAbort
from .grid import (Cylinder, FieldState, GridSpec, Trajectory, read_snapshot,
                   vector_norm, write_snapshot)
from .potentials import (build_entropy, certify_window, coupled_decomposition,
                         from_piecewise_poly, get_potential)
from .solver import RunConfig, run, with_resolution


class UsageError(Exception):
    """Bad arguments or malformed configuration; maps to exit code 1."""


# ---------------------------------------------------------------------------
# config documents

def build_grid(doc: dict) -> GridSpec:
    try:
        sizes = tuple(int(s) for s in doc["sizes"])
        return GridSpec(n=len(sizes), sizes=sizes, h=float(doc["h"]),
                        boundary=doc.get("boundary", "periodic"))
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad grid section: {exc}") from exc


def build_potential(doc: dict):
    if "table" in doc:
        t = doc["table"]
        return from_piecewise_poly(t["breakpoints"], t["coeffs"],
                                   r_max=doc.get("r_max", t.get("r_max")),
                                   pid=doc.get("id", "table"))
    try:
        return get_potential(doc["id"], r_max=doc.get("r_max"))
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad potential section: {exc}") from exc


def build_config(doc: dict, seed_override: int | None = None) -> RunConfig:
    try:
        grid = build_grid(doc["grid"])
        pot = build_potential(doc["potential"])
        bv = doc.get("boundary_values")
        return RunConfig(
            grid=grid,
            n_components=int(doc.get("components", 1)),
            potential=pot,
            t_end=float(doc["t_end"]),
            system=doc.get("system", "diffusion"),
            cfl_sigma=float(doc.get("cfl_sigma", 0.9)),
            snapshot_every=int(doc.get("snapshot_every", 1)),
            initial=doc.get("initial", {"kind": "mode"}),
            seed=int(seed_override if seed_override is not None else doc.get("seed", 0)),
            boundary_values=tuple(bv) if bv is not None else None,
            dt_override=doc.get("dt_override"),
            name=doc.get("name", "run"))
    except UsageError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad run config: {exc}") from exc


def _load_json(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid JSON in {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# trajectory persistence

def save_trajectory(traj: Trajectory, outdir: Path) -> dict:
    outdir.mkdir(parents=True, exist_ok=True)
    names = []
    for k, snap in enumerate(traj.snapshots):
        fname = f"snap_{k:06d}.pelb"
        write_snapshot(outdir / fname, snap)
        names.append(fname)
    manifest = {"kind": "run", **traj.meta, "snapshots": names}
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest


def load_trajectory(manifest_path) -> Trajectory:
    mpath = Path(manifest_path)
    manifest = json.loads(mpath.read_text())
    snaps = tuple(read_snapshot(mpath.parent / f) for f in manifest["snapshots"])
    meta = {k: v for k, v in manifest.items() if k not in ("snapshots", "kind")}
    return Trajectory(snapshots=snaps, dt=manifest["dt"], meta=meta)


# ---------------------------------------------------------------------------
# verification checks

def _seeded_points(grid: GridSpec, count: int, seed: int, margin: float = 0.2):
    rng = np.random.default_rng(seed)
    pts = []
    for _ in range(count):
        pts.append(tuple(float(rng.uniform(margin * grid.extent(a),
                                           (1 - margin) * grid.extent(a)))
                         for a in range(grid.n)))
    return pts


def _shrink_ok(pos_coarse: float, pos_fine: float, scale: float) -> bool:
    # identically zero positive parts satisfy the refinement demand vacuously
    floor = 1e-12 * max(1.0, scale)
    return pos_fine <= max(0.5 * pos_coarse, floor)


def _check_contraction(params: dict, seed: int) -> CheckReport:
    base = build_config(params["config"], seed)
    run0 = run(replace(base, initial=params["initial0"], name=base.name + "-a"))
    run1 = run(replace(base, initial=params["initial1"], name=base.name + "-b"))
    rep = contraction_report(run0, run1, certify_window(base.potential),
                             name=params["name"])
    target = params.get("decay_ratio_target")
    if target is not None:
        d = rep.values["d"]
        measured = float(d[-1] / d[0]) if d[0] > 0 else float("nan")
        rtol = params.get("decay_ratio_rtol", 0.02)
        ok = math.isfinite(measured) and abs(measured - target) <= rtol * target
        rep.values["decay_ratio"] = measured
        rep.values["decay_ratio_target"] = target
        if not ok:
            rep.passed = False
            rep.witness = {"decay_ratio": measured, "target": target, "rtol": rtol}
    return rep


def _check_sup_norm(params: dict, seed: int) -> CheckReport:
    traj = run(build_config(params["config"], seed))
    return sup_norm_report(traj, name=params["name"])


def _check_entropy(params: dict, seed: int, coupled: bool) -> CheckReport:
    base = build_config(params["config"], seed)
    if base.snapshot_every != 1:
        raise UsageError("entropy residual checks need snapshot_every = 1")
    sizes = params.get("sizes", [64, 128])
    K = params.get("K")
    if K is None:
        K = calibrate_residual_constant(with_resolution(base, sizes[0]))
    pot = base.potential
    window = certify_window(pot)
    ent = None if coupled else build_entropy(pot)
    cc = coupled_decomposition(pot) if coupled else None
    if coupled:
        pars = choose_entropy_params(cc, base.grid.n, base.n_components)
    per_size = []
    passed = True
    witness = None
    prev_pos = None
    for size in sizes:
        cfg = with_resolution(base, size)
        traj = run(cfg)
        tau = K * (cfg.grid.h ** 2 + traj.dt)
        if coupled:
            rep = entropy_residual_coupled(traj, cc, pars.s, pars.c, tau=tau)
        else:
            rep = entropy_residual_diffusion(traj, pot, ent, window, tau=tau)
        per_size.append({"size": size, **{k: rep.values[k] for k in
                                          ("max_pos", "p99_pos", "max_abs", "h", "dt", "tau")}})
        if not rep.passed:
            passed = False
            witness = witness or rep.witness
        if prev_pos is not None and not _shrink_ok(prev_pos, rep.values["max_pos"],
                                                   rep.values["max_abs"]):
            passed = False
            witness = witness or {"refinement": {"coarse_pos": prev_pos,
                                                 "fine_pos": rep.values["max_pos"]}}
        prev_pos = rep.values["max_pos"]
    values = {"K": K, "per_size": per_size}
    if coupled:
        values.update({"s": pars.s, "c": pars.c})
    return CheckReport(name=params["name"], passed=passed, tolerance={"K": K},
                       values=values, witness=witness)


def _check_morrey(params: dict, seed: int) -> CheckReport:
    cfg = build_config(params["config"], seed)
    traj = run(cfg)
    h = cfg.grid.h
    t0 = params.get("t0", cfg.t_end)
    pts = [(xy, t0) for xy in _seeded_points(cfg.grid, params.get("points", 10),
                                             seed + 1)]
    radii = [m * h for m in params.get("radii_h", [16, 8, 4])]
    return morrey_report(traj, pts, radii, name=params["name"])


def _check_reverse_holder(params: dict, seed: int) -> CheckReport:
    base = build_config(params["config"], seed)
    sizes = params.get("sizes", [128, 256])
    R = params["R"]
    t0 = params.get("t0", base.t_end)
    centers = _seeded_points(with_resolution(base, sizes[0]).grid,
                             params.get("cylinders", 20), seed + 2, margin=0.0)
    cyls = [Cylinder(center=c, t0=t0, R=R) for c in centers]
    rep_coarse = reverse_holder_report(run(with_resolution(base, sizes[0])), cyls,
                                       p=params.get("p", 2.5))
    rep = reverse_holder_report(run(with_resolution(base, sizes[1])), cyls,
                                p=params.get("p", 2.5),
                                reference=rep_coarse.values["max_ratio"],
                                name=params["name"])
    rep.values["max_ratio_coarse"] = rep_coarse.values["max_ratio"]
    rep.values["sizes"] = sizes
    return rep


def _check_estimate_ratios(params: dict, seed: int) -> CheckReport:
    base = build_config(params["config"], seed)
    sizes = params.get("sizes", [128, 256])
    t0 = params["t0"]
    centers = _seeded_points(with_resolution(base, sizes[0]).grid,
                             params.get("cylinders", 3), seed + 3)
    pairs = [(Cylinder(center=c, t0=t0, R=params["r"]),
              Cylinder(center=c, t0=t0, R=params["R"])) for c in centers]
    coarse = estimate_ratio_report(run(with_resolution(base, sizes[0])),
                                   base.potential, pairs)
    rep = estimate_ratio_report(run(with_resolution(base, sizes[1])),
                                base.potential, pairs,
                                reference=coarse.values["maxima"],
                                name=params["name"])
    rep.values["maxima_coarse"] = coarse.values["maxima"]
    rep.values["sizes"] = sizes
    return rep


def _check_tampered_sup(params: dict, seed: int) -> CheckReport:
    """Negative control: inflate the final snapshot, expecting a witnessed failure."""
    traj = run(build_config(params["config"], seed))
    last = traj.snapshots[-1]
    bad = FieldState(grid=last.grid, values=last.values * 1.5, t=last.t,
                     boundary_values=last.boundary_values)
    tampered = Trajectory(snapshots=traj.snapshots[:-1] + (bad,), dt=traj.dt,
                          meta=traj.meta)
    return sup_norm_report(tampered, name=params["name"])


def _check_tampered_contraction(params: dict, seed: int) -> CheckReport:
    """Negative control: anti-diffuse one run mid-way (a flipped-dt step)."""
    from .solver import step_diffusion

    base = build_config(params["config"], seed)
    run0 = run(replace(base, initial=params["initial0"], name=base.name + "-a"))
    run1 = run(replace(base, initial=params["initial1"], name=base.name + "-b"))
    k = len(run1.snapshots) // 2
    snaps = list(run1.snapshots)
    bumped = step_diffusion(snaps[k], base.potential, -40 * run1.dt)
    snaps[k] = FieldState(grid=bumped.grid, values=bumped.values, t=snaps[k].t,
                          boundary_values=bumped.boundary_values)
    tampered = Trajectory(snapshots=tuple(snaps), dt=run1.dt, meta=run1.meta)
    return contraction_report(run0, tampered, certify_window(base.potential),
                              name=params["name"])


_CHECKS = {
    "contraction": _check_contraction,
    "sup-norm": _check_sup_norm,
    "entropy-diffusion": lambda p, s: _check_entropy(p, s, coupled=False),
    "entropy-coupled": lambda p, s: _check_entropy(p, s, coupled=True),
    "morrey": _check_morrey,
    "reverse-holder": _check_reverse_holder,
    "estimate-ratios": _check_estimate_ratios,
    "tampered-sup": _check_tampered_sup,
    "tampered-contraction": _check_tampered_contraction,
}


# ---------------------------------------------------------------------------
# built-in suites

def paper_core_suite(size: int = 128) -> dict:
    """One check per structural property of the flow, cosh potential, given base size."""
    def pgrid(m):
        return {"sizes": [m], "h": 1.0 / m, "boundary": "periodic"}

    def dgrid(m):
        return {"sizes": [m], "h": 1.0 / (m - 1), "boundary": "dirichlet"}

    cosh = {"id": "cosh", "r_max": 1.0}
    quad = {"id": "quadratic", "r_max": 2.0}
    bands = {"kind": "bands", "kmax": 3, "amplitude": 0.5, "seed": 11}
    offset_bands = {"kind": "bands", "kmax": 3, "amplitude": 0.17, "seed": 11,
                    "offset": [0.8]}
    return {
        "name": "paper-core",
        "seed": 11,
        "checks": [
            {"name": "contraction-cosh", "kind": "contraction",
             "config": {"grid": dgrid(size), "components": 1, "potential": cosh,
                        "t_end": 0.05, "snapshot_every": 25, "name": "contraction-cosh"},
             "initial0": {"kind": "mode", "k": [1], "amplitude": 0.5},
             "initial1": {"kind": "bands", "kmax": 3, "amplitude": 0.4, "seed": 7}},
            {"name": "contraction-heat-rate", "kind": "contraction",
             "config": {"grid": dgrid(size), "components": 1, "potential": quad,
                        "t_end": 0.05, "snapshot_every": 25, "name": "contraction-heat"},
             "initial0": {"kind": "mode", "k": [1], "amplitude": 0.6},
             "initial1": {"kind": "mode", "k": [1], "amplitude": 0.3},
             "decay_ratio_target": math.exp(-math.pi ** 2 * 0.05),
             "decay_ratio_rtol": 0.02},
            {"name": "boundedness-bump", "kind": "sup-norm",
             "config": {"grid": pgrid(size), "components": 2, "potential": cosh,
                        "t_end": 0.01, "snapshot_every": 8, "name": "sup-bump",
                        "initial": {"kind": "bump", "amplitude": 0.8, "width": 0.1}}},
            {"name": "boundedness-bands", "kind": "sup-norm",
             "config": {"grid": pgrid(size), "components": 2, "potential": cosh,
                        "t_end": 0.01, "snapshot_every": 8, "name": "sup-bands",
                        "initial": bands}},
            {"name": "entropy-diffusion", "kind": "entropy-diffusion",
             "sizes": [size // 2, size],
             "config": {"grid": pgrid(size), "components": 1, "potential": cosh,
                        "t_end": 0.01, "snapshot_every": 1, "name": "entropy-diff",
                        "initial": bands}},
            {"name": "entropy-coupled", "kind": "entropy-coupled",
             "sizes": [size // 2, size],
             "config": {"grid": pgrid(size), "components": 1, "potential": cosh,
                        "system": "coupled", "t_end": 0.01, "snapshot_every": 1,
                        "name": "entropy-coup", "initial": offset_bands}},
            {"name": "morrey", "kind": "morrey", "points": 10,
             "config": {"grid": pgrid(size), "components": 1, "potential": cosh,
                        "t_end": 0.02, "snapshot_every": 8, "name": "morrey",
                        "initial": bands}},
            {"name": "reverse-holder", "kind": "reverse-holder",
             "sizes": [size, 2 * size], "R": 0.032, "cylinders": 20,
             "config": {"grid": pgrid(size), "components": 1, "potential": cosh,
                        "t_end": 0.02, "snapshot_every": 8, "name": "rev-holder",
                        "initial": bands}},
            {"name": "estimate-ratios", "kind": "estimate-ratios",
             "sizes": [size, 2 * size], "r": 0.05, "R": 0.1, "t0": 0.018,
             "cylinders": 3,
             "config": {"grid": pgrid(size), "components": 1, "potential": cosh,
                        "t_end": 0.02, "snapshot_every": 8, "name": "est-ratios",
                        "initial": bands}},
        ],
    }


def negative_control_suite(size: int = 64) -> dict:
    """Injected violations; every check must fail and carry a witness."""
    cosh = {"id": "cosh", "r_max": 1.0}
    grid = {"sizes": [size], "h": 1.0 / size, "boundary": "periodic"}
    dgrid = {"sizes": [size], "h": 1.0 / (size - 1), "boundary": "dirichlet"}
    return {
        "name": "negative-control",
        "seed": 5,
        "expect_failures": True,
        "checks": [
            {"name": "injected-sup-growth", "kind": "tampered-sup",
             "config": {"grid": grid, "components": 1, "potential": cosh,
                        "t_end": 0.005, "snapshot_every": 4, "name": "neg-sup",
                        "initial": {"kind": "bands", "kmax": 2, "amplitude": 0.5,
                                    "seed": 3}}},
            {"name": "injected-contraction-growth", "kind": "tampered-contraction",
             "config": {"grid": dgrid, "components": 1, "potential": cosh,
                        "t_end": 0.02, "snapshot_every": 10, "name": "neg-contr"},
             "initial0": {"kind": "mode", "k": [1], "amplitude": 0.5},
             "initial1": {"kind": "mode", "k": [2], "amplitude": 0.4}},
        ],
    }


_BUILTIN_SUITES = {
    "paper-core": paper_core_suite,
    "negative-control": negative_control_suite,
}


# ---------------------------------------------------------------------------
# commands

def cmd_run(args) -> int:
    doc = _load_json(args.config)
    cfg = build_config(doc, args.seed)
    traj = run(cfg)
    outdir = Path(args.out) / cfg.name
    save_trajectory(traj, outdir)
    print(f"wrote {len(traj.snapshots)} snapshots to {outdir}")
    return 0


def _write_series_csv(path: Path, report: CheckReport) -> bool:
    values = report.values
    series = None
    if "d" in values and "times" in values:
        series = ("t,d", zip(values["times"], values["d"]))
    elif "sup" in values and "times" in values:
        series = ("t,sup,bound", zip(values["times"], values["sup"], values["bound"]))
    elif "profiles" in values:
        rows = []
        for prof in values["profiles"]:
            for R, v in zip(prof["radii"], prof["values"]):
                rows.append((prof["t0"], R, v))
        series = ("t0,R,quotient", iter(rows))
    if series is None:
        return False
    header, rows = series
    tol = report.tolerance if isinstance(report.tolerance, (int, float)) else ""
    with open(path, "w", newline="") as fh:
        fh.write(f"check,{report.name},config_hash,{report.provenance},tolerance,{tol}\n")
        fh.write(header + "\n")
        w = csv.writer(fh)
        for row in rows:
            w.writerow([f"{x:.17g}" if isinstance(x, (float, np.floating)) else x
                        for x in row])
    return True


def run_suite(suite: dict, outdir: Path, seed_override: int | None = None) -> list[CheckReport]:
    names = [c.get("name") for c in suite.get("checks", [])]
    if len(names) != len(set(names)) or None in names:
        raise UsageError("check names must be present and unique")
    seed = int(seed_override if seed_override is not None else suite.get("seed", 0))
    outdir.mkdir(parents=True, exist_ok=True)
    reports = []
    files = []
    for check in suite.get("checks", []):
        kind = check.get("kind")
        if kind not in _CHECKS:
            raise UsageError(f"unknown check kind '{kind}' in '{check['name']}'")
        try:
            rep = _CHECKS[kind](check, seed)
        except Exception as exc:  # crashes are recorded as failures, suite continues
            rep = CheckReport(name=check["name"], passed=False,
                              values={"error": f"{type(exc).__name__}: {exc}"})
        rpath = outdir / f"{rep.name}.report.json"
        rpath.write_text(json.dumps(rep.to_json(), sort_keys=True, indent=2) + "\n")
        files.append(rpath.name)
        spath = outdir / f"{rep.name}.series.csv"
        if _write_series_csv(spath, rep):
            files.append(spath.name)
        reports.append(rep)
    with open(outdir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "passed", "tolerance", "provenance"])
        for rep in reports:
            w.writerow([rep.name, rep.passed,
                        json.dumps(rep.tolerance) if rep.tolerance is not None else "",
                        rep.provenance])
    files.append("summary.csv")
    (outdir / "suite_manifest.json").write_text(json.dumps(
        {"kind": "suite", "name": suite.get("name", "suite"), "seed": seed,
         "files": sorted(files),
         "passed": all(r.passed for r in reports)}, sort_keys=True, indent=2) + "\n")
    return reports


def cmd_verify(args) -> int:
    if args.suite in _BUILTIN_SUITES:
        suite = _BUILTIN_SUITES[args.suite]()
    else:
        suite = _load_json(args.suite)
    outdir = Path(args.out) / suite.get("name", "suite")
    reports = run_suite(suite, outdir, args.seed)
    for rep in reports:
        status = "PASS" if rep.passed else "FAIL"
        print(f"{status} {rep.name}")
        if not rep.passed and rep.witness:
            print(f"     witness: {json.dumps(rep.to_json()['witness'])}")
    all_pass = all(r.passed for r in reports)
    print(f"{sum(r.passed for r in reports)}/{len(reports)} checks passed")
    return 0 if all_pass else 1


# ---------------------------------------------------------------------------
# sweeps

def _sweep_cells(doc: dict) -> list[dict]:
    axes = doc.get("axes", {})
    order = [k for k in ("resolution", "potential", "seed") if k in axes]
    unknown = set(axes) - set(order)
    if unknown:
        raise UsageError(f"unknown sweep axes: {sorted(unknown)}")
    combos = list(product(*[axes[k] for k in order])) if order else [()]
    cells = []
    for combo in combos:
        cell = dict(zip(order, combo))
        pot = cell.get("potential", doc["base"].get("potential", {}).get("id", "pot"))
        label = "-".join(filter(None, [
            str(pot),
            f"n{cell['resolution']}" if "resolution" in cell else "",
            f"s{cell['seed']}" if "seed" in cell else ""])) or "cell"
        cells.append({"label": label, **cell})
    labels = [c["label"] for c in cells]
    if len(labels) != len(set(labels)):
        dup = sorted({x for x in labels if labels.count(x) > 1})
        raise UsageError(f"duplicate cell labels: {dup}")
    return cells


def _run_cell(base_doc: dict, cell: dict, outdir: Path) -> dict:
    doc = json.loads(json.dumps(base_doc))
    if "potential" in cell:
        doc["potential"]["id"] = cell["potential"]
    if "seed" in cell:
        doc["seed"] = cell["seed"]
    doc["name"] = cell["label"]
    cfg = build_config(doc)
    if "resolution" in cell:
        cfg = with_resolution(cfg, int(cell["resolution"]))
    traj = run(cfg)
    save_trajectory(traj, outdir / cell["label"])
    row = {
        "label": cell["label"],
        "potential": cfg.potential.id,
        "size": cfg.grid.sizes[0],
        "seed": cfg.seed,
        "config_hash": traj.meta["config_hash"],
        "terminal_sup": float(vector_norm(traj.final.values).max()),
        "resid_pos_max": "",
        "resid_abs_max": "",
        "morrey_16h": "", "morrey_8h": "", "morrey_4h": "",
        "error": "",
    }
    pot = cfg.potential
    if cfg.snapshot_every == 1 and cfg.system == "diffusion":
        rep = entropy_residual_diffusion(traj, pot, build_entropy(pot),
                                         certify_window(pot))
        row["resid_pos_max"] = rep.values["max_pos"]
        row["resid_abs_max"] = rep.values["max_abs"]
    try:
        h = cfg.grid.h
        center = tuple(0.5 * cfg.grid.extent(a) for a in range(cfg.grid.n))
        prof = dict()
        from .diagnostics import morrey_profile
        for R, v in morrey_profile(traj, (center, cfg.t_end), [16 * h, 8 * h, 4 * h]):
            prof[round(R / h)] = v
        row["morrey_16h"], row["morrey_8h"], row["morrey_4h"] = \
            prof.get(16, ""), prof.get(8, ""), prof.get(4, "")
    except ValueError:
        pass  # cylinder does not fit this cell's box; leave blank
    return row


def cmd_sweep(args) -> int:
    doc = _load_json(args.sweep)
    if "base" not in doc:
        raise UsageError("sweep file needs a 'base' run config")
    cells = _sweep_cells(doc)
    outdir = Path(args.out) / doc.get("name", "sweep")
    outdir.mkdir(parents=True, exist_ok=True)
    workers = args.threads if args.threads > 0 else None
    rows = [None] * len(cells)

    def work(i_cell):
        i, cell = i_cell
        try:
            return i, _run_cell(doc["base"], cell, outdir)
        except Exception as exc:
            return i, {"label": cell["label"], "potential": "", "size": "",
                       "seed": "", "config_hash": "", "terminal_sup": "",
                       "resid_pos_max": "", "resid_abs_max": "",
                       "morrey_16h": "", "morrey_8h": "", "morrey_4h": "",
                       "error": f"{type(exc).__name__}: {exc}"}

    with ThreadPoolExecutor(max_workers=workers) as ex:
        for i, row in ex.map(work, enumerate(cells)):
            rows[i] = row

    fields = ["label", "potential", "size", "seed", "config_hash", "terminal_sup",
              "resid_pos_max", "resid_abs_max", "morrey_16h", "morrey_8h",
              "morrey_4h", "error"]
    with open(outdir / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in rows:
            w.writerow(row)
    failures = [r for r in rows if r["error"]]
    (outdir / "sweep_manifest.json").write_text(json.dumps(
        {"kind": "sweep", "name": doc.get("name", "sweep"),
         "cells": [c["label"] for c in cells], "files": ["sweep.csv"],
         "failed": [r["label"] for r in failures]}, sort_keys=True, indent=2) + "\n")
    for r in failures:
        print(f"cell {r['label']} failed: {r['error']}", file=sys.stderr)
    print(f"wrote {outdir / 'sweep.csv'} ({len(cells)} cells, {len(failures)} failed)")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# entropy tables

def cmd_entropy(args) -> int:
    try:
        if args.table:
            tdoc = _load_json(args.table)
            pot = from_piecewise_poly(tdoc["breakpoints"], tdoc["coeffs"],
                                      r_max=args.r_max or tdoc.get("r_max"),
                                      pid=tdoc.get("id", "table"))
        else:
            pot = get_potential(args.potential, r_max=args.r_max)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    window = certify_window(pot)
    ent = build_entropy(pot)
    cc = coupled_decomposition(pot)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    zs = np.linspace(0.0, ent.z_max, 257)
    rs_of_z = np.linspace(0.0, pot.r_max, 257)
    resid = np.abs(np.asarray(ent.gamma(np.asarray(pot.phi(rs_of_z), dtype=float)))
                   - 0.5 * np.square(np.asarray(pot.phi1(rs_of_z), dtype=float)))
    with open(outdir / f"{pot.id}_entropy.csv", "w", newline="") as fh:
        fh.write(f"potential,{pot.id},lam,{window.lam:.17g},Lam,{window.Lam:.17g},"
                 f"identity_tol,{ent.tol:.3e}\n")
        fh.write("z,gamma,identity_residual_at_matching_r\n")
        w = csv.writer(fh)
        for z, rr in zip(zs, resid):
            w.writerow([f"{z:.17g}", f"{float(ent.gamma(z)):.17g}", f"{rr:.3e}"])

    rs = np.linspace(0.0, pot.r_max, 257)
    a_s = np.asarray(cc.a(rs), dtype=float)
    H_s = np.asarray(cc.H_profile(rs), dtype=float)
    dH = np.asarray(cc.dH_profile(rs), dtype=float)
    d2H = np.gradient(dH, rs)
    with open(outdir / f"{pot.id}_decomposition.csv", "w", newline="") as fh:
        fh.write(f"potential,{pot.id},sup_Hzz,{cc.bounds['sup_Hzz']:.17g}\n")
        fh.write("r,a,H,sign_H2\n")
        w = csv.writer(fh)
        for r, av, hv, sv in zip(rs, a_s, H_s, np.sign(np.round(d2H, 12))):
            w.writerow([f"{r:.17g}", f"{av:.17g}", f"{hv:.17g}", int(sv)])

    tang = np.where(rs > 0, dH / np.maximum(rs, 1e-300), d2H[0])
    convex = bool(min(d2H.min(), tang.min()) >= -1e-10)
    if cc.bounds["sup_Hzz"] == 0.0:
        convexity = "trivially (H = 0)"
    else:
        convexity = "yes" if convex else "no"
    print(f"potential {pot.id}: window lam={window.lam:.12g} Lam={window.Lam:.12g} "
          f"on [0, {pot.r_max}]")
    print(f"entropy identity residual: {ent.tol:.3e}")
    print(f"H convex on range: {convexity}")
    print(f"tables written to {outdir}")
    return 0


# ---------------------------------------------------------------------------
# report rendering

def cmd_report(args) -> int:
    root = Path(args.directory)
    if not root.exists():
        raise UsageError(f"directory not found: {args.directory}")
    rows = []
    for mpath in sorted(root.rglob("manifest.json")):
        m = json.loads(mpath.read_text())
        rows.append({"path": str(mpath.relative_to(root)), "kind": m.get("kind", "run"),
                     "name": m.get("name", ""), "config_hash": m.get("config_hash", ""),
                     "passed": "", "detail": f"dt={m.get('dt')} steps={m.get('steps')}"})
    for rpath in sorted(root.rglob("*.report.json")):
        r = json.loads(rpath.read_text())
        rows.append({"path": str(rpath.relative_to(root)), "kind": "check",
                     "name": r.get("name", ""), "config_hash": r.get("provenance", ""),
                     "passed": r.get("passed", ""), "detail": ""})
    out = root / "report_summary.csv"
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["path", "kind", "name", "config_hash",
                                           "passed", "detail"])
        w.writeheader()
        for row in rows:
            w.writerow(row)
    print(f"wrote {out} ({len(rows)} entries)")
    return 0


# ---------------------------------------------------------------------------
# entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    common.add_argument("--threads", type=int, default=0,
                        help="worker threads for sweeps (0 = all cores)")

    parser = _Parser(prog="pelab",
                     description="diffusion-system laboratory: runs, checks, sweeps")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[common],
                           help="integrate one configuration")
    p_run.add_argument("config", help="path to a run config JSON")

    p_verify = sub.add_parser("verify", parents=[common],
                              help="run a verification suite")
    p_verify.add_argument("suite",
                          help=f"suite JSON path or one of {sorted(_BUILTIN_SUITES)}")

    p_sweep = sub.add_parser("sweep", parents=[common],
                             help="run a parameter sweep")
    p_sweep.add_argument("sweep", help="path to a sweep JSON")

    p_ent = sub.add_parser("entropy", parents=[common],
                           help="certify a potential and export tables")
    p_ent.add_argument("potential", nargs="?", default="cosh",
                       help="built-in potential id")
    p_ent.add_argument("--r-max", type=float, default=None, dest="r_max")
    p_ent.add_argument("--table", default=None,
                       help="piecewise-polynomial potential JSON instead of an id")

    p_rep = sub.add_parser("report", parents=[common],
                           help="summarize manifests under a directory")
    p_rep.add_argument("directory")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {"run": cmd_run, "verify": cmd_verify, "sweep": cmd_sweep,
                   "entropy": cmd_entropy, "report": cmd_report}[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DomainAbort as exc:
        print(f"domain abort: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
