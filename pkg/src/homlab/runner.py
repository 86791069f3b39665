"""Run configured experiments and write their CSV/JSON results."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .integrand import Integrand, growth_check
from .nonlocal_lab import CONSTANTS, TwoPhaseField, convergence_study
from .properties import property_suite, random_sym
from .solver import (CG_RTOL, GRAD_TOL, SUBADD_TOL, elastic_spring_family, f_hom_estimate,
                     rigid_spring_family)
from .structures import Rectangle, TileGrid
from .tensors import RigidMotion

log = logging.getLogger(__name__)


def fmt(x) -> str:
    """17 significant digits, scientific notation."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".16e")


@dataclass
class ResultBundle:
    kind: str
    tables: dict = field(default_factory=dict)     # name -> (header, rows)
    summary: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    flagged: int = 0

    @property
    def exit_code(self) -> int:
        return 0 if self.flagged == 0 else 1

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, (header, rows) in self.tables.items():
            path = out / f"{name}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                for row in rows:
                    w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
            written.append(path)
        path = out / "summary.json"
        payload = {"kind": self.kind, "flagged": self.flagged, "summary": self.summary,
                   "provenance": self.provenance}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
        written.append(path)
        return written


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def _family(structure: dict):
    if structure["kind"] == "rigid_spring":
        return rigid_spring_family(int(structure.get("n", 2)))
    return elastic_spring_family(int(structure.get("m", 4)), bool(structure.get("interface", True)))


def _dim(structure: dict) -> int:
    return int(structure.get("n", 2)) if structure["kind"] == "rigid_spring" else 2


def sample_matrices(cfg: ExperimentConfig, seed: int | None = None) -> list[np.ndarray]:
    n = _dim(cfg.structure)
    a_cfg = cfg.A
    mats = [np.asarray(m, dtype=float) for m in a_cfg.get("matrices", [])]
    for m in mats:
        if m.shape != (n, n) or not np.allclose(m, m.T):
            raise ValueError(f"A matrices must be symmetric {n}x{n}")
    count = int(a_cfg.get("count", 0))
    if count:
        s = seed if seed is not None else a_cfg.get("seed", cfg.seed)
        rng = np.random.default_rng(s)
        mats += list(random_sym(rng, n, count))
    return mats


def _provenance(cfg: ExperimentConfig, t0: float, **extra) -> dict:
    return {"config_hash": cfg.digest(), "version": __version__,
            "wall_time": time.perf_counter() - t0, **extra}


def _solve_kw(cfg: ExperimentConfig) -> dict:
    tol = cfg.tolerances
    return {"rtol": tol.get("cg_rtol", CG_RTOL), "gtol": tol.get("grad_tol", GRAD_TOL)}


def run_homogenize(cfg: ExperimentConfig, threads: int = 1, seed: int | None = None) -> ResultBundle:
    t0 = time.perf_counter()
    family = _family(cfg.structure)
    integrand = Integrand.from_dict(cfg.integrand)
    mats = sample_matrices(cfg, seed)
    n = _dim(cfg.structure)
    tol = cfg.tolerances.get("subadditivity", SUBADD_TOL)
    skw = _solve_kw(cfg)
    # strain systems depend only on k: build once, share read-only
    from .solver import CellProblem
    cache = {k: CellProblem(family(k), integrand, np.zeros((n, n))) for k in cfg.ks}

    def task(A):
        return f_hom_estimate(family, integrand, A, cfg.ks, tol=tol, cache=cache, **skw)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        estimates = list(pool.map(task, mats))

    idx = [(i, j) for i in range(n) for j in range(i, n)]
    a_cols = [f"A{i + 1}{j + 1}" for i, j in idx]
    rows, est_rows, flagged = [], [], 0
    for a_id, est in enumerate(estimates):
        a_vals = [est.A[i, j] for i, j in idx]
        for k, g, rep in zip(est.ks, est.g, est.reports):
            rows.append([a_id, *a_vals, k, g, rep.residual, rep.iterations,
                         rep.converged, not rep.converged])
        dec = [est.decrements.get(f"{a}->{b}", math.nan) for a, b in zip(est.ks, est.ks[1:])]
        est_rows.append([a_id, *a_vals, est.estimate, est.subadditive,
                         min(dec) if dec else math.nan, est.flagged])
        flagged += int(est.flagged)
    header = ["a_id", *a_cols, "k", "g_k", "residual", "iterations", "converged", "flagged"]
    est_header = ["a_id", *a_cols, "f_hom_upper", "subadditive", "min_doubling_decrement",
                  "flagged"]
    summary = {"n_matrices": len(mats), "ks": cfg.ks, "structure": cfg.structure,
               "integrand": integrand.to_dict(), "flagged": flagged}
    return ResultBundle("homogenize", {"homogenize": (header, rows),
                                       "f_hom": (est_header, est_rows)},
                        summary, _provenance(cfg, t0, seed=seed), flagged)


def _motion(d: dict | None) -> RigidMotion:
    d = d or {}
    return RigidMotion.from_axial(d.get("a", [0.0] * 3), d.get("b", [0.0] * 3))


def build_field(cfg: ExperimentConfig) -> TwoPhaseField:
    nl = cfg.nonlocal_
    omega = Rectangle.from_list(nl.get("omega", [0.0, 1.0, 0.0, 1.0]))
    grid = TileGrid(omega, float(nl.get("eta", 1.0)))
    u1 = _motion(nl.get("u1"))
    u2 = nl.get("u2", {})
    base = _motion(u2)
    slope = np.asarray(u2.get("b_slope", np.zeros((3, 2))), dtype=float)

    def fn(center):
        return base + RigidMotion.from_axial([0.0] * 3, slope @ center)

    return TwoPhaseField.from_function(u1, grid, fn)


def run_nonlocal(cfg: ExperimentConfig, threads: int = 1, seed: int | None = None) -> ResultBundle:
    t0 = time.perf_counter()
    nl = cfg.nonlocal_
    fld = build_field(cfg)
    gamma = float(nl.get("gamma", 2.0))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        study = convergence_study(fld, nl["eps"], gamma, int(nl.get("quad_nodes", 64)),
                                  map_fn=pool.map)
    rows, flagged = [], 0
    for r in study.rows:
        bad = not math.isfinite(r["energy"])
        flagged += int(bad)
        rows.append([r["epsilon"], r["energy"], r["limit"], r["rel_error"], r["count"], bad])
    summary = {"gamma": gamma, "slope": study.slope, "intercept": study.intercept,
               "constants": CONSTANTS.to_dict(), "omega": fld.grid.omega.to_list(),
               "eta": fld.grid.eta}
    header = ["epsilon", "energy", "limit", "rel_error", "count", "flagged"]
    return ResultBundle("nonlocal", {"convergence": (header, rows)}, summary,
                        _provenance(cfg, t0), flagged)


def run_properties(cfg: ExperimentConfig, threads: int = 1, seed: int | None = None) -> ResultBundle:
    t0 = time.perf_counter()
    seed = cfg.seed if seed is None else seed
    opts = cfg.properties
    family = _family(cfg.structure)
    integrand = Integrand.from_dict(cfg.integrand)
    growth = growth_check(integrand, int(opts.get("growth_samples", 1000)), seed,
                          n=integrand.n or _dim(cfg.structure))
    rows = [["growth", growth.passed, min(growth.lower_margin, growth.upper_margin), 0.0]]
    rep = property_suite(family, integrand, seed, k=int(opts.get("k", 1)),
                         n_samples=int(opts.get("samples", 10)),
                         n_sphere=int(opts.get("sphere_samples", 200)),
                         gauge_trials=int(opts.get("gauge_trials", 100)))
    for r in rep.results:
        rows.append([r.name, r.passed, r.worst, r.tolerance])
    flagged = sum(1 for r in rows if not r[1])
    summary = {"passed": flagged == 0, "structure": cfg.structure,
               "integrand": integrand.to_dict(),
               "growth": {"min_lower_ratio": growth.min_lower_ratio,
                          "max_upper_ratio": growth.max_upper_ratio}}
    return ResultBundle("properties", {"properties": (["property", "passed", "worst", "tolerance"],
                                                      rows)},
                        summary, _provenance(cfg, t0, seed=seed), flagged)


RUNNERS = {"homogenize": run_homogenize, "nonlocal": run_nonlocal,
           "properties": run_properties}


def run(cfg: ExperimentConfig, threads: int = 1, seed: int | None = None) -> ResultBundle:
    log.info("running %s (config %s)", cfg.kind, cfg.digest()[:12])
    return RUNNERS[cfg.kind](cfg, threads=threads, seed=seed)
