"""Analysis drivers behind the command line: single runs, p-sweeps and adaptive cycles."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .benchmarks import Monitor, Problem, get_benchmark
from .config import RunConfig, parse_load, parse_monitor
from .element import Load
from .kinematics import Material
from .model import ShellModel
from .shellgeom import read_mesh
from .solver import (
    ArcConfig, NewtonConfig, Trace, arc_length, error_indicator, monitored_displacements,
    newton_solve, p_adapt, solve_linear_problem,
)
from .vtk import write_vtk

log = logging.getLogger(__name__)

# initial arc length per benchmark, in units of the first predictor
DEFAULT_DS0 = {"SAP": 1.0, "HS": 1.0, "POC": 1.0, "PC": 1.0}
FALLBACK_DS0 = 0.05
MAX_ORDER = 8


@dataclass
class RunResult:
    model: ShellModel
    problem: Problem
    U: np.ndarray
    trace: Trace
    summary: dict
    out_dir: Path


def build_problem(cfg: RunConfig) -> Problem:
    """Benchmark or mesh-file problem described by ``cfg``."""
    if cfg.benchmark:
        prob = get_benchmark(cfg.benchmark, **cfg.bench_params)
        if cfg.E is not None or cfg.nu is not None:
            mat = Material(cfg.E if cfg.E is not None else prob.material.young,
                           cfg.nu if cfg.nu is not None else prob.material.poisson)
            prob = replace(prob, material=mat)
        return prob
    mesh = read_mesh(cfg.mesh)
    loads = []
    for spec in cfg.loads.values():
        kind, set_name, value = parse_load(spec)
        loads.append(Load(kind, None if set_name in ("*", "all") else set_name, value))
    monitors = {}
    for name, spec in cfg.monitors.items():
        node, direction = parse_monitor(spec)
        if not 0 <= node < mesh.n_nodes:
            raise ValueError(f"monitor {name!r} references node {node}, mesh has {mesh.n_nodes}")
        monitors[name] = Monitor(node, direction)
    bcs = list(cfg.bcs.items())
    return Problem(Path(cfg.mesh).stem, mesh, Material(cfg.E, cfg.nu), bcs, loads, monitors,
                   target=1.0, nonlinear=cfg.kind in ("newton", "arclength"))


def make_model(problem: Problem, cfg: RunConfig, face_orders=None) -> ShellModel:
    orders = cfg.face if face_orders is None else face_orders
    return ShellModel(problem.mesh, problem.material, orders, cfg.thick_v, cfg.thick_w,
                      problem.bcs)


def _out(cfg: RunConfig, out_dir) -> Path:
    path = Path(out_dir if out_dir is not None else cfg.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _monitor_value(model, U, monitor: Monitor) -> float:
    return float(model.node_displacement(U, monitor.node) @ np.asarray(monitor.direction, float))


def _write_summary(path: Path, items: dict):
    lines = [f"{k} = {v}" for k, v in items.items()]
    path.write_text("\n".join(lines) + "\n")


def run_analysis(cfg: RunConfig, out_dir=None) -> RunResult:
    """Linear, load-stepped Newton or arc-length analysis with artifacts.

    Writes ``trace.csv``, ``mesh_<step>.vtk`` every ``vtk_every`` steps
    (and at the last step), ``summary.txt`` and the effective ``config.ini``.
    """
    if cfg.kind not in ("linear", "newton", "arclength"):
        raise ValueError(f"run_analysis handles linear/newton/arclength, not {cfg.kind!r}")
    out = _out(cfg, out_dir)
    (out / "config.ini").write_text(cfg.to_ini())
    t0 = time.perf_counter()
    prob = build_problem(cfg)
    model = make_model(prob, cfg)
    target = cfg.target if cfg.target is not None else prob.target
    lam_target = target / prob.target
    fhat = model.load_vector(prob.loads)

    def snapshot(step, U, last=False):
        if last or (cfg.vtk_every and step % cfg.vtk_every == 0):
            write_vtk(out / f"mesh_{step}.vtk", model, U, refine=cfg.refine,
                      title=f"{prob.name} step {step}")

    if cfg.kind == "linear":
        trace = Trace(prob.monitors, prob.target)
        U1, _ = solve_linear_problem(model, prob.loads)
        U = lam_target * U1
        trace.record(0, 0.0, monitored_displacements(model, 0 * U, prob.monitors), 0)
        trace.record(1, lam_target, monitored_displacements(model, U, prob.monitors), 1)
        snapshot(1, U, last=True)
    elif cfg.kind == "newton":
        trace = Trace(prob.monitors, prob.target)
        ncfg = NewtonConfig(symmetrize=cfg.symmetrize)
        q = np.zeros(model.n_free)
        trace.record(0, 0.0, monitored_displacements(model, model.expand(q), prob.monitors), 0)
        for k in range(1, cfg.steps + 1):
            lam = lam_target * k / cfg.steps
            q, nlog = newton_solve(model, q, lam * fhat[model.free], ncfg)
            U = model.expand(q)
            trace.record(k, lam, monitored_displacements(model, U, prob.monitors), nlog.iterations)
            snapshot(k, U, last=k == cfg.steps)
    else:
        ds0 = cfg.ds0 or DEFAULT_DS0.get(prob.name, FALLBACK_DS0)
        acfg = ArcConfig(ds0=ds0, max_steps=cfg.max_steps, lam_target=lam_target,
                         fail_at_steps=tuple(cfg.fail_at_steps),
                         newton=NewtonConfig(rtol=1e-8, max_iter=12, symmetrize=cfg.symmetrize))
        U, trace = arc_length(model, fhat, acfg, prob.monitors, prob.target,
                              callback=lambda s, U, lam: snapshot(s, U))
        last = trace.rows[-1][0]
        if not (out / f"mesh_{last}.vtk").exists():
            snapshot(last, U, last=True)
    trace.write_csv(out / "trace.csv")
    elapsed = time.perf_counter() - t0
    summary = {
        "problem": prob.name,
        "analysis": cfg.kind,
        "face_order": cfg.face,
        "thick_order_v": cfg.thick_v,
        "thick_order_w": cfg.thick_w,
        "dofs": model.n_dofs,
        "free_dofs": model.n_free,
        "steps": len(trace) - 1,
        "final_lambda": repr(float(trace.rows[-1][1])),
        "final_load": repr(float(trace.rows[-1][2])),
        "step_cuts": trace.cuts,
    }
    for name, mon in prob.monitors.items():
        d = model.node_displacement(U, mon.node)
        summary[f"{name}"] = repr(_monitor_value(model, U, mon))
        summary[f"{name}_xyz"] = " ".join(repr(float(x)) for x in d)
    summary["elapsed_s"] = f"{elapsed:.2f}"
    _write_summary(out / "summary.txt", summary)
    log.info("%s %s finished: %s", prob.name, cfg.kind, summary)
    return RunResult(model, prob, U, trace, summary, out)


def energy_error(energies) -> np.ndarray:
    """``sqrt(|U_ref - U_p| / |U_ref|)`` with the last entry as reference."""
    e = np.asarray(energies, float)
    return np.sqrt(np.abs(e[-1] - e) / abs(e[-1]))


def convergence_study(cfg: RunConfig, out_dir=None) -> list:
    """Uniform face-order sweep on a linear problem; writes ``convergence.csv``.

    Rows are dicts with ``order, dofs, monitored, energy, energy_error``;
    the energy is ``f . u / 2`` and the error is measured against the
    richest run of the sweep.
    """
    out = _out(cfg, out_dir)
    (out / "config.ini").write_text(cfg.to_ini())
    prob = build_problem(cfg)
    mon = prob.monitors[prob.primary_monitor] if prob.monitors else None
    rows = []
    for p in range(cfg.min_order, cfg.max_order + 1):
        model = make_model(prob, cfg, p)
        U, f = solve_linear_problem(model, prob.loads)
        rows.append({"order": p, "dofs": model.n_dofs,
                     "monitored": _monitor_value(model, U, mon) if mon else math.nan,
                     "energy": 0.5 * float(f @ U)})
        log.info("order %d: %d dofs, energy %.10g", p, model.n_dofs, rows[-1]["energy"])
    for row, err in zip(rows, energy_error([r["energy"] for r in rows])):
        row["energy_error"] = float(err)
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, ["order", "dofs", "monitored", "energy", "energy_error"],
                           lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return rows


def adapt_study(cfg: RunConfig, out_dir=None) -> list:
    """Adaptive p-refinement cycles on a linear problem.

    Starting from uniform order ``cfg.face``, each cycle solves, evaluates
    the element indicator, writes ``adapt_<cycle>.vtk`` with ``indicator``
    and ``face_order`` cell data, then raises the order of the worst third.
    Returns one dict per cycle and writes ``adapt.csv``.
    """
    out = _out(cfg, out_dir)
    (out / "config.ini").write_text(cfg.to_ini())
    prob = build_problem(cfg)
    mon = prob.monitors[prob.primary_monitor] if prob.monitors else None
    orders = np.full(prob.mesh.n_tris, cfg.face, dtype=np.int64)
    rows = []
    for cycle in range(cfg.cycles):
        model = make_model(prob, cfg, orders)
        U, f = solve_linear_problem(model, prob.loads)
        eta = error_indicator(model, U, prob.loads)
        rows.append({"cycle": cycle, "dofs": model.n_dofs,
                     "min_order": int(orders.min()), "max_order": int(orders.max()),
                     "indicator": float(eta.sum()),
                     "monitored": _monitor_value(model, U, mon) if mon else math.nan,
                     "energy": 0.5 * float(f @ U),
                     "orders": orders.copy(), "element_indicator": eta})
        write_vtk(out / f"adapt_{cycle}.vtk", model, U,
                  cell_fields={"indicator": eta}, refine=cfg.refine,
                  title=f"{prob.name} adaptive cycle {cycle}")
        log.info("cycle %d: %d dofs, indicator %.6g", cycle, model.n_dofs, eta.sum())
        orders = p_adapt(orders, eta, cap=MAX_ORDER)
    cols = ["cycle", "dofs", "min_order", "max_order", "indicator", "monitored", "energy"]
    with open(out / "adapt.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
    return rows
