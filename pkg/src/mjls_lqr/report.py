"""Solve/validate pipelines and their machine-readable reports."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .chain import mode_probabilities, validate_generator, visited_states
from .grid import TimeGrid
from .montecarlo import estimate_cost
from .moments import deterministic_cost, initial_moments, propagate_moments
from .riccati import optimal_cost, solve_riccati

SCHEMA_VERSION = "mjls-lqr.report/1"

REPORT_FIELDS = (
    "schema", "problem", "horizon", "method", "num_steps", "step",
    "visited", "unvisited", "absorbing", "Y0", "gains0",
    "cost_analytic", "cost_moment", "cost_mc", "mc_std_error", "mc_ci95",
    "num_paths", "seed", "rho", "delta", "mode_probs", "timing_ms",
)


@dataclass
class Report:
    problem: str
    horizon: float
    method: str
    num_steps: int
    step: float
    visited: list
    unvisited: list
    absorbing: list
    Y0: dict
    gains0: dict
    cost_analytic: float
    mode_probs: list
    cost_moment: float | None = None
    cost_mc: float | None = None
    mc_std_error: float | None = None
    mc_ci95: list | None = None
    num_paths: int | None = None
    seed: int | None = None
    rho: float | None = None
    delta: float | None = None
    timing_ms: dict | None = None
    schema: str = field(default=SCHEMA_VERSION)

    def as_dict(self):
        d = asdict(self)
        return {k: d[k] for k in REPORT_FIELDS}


def resolve_grid(problem, num_steps=None, step=1e-3):
    if num_steps is None:
        return TimeGrid.from_step(problem.horizon, step)
    return TimeGrid(problem.horizon, num_steps)


def run(problem, *, method="rk4", num_steps=None, checkpoints=None, validate=False,
        num_paths=10_000, seed=42, timing=False):
    """Run the analytic pipeline, and with ``validate`` the moment and MC checks."""
    clock = {}
    t0 = time.perf_counter()

    def lap(name):
        nonlocal t0
        now = time.perf_counter()
        clock[name] = round(1e3 * (now - t0), 3)
        t0 = now

    grid = resolve_grid(problem, num_steps)
    Z = visited_states(problem.generator, problem.phi)
    absorbing = validate_generator(problem.generator).absorbing
    lap("visited")
    sol = solve_riccati(problem, grid, method)
    lap("riccati")
    X0 = initial_moments(problem)
    j_star = optimal_cost(sol, X0)
    probs = mode_probabilities(problem.generator, problem.phi, grid)
    lap("cost")

    ts = [problem.horizon] if not checkpoints else list(checkpoints)
    report = Report(
        problem=problem.name,
        horizon=problem.horizon,
        method=method,
        num_steps=grid.num_steps,
        step=grid.step,
        visited=Z.one_based(),
        unvisited=[i + 1 for i in Z.complement],
        absorbing=[i + 1 for i in absorbing],
        Y0={str(i + 1): sol.Y[0, i].tolist() for i in Z},
        gains0={str(i + 1): sol.gains[0, i].tolist() for i in Z},
        cost_analytic=j_star,
        mode_probs=[{"t": float(t), "probs": probs.at(t).tolist()} for t in ts],
    )
    if validate:
        traj = propagate_moments(problem, sol.gains, grid)
        report.cost_moment = deterministic_cost(traj, sol.gains, problem)
        lap("moments")
        est = estimate_cost(problem, sol, num_paths, seed)
        lap("montecarlo")
        report.cost_mc = est.mean
        report.mc_std_error = est.std_error
        report.mc_ci95 = list(est.confidence95)
        report.num_paths = est.num_paths
        report.seed = seed
        if j_star != 0.0:
            report.rho = est.mean / j_star
            report.delta = abs(est.mean - j_star) / abs(j_star)
        else:
            report.rho = None
            report.delta = abs(est.mean)
    if timing:
        report.timing_ms = clock
    return report


def to_json(report):
    return json.dumps(report.as_dict(), indent=2) + "\n"


def to_csv(report):
    """Long format: quantity, mode, row, col, value."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity", "mode", "row", "col", "value"])
    for key in ("Y0", "gains0"):
        for mode, mat in getattr(report, key).items():
            for r, row in enumerate(mat, 1):
                for c, v in enumerate(row, 1):
                    w.writerow([key, mode, r, c, repr(v)])
    for key in ("cost_analytic", "cost_moment", "cost_mc", "mc_std_error", "rho", "delta"):
        v = getattr(report, key)
        if v is not None:
            w.writerow([key, "", "", "", repr(v)])
    for entry in report.mode_probs:
        for i, p in enumerate(entry["probs"], 1):
            w.writerow([f"mode_prob@{entry['t']:g}", i, "", "", repr(p)])
    return buf.getvalue()


def _fmt_matrix(mat, indent="    "):
    return "\n".join(indent + "  ".join(f"{v:12.6f}" for v in row) for row in mat)


def to_text(report):
    out = [
        f"problem      {report.problem or '-'}",
        f"horizon      T = {report.horizon:g}  ({report.method}, {report.num_steps} steps, dt = {report.step:.3g})",
        f"visited      Z = {{{', '.join(map(str, report.visited))}}}",
    ]
    if report.unvisited:
        out.append(f"not visited  {{{', '.join(map(str, report.unvisited))}}}")
    if report.absorbing:
        out.append(f"absorbing    {{{', '.join(map(str, report.absorbing))}}}")
    for mode, mat in report.Y0.items():
        out.append(f"Y_{mode}(0) =")
        out.append(_fmt_matrix(mat))
        out.append(f"L_{mode}(0) =")
        out.append(_fmt_matrix(report.gains0[mode]))
    out.append(f"J* (Riccati)         {report.cost_analytic:.6f}")
    if report.cost_moment is not None:
        out.append(f"J  (moments)         {report.cost_moment:.6f}")
    if report.cost_mc is not None:
        lo, hi = report.mc_ci95
        out.append(
            f"J  (Monte Carlo)     {report.cost_mc:.6f} +/- {report.mc_std_error:.6f}"
            f"  [{lo:.6f}, {hi:.6f}]  ({report.num_paths} paths, seed {report.seed})"
        )
        if report.rho is not None:
            out.append(f"rho = MC/analytic    {report.rho:.2%}")
        out.append(f"delta (rel. error)   {report.delta:.3e}")
    for entry in report.mode_probs:
        probs = "  ".join(f"{p:.4f}" for p in entry["probs"])
        out.append(f"Pr(theta(t) = i), t = {entry['t']:g}:  {probs}")
    if report.timing_ms:
        out.append("timing (ms)  " + ", ".join(f"{k} {v:g}" for k, v in report.timing_ms.items()))
    return "\n".join(out) + "\n"


def format_report(report, fmt):
    return {"json": to_json, "csv": to_csv, "text": to_text}[fmt](report)


def is_finite_report(report):
    vals = [report.cost_analytic, report.cost_moment, report.cost_mc, report.mc_std_error]
    vals += [v for m in report.Y0.values() for row in m for v in row]
    return all(v is None or np.isfinite(v) for v in vals)
