"""Command-line entry point and artifact emission (CSV table, convergence
plot, VTK fields, indicator dumps).

Usage:

    amfem --problem example1 --theta-a 0.5 --theta-b 0.5 --kappa 0.8 \
          --out results --emit csv,svg,vtk

A plain key=value config file can be given as a positional argument; command
line flags override file values.
"""

from __future__ import annotations

import argparse
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .adaptivity import AdaptParams, LevelRecord, adapt_loop
from .estimator import EstimatorReport
from .mesh import Mesh, write_vtk
from .problems import make_problem
from .solver import MixedSolution

__all__ = [
    "RunConfig",
    "parse_config",
    "emit_table",
    "read_table",
    "emit_convergence_plot",
    "emit_vtk",
    "emit_indicators",
    "fit_slope",
    "main",
]

_EMIT_CHOICES = ("csv", "svg", "vtk", "indicators")

_FLAG_KEYS = {
    "problem": str,
    "theta_a": float,
    "theta_b": float,
    "kappa": float,
    "strategy": str,
    "max_ndof": int,
    "max_levels": int,
    "alpha": float,
    "beta": float,
    "out": str,
    "emit": str,
    "quad_degree": int,
    "solver_tol": float,
}


@dataclass(frozen=True)
class RunConfig:
    problem: str
    params: AdaptParams
    out: str
    emit: frozenset
    quad_degree: int
    solver_tol: float

    def describe(self) -> str:
        p = self.params
        return (
            f"problem={self.problem} theta_a={p.theta_a!r} theta_b={p.theta_b!r} "
            f"kappa={p.kappa!r} strategy={p.strategy} max_ndof={p.max_ndof} "
            f"max_levels={p.max_levels} alpha={p.alpha!r} beta={p.beta!r} "
            f"quad_degree={self.quad_degree} solver_tol={self.solver_tol!r} "
            f"emit={','.join(sorted(self.emit))}"
        )


def _read_config_file(path) -> dict:
    opts = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _FLAG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            opts[key] = _FLAG_KEYS[key](val)
    return opts


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="amfem",
        description="Adaptive mixed finite element solver (RT0/P0 via Crouzeix-Raviart).",
    )
    ap.add_argument("config", nargs="?", help="optional key=value config file")
    ap.add_argument("--problem", help="example1 | example2 | example3 | path to a problem config")
    ap.add_argument("--theta-a", type=float, dest="theta_a", help="edge bulk fraction in (0,1)")
    ap.add_argument("--theta-b", type=float, dest="theta_b", help="volume bulk fraction in (0,1)")
    ap.add_argument("--kappa", type=float, help="case-selection threshold (> 0)")
    ap.add_argument("--strategy", choices=("separate", "collective", "uniform"))
    ap.add_argument("--max-ndof", type=int, dest="max_ndof")
    ap.add_argument("--max-levels", type=int, dest="max_levels")
    ap.add_argument("--alpha", type=float, help="monitor weight for the squared error")
    ap.add_argument("--beta", type=float, help="monitor weight for the squared volume estimator")
    ap.add_argument("--out", help="output directory")
    ap.add_argument(
        "--emit",
        action="append",
        help="comma-separated subset of csv,svg,vtk,indicators (repeatable)",
    )
    ap.add_argument(
        "--quad-degree",
        type=int,
        dest="quad_degree",
        help="data quadrature degree: 1, 2 or 5; values above 5 use a composite degree-5 rule",
    )
    ap.add_argument("--solver-tol", type=float, dest="solver_tol")
    return ap


def parse_config(argv: Optional[Sequence[str]] = None) -> RunConfig:
    """Resolve flags and the optional config file into a RunConfig.

    Precedence: defaults < config file < command line.
    """
    ns = _build_parser().parse_args(argv)
    opts = {
        "problem": "example1",
        "theta_a": 0.5,
        "theta_b": 0.5,
        "kappa": 1.0,
        "strategy": "separate",
        "max_ndof": 50_000,
        "max_levels": 40,
        "alpha": 1.0,
        "beta": 1.0,
        "out": "out",
        "emit": "csv",
        "quad_degree": 5,
        "solver_tol": 1e-10,
    }
    if ns.config:
        opts.update(_read_config_file(ns.config))
    for key in _FLAG_KEYS:
        if key == "emit":
            continue
        val = getattr(ns, key)
        if val is not None:
            opts[key] = val
    if ns.emit:
        opts["emit"] = ",".join(ns.emit)

    emit = frozenset(s for s in opts["emit"].replace(" ", "").split(",") if s)
    bad = emit - set(_EMIT_CHOICES)
    if bad:
        raise ValueError(f"unknown emit targets {sorted(bad)}; allowed: {_EMIT_CHOICES}")
    qd = opts["quad_degree"]
    if qd not in (1, 2, 5) and qd <= 5:
        raise ValueError(f"quad_degree must be 1, 2, 5 or > 5, got {qd}")
    if opts["solver_tol"] <= 0:
        raise ValueError(f"solver_tol must be positive, got {opts['solver_tol']}")

    params = AdaptParams(
        theta_a=opts["theta_a"],
        theta_b=opts["theta_b"],
        kappa=opts["kappa"],
        strategy=opts["strategy"],
        max_ndof=opts["max_ndof"],
        max_levels=opts["max_levels"],
        alpha=opts["alpha"],
        beta=opts["beta"],
    )
    return RunConfig(
        problem=opts["problem"],
        params=params,
        out=opts["out"],
        emit=emit,
        quad_degree=qd,
        solver_tol=opts["solver_tol"],
    )


def quad_settings(quad_degree: int):
    """(degree, subdiv) for the data quadrature: degrees above 5 become a
    composite degree-5 rule on ceil(d/5)^2 congruent subtriangles."""
    if quad_degree in (1, 2, 5):
        return quad_degree, 1
    return 5, math.ceil(quad_degree / 5)


# ---------------------------------------------------------------------------
# table emission
# ---------------------------------------------------------------------------

_HEADER = "level,ndof,err_u,err_p,err_p_energy,eta,mu,case,marked,triangles,seconds"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def emit_table(records: Sequence[LevelRecord], path, config_line: str = ""):
    """Write the convergence history as CSV (full float precision)."""
    if not records:
        raise ValueError("no records to write")
    with open(path, "w") as fh:
        if config_line:
            fh.write(f"# {config_line}\n")
        fh.write(_HEADER + "\n")
        for r in records:
            fh.write(
                ",".join(
                    [
                        str(r.level),
                        str(r.ndof),
                        _fmt(r.err_u),
                        _fmt(r.err_p),
                        _fmt(r.err_p_energy),
                        _fmt(r.eta),
                        _fmt(r.mu),
                        r.case,
                        str(r.marked),
                        str(r.triangles),
                        _fmt(r.seconds),
                    ]
                )
                + "\n"
            )


def read_table(path) -> list[LevelRecord]:
    """Parse a CSV written by :func:`emit_table`."""
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("level,"):
                continue
            parts = line.split(",")
            records.append(
                LevelRecord(
                    level=int(parts[0]),
                    ndof=int(parts[1]),
                    err_u=float(parts[2]) if parts[2] else None,
                    err_p=float(parts[3]) if parts[3] else None,
                    err_p_energy=float(parts[4]) if parts[4] else None,
                    eta=float(parts[5]),
                    mu=float(parts[6]),
                    case=parts[7],
                    marked=int(parts[8]),
                    triangles=int(parts[9]),
                    seconds=float(parts[10]),
                )
            )
    return records


# ---------------------------------------------------------------------------
# convergence plot
# ---------------------------------------------------------------------------


def fit_slope(ndof: Sequence[float], values: Sequence[float], tail: bool = True) -> float:
    """Least-squares slope of log(values) against log(ndof).

    With ``tail`` the fit uses the final half of the levels, which avoids
    pre-asymptotic pollution.
    """
    n = np.asarray(ndof, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = (n > 0) & (v > 0)
    n, v = n[keep], v[keep]
    if len(n) < 2:
        raise ValueError("need at least two positive data points to fit a slope")
    if tail and len(n) > 2:
        start = len(n) // 2
        n, v = n[start:], v[start:]
    return float(np.polyfit(np.log(n), np.log(v), 1)[0])


def emit_convergence_plot(records: Sequence[LevelRecord], path, reference_slopes=(-0.5,)):
    """Log-log plot of errors and estimators against Ndof, saved as a
    self-contained SVG; fitted slopes are printed in the legend."""
    if len(records) < 2:
        raise ValueError("need at least two levels to plot convergence")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ndof = np.array([r.ndof for r in records], dtype=float)
    series = {
        "err_u": np.array([r.err_u if r.err_u is not None else np.nan for r in records]),
        "err_p": np.array([r.err_p if r.err_p is not None else np.nan for r in records]),
        "eta": np.array([r.eta for r in records]),
        "mu": np.array([r.mu for r in records]),
    }
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    slopes = {}
    anchors = []
    for name, vals in series.items():
        good = np.isfinite(vals) & (vals > 0)
        if good.sum() < 2:
            continue
        slope = fit_slope(ndof[good], vals[good])
        slopes[name] = slope
        anchors.append(vals[good][0])
        ax.loglog(ndof[good], vals[good], marker="o", ms=3.5, label=f"{name} (slope {slope:.3f})")
    for s in reference_slopes if anchors else ():
        guide = max(anchors) * (ndof / ndof[0]) ** s
        ax.loglog(ndof, guide, "k--", lw=0.8, label=f"Ndof^{s:g}")
    ax.set_xlabel("Ndof")
    ax.set_ylabel("error / estimator")
    ax.grid(True, which="both", lw=0.3, alpha=0.5)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return slopes


# ---------------------------------------------------------------------------
# VTK / indicator emission
# ---------------------------------------------------------------------------


def emit_vtk(mesh: Mesh, sol: MixedSolution, path):
    """Legacy-VTK export of the mesh with cell data u_h and p_h(mid(T))."""
    p_mid = sol.flux_at(mesh, np.arange(mesh.num_triangles), mesh.tri_centroid)
    write_vtk(mesh, path, cell_scalars={"u_h": sol.u}, cell_vectors={"p_h_mid": p_mid})


def emit_indicators(report: EstimatorReport, path):
    """Per-entity indicator dump: edge rows carry eta^2, element rows carry
    the three volume parts."""
    with open(path, "w") as fh:
        fh.write("kind,id,eta_sq,osc_sq,div_sq,flux_sq\n")
        for e, v in enumerate(report.eta_sq_edges):
            fh.write(f"edge,{e},{float(v)!r},,,\n")
        for t, (osc, dv, fx) in enumerate(report.mu_sq_parts):
            fh.write(f"element,{t},,{float(osc)!r},{float(dv)!r},{float(fx)!r}\n")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def main(argv: Optional[Sequence[str]] = None) -> int:
    config = parse_config(argv)
    problem = make_problem(config.problem)
    degree, subdiv = quad_settings(config.quad_degree)

    final = {}

    def keep_last(state):
        final["state"] = state

    records = adapt_loop(
        problem,
        config.params,
        on_level=keep_last,
        solver_tol=config.solver_tol,
        f_degree=degree,
        f_subdiv=subdiv,
    )

    os.makedirs(config.out, exist_ok=True)
    stem = os.path.join(config.out, problem.name.replace(":", "_").replace("/", "_"))
    wrote = []
    if "csv" in config.emit:
        emit_table(records, stem + "_table.csv", config_line=config.describe())
        wrote.append(stem + "_table.csv")
    if "svg" in config.emit and len(records) >= 2:
        refs = (-0.5, -0.25) if config.params.strategy == "uniform" else (-0.5,)
        emit_convergence_plot(records, stem + "_convergence.svg", reference_slopes=refs)
        wrote.append(stem + "_convergence.svg")
    if "vtk" in config.emit:
        state = final["state"]
        emit_vtk(state.mesh, state.sol, stem + "_solution.vtk")
        wrote.append(stem + "_solution.vtk")
    if "indicators" in config.emit:
        emit_indicators(final["state"].report, stem + "_indicators.csv")
        wrote.append(stem + "_indicators.csv")

    for r in records:
        err = f"err_u={r.err_u:.4e} err_p={r.err_p:.4e} " if r.err_u is not None else ""
        print(
            f"level {r.level:2d}  ndof {r.ndof:6d}  {err}"
            f"eta={r.eta:.4e} mu={r.mu:.4e}  case {r.case:10s} marked {r.marked}"
        )
    for path in wrote:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
