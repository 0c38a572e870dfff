"""Run orchestration and bit-stable file outputs.

All floats are written as 17-significant-digit decimals so dumps round-trip
exactly and outputs diff cleanly; files are written atomically (temp file
plus rename).
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .config import ManufactureSpec, MeshGeometrySpec, RunConfig
from .continuity import PathResult, PathStatus, run_path
from .errors import ConfigError, ParseError
from .geometry import green_constant
from .linear_analysis import (assemble_L, smallest_eigenvalue,
                              uniqueness_probe, weitzenbock_check)
from .manufacture import harmonic_target, manufacture_background
from .system import CoupledState, make_state

_F = "%.17g"


def _atomic_write(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def path_csv_text(result: PathResult, k: int) -> str:
    """Fixed-order CSV of the monitor trail."""
    cols = (["t", "newton_iters", "residual_sup", "residual_l2"]
            + [f"sup_phi_{i + 1}" for i in range(k)]
            + [f"inf_phi_{i + 1}" for i in range(k)]
            + ["u_max", "lambda", "jensen_gap", "jensen_bound", "min_eig_L",
               "dt"])
    lines = [",".join(cols)]
    for t, _state, rec in result.accepted:
        row = ([_F % t, str(rec.newton_iters), _F % rec.residual_sup,
                _F % rec.residual_l2]
               + [_F % v for v in rec.sup_phi]
               + [_F % v for v in rec.inf_phi]
               + [_F % rec.u_max, _F % rec.lam, _F % rec.jensen_gap,
                  _F % rec.jensen_bound, _F % rec.min_eig, _F % rec.dt])
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def save_solution(path, state: CoupledState, dim: int) -> None:
    """Dump a state: header `CKE v1 N k n t sigma`, then N rows of k values."""
    k, n_nodes = state.phis.shape
    header = f"CKE v1 {n_nodes} {k} {dim} {_F % state.t} {state.sigma}"
    rows = [" ".join(_F % v for v in state.phis[:, p])
            for p in range(n_nodes)]
    _atomic_write(path, header + "\n" + "\n".join(rows) + "\n")


def load_solution(path) -> tuple[CoupledState, int]:
    """Read a solution dump; returns (state, complex dimension)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    head = lines[0].split()
    if len(head) != 7 or head[0] != "CKE" or head[1] != "v1":
        raise ParseError(f"{path}: not a CKE v1 solution dump")
    n_nodes, k, dim = int(head[2]), int(head[3]), int(head[4])
    t, sigma = float(head[5]), int(head[6])
    if len(lines) != 1 + n_nodes:
        raise ParseError(f"{path}: expected {n_nodes} rows")
    phis = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
    if phis.shape != (n_nodes, k):
        raise ParseError(f"{path}: expected {k} values per row")
    return make_state(t, phis.T, sigma), dim


def write_background(path, f: np.ndarray) -> None:
    """Per-vertex densities, one column per equation."""
    rows = [" ".join(_F % v for v in f[:, p]) for p in range(f.shape[1])]
    _atomic_write(path, "\n".join(rows) + "\n")


def _status_exit_code(result: PathResult) -> int:
    return 0 if result.status is PathStatus.REACHED_T_MAX else 2


def run(cfg: RunConfig) -> tuple[int, PathResult]:
    """Execute the continuity path and write path.csv + solution.dat."""
    geom, bg = cfg.build()
    result = run_path(geom, bg, cfg.path, cfg.monitors)
    os.makedirs(cfg.output_dir, exist_ok=True)
    _atomic_write(os.path.join(cfg.output_dir, "path.csv"),
                  path_csv_text(result, bg.k))
    if result.accepted:
        save_solution(os.path.join(cfg.output_dir, "solution.dat"),
                      result.final_state, geom.dim)
    return _status_exit_code(result), result


def verify(cfg: RunConfig) -> tuple[int, dict]:
    """Run the path, then probe the final state.

    Probes: uniqueness at the configured magnitude/seeds, the smallest
    eigenvalue of the openness operator, and (complex dimension 1) the
    Bochner-inequality margins.  Exit 0 requires the path to finish and
    every uniqueness probe to pass.
    """
    geom, bg = cfg.build()
    result = run_path(geom, bg, cfg.path, cfg.monitors)
    report: dict = {"status": result.status.value,
                    "final_t": result.status_t}
    code = _status_exit_code(result)

    if result.accepted:
        final = result.final_state
        probes = []
        for seed in cfg.uniqueness.seeds:
            probe = uniqueness_probe(geom, bg, final,
                                     cfg.uniqueness.magnitude, seed,
                                     cfg.path)
            probes.append(probe)
            if not probe.passed:
                code = max(code, 2)
        report["uniqueness"] = probes

        eig, _vec = smallest_eigenvalue(assemble_L(geom, bg, final))
        report["min_eig_L"] = eig
        if geom.dim == 1 and cfg.weitzenbock.enabled:
            margins = weitzenbock_check(geom, bg, final,
                                        cfg.weitzenbock.samples)
            report["weitzenbock_margins"] = margins

    os.makedirs(cfg.output_dir, exist_ok=True)
    lines = [f"status: {report['status']}",
             f"final_t: {_F % report['final_t']}"]
    if "uniqueness" in report:
        for seed, probe in zip(cfg.uniqueness.seeds, report["uniqueness"]):
            line = (f"uniqueness seed {seed}: distance {_F % probe.distance} "
                    f"pass {probe.passed}")
            if probe.detail:
                line += f" ({probe.detail})"
            lines.append(line)
        lines.append(f"min_eig_L: {_F % report['min_eig_L']}")
    if "weitzenbock_margins" in report:
        margins = report["weitzenbock_margins"]
        lines.append("weitzenbock_min_margin: " + _F % margins.min())
    _atomic_write(os.path.join(cfg.output_dir, "verify_report.txt"),
                  "\n".join(lines) + "\n")
    return code, report


def manufacture(cfg: RunConfig) -> tuple[int, dict]:
    """Emit a manufactured background plus its exact target state.

    Writes background.dat (loadable through f_spec.file) and target.dat
    (solution-dump format) for regression use.
    """
    spec = cfg.manufacture
    if spec is None:
        raise ConfigError("manufacture: section required for this command")
    if not isinstance(cfg.geometry, MeshGeometrySpec):
        raise ConfigError("manufacture: requires a mesh geometry")
    geom = cfg.build_geometry()
    target = np.array([harmonic_target(geom.points, terms)
                       for terms in spec.targets])
    bg, state = manufacture_background(geom, target, spec.t_star, cfg.sigma,
                                       np.array(spec.constants))
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_background(os.path.join(cfg.output_dir, "background.dat"), bg.f)
    save_solution(os.path.join(cfg.output_dir, "target.dat"), state, geom.dim)
    return 0, {"background": bg, "target": state}


def green(cfg: RunConfig) -> tuple[int, float]:
    """Compute the Green constant of the configured geometry."""
    geom, _bg = cfg.build()
    value = green_constant(geom, cfg.monitors.green_samples)
    return 0, value
