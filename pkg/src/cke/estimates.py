"""A priori estimate quantities recorded as monitors along the path."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (BackgroundSplit, DiscreteGeometry, integrate, mean,
                       trace_wrt_theta)
from .system import CoupledState, to_paper_gauge
from . import linear_analysis


@dataclass(frozen=True)
class MonitorRecord:
    """Per-step estimate quantities of an accepted state."""

    t: float
    dt: float
    newton_iters: int
    backtracks: int
    residual_sup: float
    residual_l2: float
    sup_phi: np.ndarray        # (k,) in reporting gauge
    inf_phi: np.ndarray        # (k,)
    paper_gauge: bool          # False when t_1 = 0 (internal gauge shown)
    u_max: float
    lam: float
    jensen_gap: float
    jensen_bound: float
    jensen_pass: bool
    min_eig: float             # nan when the spectrum monitor is off


def c0_monitor(geom: DiscreteGeometry, bg: BackgroundSplit,
               state: CoupledState) -> tuple[np.ndarray, np.ndarray, bool]:
    """Per-equation (sup, inf) of the potentials in the reporting gauge.

    Uses the sup-normalized gauge when t_1 > 0; otherwise the internal
    mean-zero gauge is reported and flagged.
    """
    if state.ts[0] > 0.0:
        phis = to_paper_gauge(state)
        paper = True
    else:
        phis = state.phis
        paper = False
    return phis.max(axis=1), phis.min(axis=1), paper


def laplacian_quantity(geom: DiscreteGeometry, bg: BackgroundSplit,
                       state: CoupledState, lam: float = 1.0) \
        -> tuple[np.ndarray, np.ndarray]:
    """sup of u_i = exp(-lam * phi_i) (n + Delta_{theta_i} phi_i) per i.

    Returns the sup values and their argmax nodes.  lam only rescales the
    monitor; it is configurable for comparability across runs.
    """
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    sups = np.empty(bg.k)
    argmax = np.empty(bg.k, dtype=int)
    for i in range(bg.k):
        u = np.exp(-lam * state.phis[i]) * trace_wrt_theta(geom, bg, i,
                                                           state.phis[i])
        argmax[i] = int(np.argmax(u))
        sups[i] = float(u[argmax[i]])
    return sups, argmax


@dataclass(frozen=True)
class JensenGreenReport:
    gap: float
    bound: float
    passed: bool
    jensen_margin: float     # log mean e^u - mean u, nonnegative by convexity
    informational: bool      # True in the Fano arrangement


def jensen_green_check(geom: DiscreteGeometry, bg: BackgroundSplit,
                       state: CoupledState, green: float) -> JensenGreenReport:
    """Two-step sup bound on u = sum t_j phi_j against the Green constant.

    Green step: sup u - mean u <= green * sup_p sum_j t_j f_j(p), valid
    whenever every theta_j + i ddbar phi_j >= 0 (then Delta u is bounded
    below by -sum t_j f_j) and `green` came from exact sampling.  Jensen
    step: mean u <= log mean e^u.  Together: gap <= bound, where
    gap = sup u - log((1/V) integral e^u dA).  The estimate belongs to the
    anti-Fano arrangement; Fano runs get it flagged informational.
    """
    u = np.tensordot(state.ts, state.phis, axes=1)
    log_mean_exp = float(np.log(mean(geom, np.exp(u))))
    gap = float(u.max()) - log_mean_exp
    if geom.backend == "mesh":
        trace_bound = np.tensordot(state.ts, bg.f, axes=1).max()
    else:
        trace_bound = geom.dim * float(np.dot(state.ts, bg.a))
    bound = green * float(trace_bound)
    return JensenGreenReport(
        gap=gap,
        bound=bound,
        passed=bool(gap <= bound + 1e-8),
        jensen_margin=log_mean_exp - mean(geom, u),
        informational=(bg.sigma < 0),
    )


def make_monitor_record(geom, bg, state, *, dt, report, options, green) \
        -> MonitorRecord:
    """Evaluate the enabled monitors on an accepted (converged) state."""
    if options.c0:
        sup_phi, inf_phi, paper = c0_monitor(geom, bg, state)
    else:
        sup_phi = np.full(bg.k, np.nan)
        inf_phi = np.full(bg.k, np.nan)
        paper = False

    u_max = np.nan
    if options.laplacian:
        sups, _ = laplacian_quantity(geom, bg, state, options.lam)
        u_max = float(sups.max())

    jensen_gap = jensen_bound = np.nan
    jensen_pass = False
    if options.jensen and green is not None:
        jg = jensen_green_check(geom, bg, state, green)
        jensen_gap, jensen_bound, jensen_pass = jg.gap, jg.bound, jg.passed

    min_eig = np.nan
    if options.spectrum:
        op = linear_analysis.assemble_L(geom, bg, state)
        min_eig, _ = linear_analysis.smallest_eigenvalue(op)

    return MonitorRecord(
        t=state.t, dt=dt,
        newton_iters=report.iterations, backtracks=report.backtracks,
        residual_sup=report.residual_sup, residual_l2=report.residual_l2,
        sup_phi=sup_phi, inf_phi=inf_phi, paper_gauge=paper,
        u_max=u_max, lam=options.lam,
        jensen_gap=jensen_gap, jensen_bound=jensen_bound,
        jensen_pass=jensen_pass, min_eig=min_eig,
    )
