"""Continuity path driver: Euler predictor plus damped Newton corrector."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import (LinearSolveFailure, NonConvergence, PositivityLost,
                     SolveFailure)
from .geometry import (BackgroundSplit, DiscreteGeometry, green_constant,
                       metric_admissible)
from .system import (CoupledState, assemble_jacobian, coupling_exponential,
                     enforce_internal_gauge, make_state, residual,
                     to_paper_gauge)


@dataclass(frozen=True)
class PathConfig:
    """Numerical knobs of the path driver; defaults are the tested ones."""

    t_max: float = 1.0
    dt_initial: float = 0.05
    dt_min: float = 1e-4
    newton_tol: float | None = None    # None: 1e-10 * max_i C_i
    newton_max_iters: int = 30
    armijo_slope: float = 1e-4
    armijo_backtrack: float = 0.5
    armijo_max_backtracks: int = 20
    blowup_threshold: float = 50.0
    dt_halve_iters: int = 8            # halve dt when Newton needs more
    dt_double_iters: int = 3           # double dt when Newton needs fewer
    dt_max_factor: float = 4.0         # cap dt at dt_initial * this

    def __post_init__(self):
        if not (0.0 < self.dt_min <= self.dt_initial):
            raise ValueError("need 0 < dt_min <= dt_initial")
        if self.newton_tol is not None and self.newton_tol <= 0.0:
            raise ValueError("newton_tol must be positive")

    def resolve_tol(self, bg: BackgroundSplit) -> float:
        if self.newton_tol is not None:
            return self.newton_tol
        return 1e-10 * float(bg.C.max())


@dataclass(frozen=True)
class NewtonReport:
    iterations: int
    residual_sup: float
    residual_l2: float
    backtracks: int
    converged: bool


@dataclass(frozen=True)
class MonitorOptions:
    """Which per-step monitors run_path records."""

    c0: bool = True
    laplacian: bool = True
    lam: float = 1.0
    jensen: bool = True
    green_samples: int = 16
    spectrum: bool = True


class PathStatus(enum.Enum):
    REACHED_T_MAX = "ReachedTMax"
    STALLED = "Stalled"
    POSITIVITY_LOST = "PositivityLost"
    BLOWUP_DETECTED = "BlowupDetected"


@dataclass(frozen=True)
class PathResult:
    accepted: list            # [(t, CoupledState, MonitorRecord)]
    status: PathStatus
    status_t: float
    reason: str = ""

    @property
    def final_state(self) -> CoupledState:
        return self.accepted[-1][1]


def newton_solve(geom: DiscreteGeometry, bg: BackgroundSplit,
                 state: CoupledState, cfg: PathConfig) \
        -> tuple[CoupledState, NewtonReport]:
    """Damped Newton corrector at fixed path parameters.

    Backtracking line search on the weighted l2 residual norm; candidate
    iterates outside the admissible cone (some metric eigenvalue <= 0 or a
    non-finite exponential) are rejected the same way as insufficient
    decrease.  Convergence is declared on the sup norm, so starting at a
    solution costs zero iterations.
    """
    tol = cfg.resolve_tol(bg)
    state = enforce_internal_gauge(geom, state)
    if not metric_admissible(geom, bg, state.phis):
        raise PositivityLost("initial state outside the admissible cone")
    res = residual(geom, bg, state)
    iters = 0
    backtracks = 0
    while True:
        if res.sup <= tol:
            return state, NewtonReport(iterations=iters,
                                       residual_sup=res.sup,
                                       residual_l2=res.l2,
                                       backtracks=backtracks,
                                       converged=True)
        if iters >= cfg.newton_max_iters:
            report = NewtonReport(iterations=iters, residual_sup=res.sup,
                                  residual_l2=res.l2, backtracks=backtracks,
                                  converged=False)
            raise NonConvergence(
                f"no convergence in {iters} iterations "
                f"(residual sup {res.sup:.3e}, tol {tol:.3e})", report)

        step = assemble_jacobian(geom, bg, state).solve(-res.values)
        alpha = 1.0
        accepted = None
        saw_admissible = False
        for _ in range(cfg.armijo_max_backtracks + 1):
            cand = state.with_phis(state.phis + alpha * step)
            if metric_admissible(geom, bg, cand.phis):
                saw_admissible = True
                cand_res = residual(geom, bg, cand)
                if (np.isfinite(cand_res.l2) and
                        cand_res.l2 <= (1.0 - cfg.armijo_slope * alpha) * res.l2):
                    accepted = (cand, cand_res)
                    break
            backtracks += 1
            alpha *= cfg.armijo_backtrack
        if accepted is None:
            report = NewtonReport(iterations=iters, residual_sup=res.sup,
                                  residual_l2=res.l2, backtracks=backtracks,
                                  converged=False)
            if not saw_admissible:
                raise PositivityLost("line search could not re-enter the "
                                     "admissible cone")
            raise NonConvergence("line search stalled without sufficient "
                                 "decrease", report)
        state = enforce_internal_gauge(geom, accepted[0])
        res = residual(geom, bg, state)
        iters += 1


def solve_calabi_initial(geom: DiscreteGeometry, bg: BackgroundSplit,
                         cfg: PathConfig) -> CoupledState:
    """Decoupled volume-prescription problems at t = 0, from phi = 0.

    At t = 0 the system splits into k independent problems
    m_i[phi_i] = C_i (linear Poisson solves on the mesh backend), all
    handled by the generic corrector whose t = 0 Jacobian is block
    diagonal with one mean constraint per slot.
    """
    zero = make_state(0.0, np.zeros((bg.k, geom.num_nodes)), bg.sigma)
    state, _ = newton_solve(geom, bg, zero, cfg)
    return state


def predictor(geom: DiscreteGeometry, bg: BackgroundSplit,
              state: CoupledState, dt: float) -> CoupledState:
    """First-order Euler prediction along the scalar path parameter.

    Solves the bordered tangent system J v = -dR/dt where
    dR_i/dt = -sigma C_i exp(sigma t sum phi_j) * (sum_j phi_j).
    """
    expo = coupling_exponential(state)
    sum_phi = state.phis.sum(axis=0)
    dres_dt = np.empty_like(state.phis)
    for i in range(bg.k):
        dres_dt[i] = -bg.sigma * bg.C[i] * expo * sum_phi
    v = assemble_jacobian(geom, bg, state).solve(-dres_dt)
    predicted = make_state(state.t + dt, state.phis + dt * v, bg.sigma)
    return enforce_internal_gauge(geom, predicted)


def _paper_sup_phi1(state: CoupledState) -> float:
    """sup |phi_1| in the reporting gauge (internal gauge at t = 0)."""
    phis = to_paper_gauge(state) if state.ts[0] > 0.0 else state.phis
    return float(np.abs(phis[0]).max())


def run_path(geom: DiscreteGeometry, bg: BackgroundSplit, cfg: PathConfig,
             monitors: MonitorOptions | None = None) -> PathResult:
    """Drive t from 0 to cfg.t_max, recording monitors at accepted steps.

    All failures are folded into the termination status; nothing raises
    for solver-level trouble.
    """
    from .estimates import make_monitor_record   # circular at import time

    monitors = monitors or MonitorOptions()
    green = green_constant(geom, monitors.green_samples) if monitors.jensen \
        else None

    try:
        state = solve_calabi_initial(geom, bg, cfg)
        res0 = residual(geom, bg, state)
        report = NewtonReport(0, res0.sup, res0.l2, 0, True)
    except SolveFailure as exc:
        return PathResult(accepted=[], status=PathStatus.STALLED,
                          status_t=0.0, reason=f"initial solve failed: {exc}")

    record = make_monitor_record(geom, bg, state, dt=0.0, report=report,
                                 options=monitors, green=green)
    accepted = [(0.0, state, record)]
    if _paper_sup_phi1(state) > cfg.blowup_threshold:
        return PathResult(accepted=accepted,
                          status=PathStatus.BLOWUP_DETECTED, status_t=0.0)

    t = 0.0
    dt = cfg.dt_initial
    while t < cfg.t_max - 1e-12:
        dt_step = min(dt, cfg.t_max - t)
        try:
            prediction = predictor(geom, bg, state, dt_step)
            new_state, report = newton_solve(geom, bg, prediction, cfg)
        except SolveFailure as exc:
            if dt_step <= cfg.dt_min * (1.0 + 1e-12):
                status = (PathStatus.POSITIVITY_LOST
                          if isinstance(exc, PositivityLost)
                          else PathStatus.STALLED)
                return PathResult(accepted=accepted, status=status,
                                  status_t=t, reason=str(exc))
            dt = max(0.5 * dt_step, cfg.dt_min)
            continue

        t = t + dt_step
        state = new_state
        record = make_monitor_record(geom, bg, state, dt=dt_step,
                                     report=report, options=monitors,
                                     green=green)
        accepted.append((t, state, record))

        if _paper_sup_phi1(state) > cfg.blowup_threshold:
            return PathResult(accepted=accepted,
                              status=PathStatus.BLOWUP_DETECTED, status_t=t)

        if report.iterations > cfg.dt_halve_iters:
            dt = max(0.5 * dt, cfg.dt_min)
        elif report.iterations <= cfg.dt_double_iters:
            dt = min(2.0 * dt, cfg.dt_initial * cfg.dt_max_factor)

    return PathResult(accepted=accepted, status=PathStatus.REACHED_T_MAX,
                      status_t=t)
