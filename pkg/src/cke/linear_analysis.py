"""Linearized-operator analysis at solved states.

Assembles the openness operator (Lv)_i = -Delta_{omega_i} v_i +
sigma sum_j t_j v_j on the product of dvol_i-mean-zero subspaces, finds its
smallest-magnitude eigenvalue by bordered shift-invert iteration, and runs
the uniqueness and Weitzenboeck verification probes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (IterationFailure, NotASolution, SolveFailure,
                     UnsupportedBackend)
from .geometry import (BackgroundSplit, DiscreteGeometry, gradient_squared,
                       integrate, ma_density, smooth_random_fields,
                       solved_metric_laplacian)
from .system import CoupledState, residual


@dataclass(frozen=True)
class OpennessOperator:
    """Sparse openness operator with its per-slot volume weights."""

    matrix: sp.spmatrix        # (kN, kN)
    dvols: np.ndarray          # (k, N) solved-metric volume weights
    k: int
    num_nodes: int
    ts: np.ndarray
    sigma: int

    def apply(self, v: np.ndarray) -> np.ndarray:
        return (self.matrix @ np.asarray(v).ravel()).reshape(self.k,
                                                             self.num_nodes)


def _default_solution_tol(bg: BackgroundSplit) -> float:
    return 1e-8 * float(bg.C.max())


def assemble_L(geom: DiscreteGeometry, bg: BackgroundSplit,
               state: CoupledState, residual_tol: float | None = None) \
        -> OpennessOperator:
    """Build the openness operator at a converged state.

    Only meaningful at solutions; raises NotASolution otherwise.  The
    diagonal term uses the solved metric of the same slot,
    -Delta_{omega_i} v_i, and the coupling block is sigma t_j times the
    identity.
    """
    tol = residual_tol if residual_tol is not None \
        else _default_solution_tol(bg)
    res = residual(geom, bg, state)
    if res.sup > tol:
        raise NotASolution(f"residual sup {res.sup:.3e} exceeds {tol:.3e}")

    eye = sp.identity(geom.num_nodes, format="csr")
    blocks = [[None] * bg.k for _ in range(bg.k)]
    dvols = np.empty_like(state.phis)
    for i in range(bg.k):
        dvols[i] = ma_density(geom, bg, i, state.phis[i]) * geom.dA
        for j in range(bg.k):
            block = bg.sigma * state.ts[j] * eye
            if j == i:
                block = block - solved_metric_laplacian(geom, bg, i,
                                                        state.phis[i])
            blocks[i][j] = block
    return OpennessOperator(matrix=sp.bmat(blocks, format="csr"),
                            dvols=dvols, k=bg.k, num_nodes=geom.num_nodes,
                            ts=state.ts.copy(), sigma=bg.sigma)


def _subspace_projectors(op: OpennessOperator) \
        -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Slot-constant injection U and dvol-mean rows W (W^T U = I)."""
    k, m = op.k, op.num_nodes
    rows = np.repeat(np.arange(k * m), 1)
    cols = np.repeat(np.arange(k), m)
    u = sp.csr_matrix((np.ones(k * m), (rows, cols)), shape=(k * m, k))
    weights = (op.dvols / op.dvols.sum(axis=1, keepdims=True)).ravel()
    w = sp.csr_matrix((weights, (np.arange(k * m), cols)), shape=(k * m, k))
    return u, w


def smallest_eigenvalue(op: OpennessOperator, max_iters: int = 500) \
        -> tuple[float, np.ndarray]:
    """Smallest-magnitude eigenvalue on the mean-zero product subspace.

    Shift-invert iteration on the bordered extension
    [[L - sigma I, U], [W^T, 0]] with a deterministic start; the border
    pins the dvol_i means, which is where the operator's gauge constants
    live.  The shift starts at 0 and is updated to the running Rayleigh
    quotient when convergence is slow.
    """
    k, m = op.k, op.num_nodes
    u_cols, w_cols = _subspace_projectors(op)
    border = lambda shift: sp.bmat(
        [[op.matrix - shift * sp.identity(k * m), u_cols],
         [w_cols.T, None]], format="csc")

    rng = np.random.default_rng(20250809)
    v = rng.standard_normal(k * m)
    v -= u_cols @ (w_cols.T @ v)
    v /= np.linalg.norm(v)

    shift = 0.0
    lu = None
    lam = np.nan
    resid = np.inf
    for it in range(max_iters):
        if lu is None:
            try:
                lu = spla.splu(border(shift))
            except RuntimeError:
                shift += 1e-10 + abs(shift) * 1e-8
                continue
        sol = lu.solve(np.concatenate([v, np.zeros(k)]))
        w = sol[:k * m]
        norm = np.linalg.norm(w)
        if not np.isfinite(norm) or norm == 0.0:
            shift += 1e-10 + abs(shift) * 1e-8
            lu = None
            continue
        v = w / norm
        lv = op.matrix @ v
        lam = float(v @ lv)
        resid = np.linalg.norm(lv - lam * v)
        if resid <= 1e-11 * max(1.0, np.linalg.norm(lv)):
            return lam, v.reshape(k, m)
        if it % 8 == 7 and np.isfinite(lam):
            shift = lam
            lu = None
    raise IterationFailure(
        f"eigen iteration did not converge in {max_iters} steps "
        f"(last value {lam:.6e}, residual {resid:.2e})")


@dataclass(frozen=True)
class UniquenessReport:
    distance: float
    passed: bool
    detail: str = ""


def uniqueness_probe(geom: DiscreteGeometry, bg: BackgroundSplit,
                     state: CoupledState, magnitude: float, seed: int,
                     cfg=None) -> UniquenessReport:
    """Perturb a solution and test that Newton returns to it.

    Each potential is shifted by a smooth pseudo-random field of sup-norm
    `magnitude` (deterministic in `seed`), re-gauged, and re-converged;
    distance is the sup-norm mismatch after gauge alignment.  Solver
    failures are recorded as a failed probe, not raised.
    """
    from .continuity import PathConfig, newton_solve
    from .system import enforce_internal_gauge

    cfg = cfg or PathConfig()
    fields = smooth_random_fields(geom, bg.k, magnitude, seed)
    perturbed = enforce_internal_gauge(geom,
                                       state.with_phis(state.phis + fields))
    try:
        reconverged, _ = newton_solve(geom, bg, perturbed, cfg)
    except SolveFailure as exc:
        return UniquenessReport(distance=np.inf, passed=False,
                                detail=f"{type(exc).__name__}: {exc}")
    base = enforce_internal_gauge(geom, state)
    distance = float(np.abs(reconverged.phis - base.phis).max())
    return UniquenessReport(distance=distance, passed=bool(distance <= 1e-7),
                            detail="")


def ricci_density(geom: DiscreteGeometry, bg: BackgroundSplit,
                  state: CoupledState, i: int) -> np.ndarray:
    """Scalar Ricci density of omega_i relative to omega_i (n = 1 only).

    Along the path, Ric(omega_i) = -sigma (t sum_j omega_j +
    (1-t) sum_j theta_j); with sigma = +1 (anti-Fano) the density is
    negative, with sigma = -1 positive.
    """
    t = state.t
    total = np.zeros(geom.num_nodes)
    for j in range(bg.k):
        total += t * ma_density(geom, bg, j, state.phis[j]) \
            + (1.0 - t) * bg.density(geom, j)
    m_i = ma_density(geom, bg, i, state.phis[i])
    return -bg.sigma * total / m_i


def weitzenbock_margins(geom: DiscreteGeometry, bg: BackgroundSplit,
                        state: CoupledState, v: np.ndarray) -> np.ndarray:
    """Margins of the Bochner-type inequality for one test function.

    margin_i = integral (Delta_{omega_i} v)^2 dvol_i
             - integral r_i |dv|^2_{omega_i} dvol_i  with r_i the Ricci
    density of the solved metric; nonnegative margins witness the
    inequality.  Complex dimension 1 only.
    """
    if geom.dim != 1:
        raise UnsupportedBackend("curvature reconstruction is only available "
                                 "in complex dimension 1")
    margins = np.empty(bg.k)
    lap_v = geom.laplacian @ v
    for i in range(bg.k):
        m_i = ma_density(geom, bg, i, state.phis[i])
        dvol = m_i * geom.dA
        lhs = float(np.dot((lap_v / m_i) ** 2, dvol))
        grad2 = gradient_squared(geom, bg, i, state.phis[i], v)
        rhs = float(np.dot(ricci_density(geom, bg, state, i) * grad2, dvol))
        margins[i] = lhs - rhs
    return margins


def low_eigenvectors(geom: DiscreteGeometry, count: int) -> np.ndarray:
    """First `count` nonconstant background-Laplacian eigenvectors.

    Deterministic ARPACK shift-invert on the dA-weighted symmetric form;
    columns are dA-orthonormal, lowest frequencies first.
    """
    a = (-sp.diags(geom.dA) @ geom.laplacian).tocsc()
    a = 0.5 * (a + a.T)
    mass = sp.diags(geom.dA).tocsc()
    v0 = np.cos(np.arange(geom.num_nodes, dtype=float))
    vals, vecs = spla.eigsh(a, k=count + 1, M=mass, sigma=-0.5, which="LM",
                            v0=v0)
    order = np.argsort(vals)
    keep = [i for i in order if vals[i] > 1e-8][:count]
    return vecs[:, keep].T


def weitzenbock_check(geom: DiscreteGeometry, bg: BackgroundSplit,
                      state: CoupledState, num_samples: int = 3,
                      residual_tol: float | None = None) -> np.ndarray:
    """Margins for the first `num_samples` low-frequency test functions.

    Returns an array of shape (num_samples, k).
    """
    if geom.dim != 1:
        raise UnsupportedBackend("curvature reconstruction is only available "
                                 "in complex dimension 1")
    tol = residual_tol if residual_tol is not None \
        else _default_solution_tol(bg)
    res = residual(geom, bg, state)
    if res.sup > tol:
        raise NotASolution(f"residual sup {res.sup:.3e} exceeds {tol:.3e}")
    samples = low_eigenvectors(geom, num_samples)
    return np.array([weitzenbock_margins(geom, bg, state, v)
                     for v in samples])
