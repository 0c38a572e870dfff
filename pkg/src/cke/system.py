"""Coupled residual, Jacobian with gauge bordering, and gauge bookkeeping.

The parametrized system solved along the continuity path is

    m_i[phi_i] = C_i exp(sigma * sum_j t_j phi_j),   i = 1..k,

whose residual and linearization are assembled here over either geometry
backend.  Constant shifts c with sum_j t_j c_j = 0 leave the residual
invariant; the solver fixes that freedom with dA-mean-zero constraints on
all slots except the first one carrying t_j > 0 (all slots when every
t_j = 0), attached to the Jacobian as bordering rows/columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import GaugeViolation, LinearSolveFailure
from .geometry import (BackgroundSplit, DiscreteGeometry, ma_density,
                       ma_density_operator, mean)


@dataclass(frozen=True)
class CoupledState:
    """Path parameter(s) plus the k potentials on grid nodes.

    ts holds one parameter per equation; the default scalar path keeps them
    all equal.  States are values: operations return new instances.
    """

    ts: np.ndarray          # (k,) in [0, 1]
    phis: np.ndarray        # (k, N)
    sigma: int

    @property
    def k(self) -> int:
        return self.phis.shape[0]

    @property
    def t(self) -> float:
        """Scalar path parameter; requires uniform ts."""
        if not np.all(self.ts == self.ts[0]):
            raise ValueError("state has per-equation parameters")
        return float(self.ts[0])

    def with_phis(self, phis: np.ndarray) -> "CoupledState":
        return CoupledState(ts=self.ts, phis=np.array(phis, dtype=float),
                            sigma=self.sigma)


def make_state(t, phis, sigma: int) -> CoupledState:
    phis = np.atleast_2d(np.asarray(phis, dtype=float)).copy()
    ts = np.full(phis.shape[0], float(t)) if np.ndim(t) == 0 \
        else np.asarray(t, dtype=float).copy()
    if ts.shape[0] != phis.shape[0]:
        raise ValueError("one path parameter per equation required")
    return CoupledState(ts=ts, phis=phis, sigma=int(sigma))


def coupling_exponential(state: CoupledState) -> np.ndarray:
    """exp(sigma * sum_j t_j phi_j) nodewise (may overflow to inf)."""
    u = np.tensordot(state.ts, state.phis, axes=1)
    with np.errstate(over="ignore"):
        return np.exp(state.sigma * u)


@dataclass(frozen=True)
class ResidualVector:
    values: np.ndarray      # (k, N)
    sup: float
    l2: float               # sqrt(sum_i integral R_i^2 dA)


def residual(geom: DiscreteGeometry, bg: BackgroundSplit,
             state: CoupledState) -> ResidualVector:
    """R_i = m_i[phi_i] - C_i exp(sigma sum_j t_j phi_j) at every node."""
    expo = coupling_exponential(state)
    vals = np.empty_like(state.phis)
    for i in range(bg.k):
        vals[i] = ma_density(geom, bg, i, state.phis[i]) - bg.C[i] * expo
    sup = float(np.abs(vals).max()) if np.all(np.isfinite(vals)) else np.inf
    l2 = float(np.sqrt(np.sum(vals**2 @ geom.dA))) if np.isfinite(sup) \
        else np.inf
    return ResidualVector(values=vals, sup=sup, l2=l2)


def jacobian_apply(geom: DiscreteGeometry, bg: BackgroundSplit,
                   state: CoupledState, deltas: np.ndarray) -> np.ndarray:
    """Directional derivative of the residual along (delta_1..delta_k)."""
    deltas = np.atleast_2d(deltas)
    expo = coupling_exponential(state)
    coupled = np.tensordot(state.ts, deltas, axes=1)
    out = np.empty_like(deltas, dtype=float)
    for i in range(bg.k):
        out[i] = (ma_density_operator(geom, bg, i, state.phis[i]) @ deltas[i]
                  - bg.sigma * bg.C[i] * expo * coupled)
    return out


def gauge_slots(state: CoupledState) -> list[int]:
    """Slots whose additive constant is pure gauge (mean-pinned ones).

    The first slot with t_j > 0 keeps its constant free (the exponential
    pins it); when all t_j = 0 every slot is pinned.
    """
    positive = np.nonzero(state.ts > 0.0)[0]
    if positive.size == 0:
        return list(range(state.k))
    return [j for j in range(state.k) if j != positive[0]]


class BorderedJacobian:
    """Sparse Jacobian with gauge bordering and a cached factorization."""

    def __init__(self, geom: DiscreteGeometry, bg: BackgroundSplit,
                 state: CoupledState):
        self.geom = geom
        self.k = bg.k
        self.n_nodes = geom.num_nodes
        self.slots = gauge_slots(state)

        expo = coupling_exponential(state)
        blocks = [[None] * bg.k for _ in range(bg.k)]
        for i in range(bg.k):
            coupling_i = -bg.sigma * bg.C[i] * expo
            for j in range(bg.k):
                block = sp.diags(coupling_i * state.ts[j])
                if j == i:
                    block = block + ma_density_operator(geom, bg, i,
                                                        state.phis[i])
                blocks[i][j] = block
        self.jac = sp.bmat(blocks, format="csr")

        nb = len(self.slots)
        rows = sp.lil_matrix((nb, bg.k * geom.num_nodes))
        for r, j in enumerate(self.slots):
            rows[r, j * geom.num_nodes:(j + 1) * geom.num_nodes] = geom.dA
        rows = rows.tocsr()
        self.matrix = sp.bmat([[self.jac, rows.T], [rows, None]],
                              format="csc")
        self._lu = None

    def _factor(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.matrix)
            except RuntimeError as exc:
                raise LinearSolveFailure(
                    f"bordered Jacobian factorization failed: {exc}") from exc
        return self._lu

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve for the potential update given (k, N) right-hand sides.

        Border equations get zero right-hand side, so the update keeps the
        dA-means of the gauge slots unchanged.
        """
        flat = np.concatenate([np.asarray(rhs).ravel(),
                               np.zeros(len(self.slots))])
        sol = self._factor().solve(flat)
        if not np.all(np.isfinite(sol)):
            raise LinearSolveFailure("bordered solve produced non-finite "
                                     "values")
        return sol[:self.k * self.n_nodes].reshape(self.k, self.n_nodes)

    def probe(self, rhs: np.ndarray) -> float:
        """Solve-then-verify residual of the full bordered system."""
        flat = np.concatenate([np.asarray(rhs).ravel(),
                               np.zeros(len(self.slots))])
        sol = self._factor().solve(flat)
        return float(np.abs(self.matrix @ sol - flat).max())


def assemble_jacobian(geom: DiscreteGeometry, bg: BackgroundSplit,
                      state: CoupledState) -> BorderedJacobian:
    return BorderedJacobian(geom, bg, state)


def gauge_shift(state: CoupledState, c) -> CoupledState:
    """Shift phi_j by constants c_j; residual-preserving shifts only.

    For t > 0 this requires sum_j t_j c_j = 0; at t = 0 any shift is
    allowed (the exponential does not see the potentials).
    """
    c = np.asarray(c, dtype=float)
    weight = float(np.dot(state.ts, c))
    if np.any(state.ts > 0.0) and abs(weight) > 1e-12 * (1.0 + np.abs(c).max()):
        raise GaugeViolation(f"sum t_j c_j = {weight}, shift changes the "
                             "residual")
    return state.with_phis(state.phis + c[:, None])


def enforce_internal_gauge(geom: DiscreteGeometry,
                           state: CoupledState) -> CoupledState:
    """Return the gauge-orbit representative with mean-zero pinned slots."""
    c = np.zeros(state.k)
    slots = gauge_slots(state)
    for j in slots:
        c[j] = -mean(geom, state.phis[j])
    free = [j for j in range(state.k) if j not in slots]
    if free:
        j0 = free[0]
        c[j0] = -float(np.dot(state.ts, c)) / state.ts[j0]
        return state.with_phis(state.phis + c[:, None])
    # all t_j = 0: every constant is gauge
    return state.with_phis(state.phis + c[:, None])


def to_paper_gauge(state: CoupledState) -> np.ndarray:
    """Reporting copy with sup phi_j = 0 for j >= 2.

    The compensating constant goes into phi_1, scaled by t_j / t_1 so the
    residual of the copy matches the solver state.
    """
    if state.ts[0] <= 0.0:
        raise GaugeViolation("paper gauge needs t_1 > 0")
    c = np.zeros(state.k)
    c[1:] = -state.phis[1:].max(axis=1)
    c[0] = -float(np.dot(state.ts[1:], c[1:])) / state.ts[0]
    return state.phis + c[:, None]
