"""Geometry backends: triangle-mesh surfaces and radial P^n grids.

Both backends expose the same data: positive volume weights dA (summing to
the total volume V), a background Laplacian Delta = tr_{omega_0} i ddbar
(negative semidefinite, annihilates constants and dA-means), and
Monge-Ampere density operators m_i[phi] = (theta_i + i ddbar phi)^n /
omega_0^n with their linearizations.

Convention fixed throughout: Delta is the complex trace Laplacian, i.e.
half the Laplace-Beltrami operator on a surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BadSplitting, DegenerateGeometry, SolveFailure
from .mesh import TriangleMesh

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class DiscreteGeometry:
    """A discretized compact Kahler manifold.

    backend is "mesh" (n = 1 surface) or "radial" (rotationally invariant
    P^n).  laplacian is the background operator Delta acting on node
    vectors; dA are the per-node volume weights.
    """

    backend: str
    num_nodes: int
    dim: int                      # complex dimension n
    dA: np.ndarray                # (N,) positive, sums to V
    laplacian: sp.spmatrix        # Delta, zero row sums
    points: np.ndarray | None = None   # mesh: (N, 3) vertex positions
    mesh: TriangleMesh | None = None
    x: np.ndarray | None = None        # radial: grid in [0, 1]
    d1: sp.spmatrix | None = None      # radial: d/dx, 2nd order
    d2: sp.spmatrix | None = None      # radial: d^2/dx^2, 2nd order
    fs_potential_slope: np.ndarray | None = None   # radial: u_FS'(s) = x

    @property
    def volume(self) -> float:
        return float(self.dA.sum())


@dataclass(frozen=True)
class BackgroundSplit:
    """Splitting of the anticanonical class into k Kahler backgrounds.

    sigma = +1 in the anti-Fano arrangement, -1 in the Fano one (it is the
    sign of the coupling exponent).  Mesh backends carry per-node densities
    f_i = theta_i / omega_0 > 0; the radial backend carries coefficients
    a_i > 0 with sum a_i = n + 1, meaning theta_i = a_i * omega_FS.
    """

    k: int
    sigma: int
    C: np.ndarray                      # (k,) normalization constants
    f: np.ndarray | None = None        # mesh: (k, N) densities
    a: np.ndarray | None = None        # radial: (k,) coefficients

    def density(self, geom: DiscreteGeometry, i: int) -> np.ndarray:
        """f_i as a node vector (constant a_i on the radial backend)."""
        if self.f is not None:
            return self.f[i]
        return np.full(geom.num_nodes, self.a[i])


# ---------------------------------------------------------------------------
# mesh backend
# ---------------------------------------------------------------------------

def _cotangent_matrix(mesh: TriangleMesh) -> tuple[sp.csr_matrix, np.ndarray]:
    """Symmetric cotangent weights and barycentric vertex areas."""
    pts = mesh.vertices
    tri = mesh.faces
    areas = mesh.face_areas()
    if np.any(areas <= 0.0):
        bad = int(np.argmin(areas))
        raise DegenerateGeometry(f"face {bad} has non-positive area")

    rows, cols, vals = [], [], []
    nv = mesh.num_vertices
    vertex_area = np.zeros(nv)
    np.add.at(vertex_area, tri.ravel(), np.repeat(areas / 3.0, 3))

    for corner in range(3):
        i = tri[:, corner]
        j = tri[:, (corner + 1) % 3]
        k = tri[:, (corner + 2) % 3]
        # half-cotangent of the angle at i, which faces edge (j, k)
        e1 = pts[j] - pts[i]
        e2 = pts[k] - pts[i]
        cross = np.linalg.norm(np.cross(e1, e2), axis=1)
        cot = 0.5 * np.einsum("ij,ij->i", e1, e2) / cross
        rows.extend([j, k])
        cols.extend([k, j])
        vals.extend([cot, cot])

    w = sp.csr_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nv, nv))
    return w, vertex_area


def build_surface_geometry(mesh: TriangleMesh) -> DiscreteGeometry:
    """Cotangent discretization of a closed surface (complex dimension 1).

    The mesh metric plays the role of omega_0; dA are barycentric vertex
    areas and Delta = (1/2) * Laplace-Beltrami so that Delta = tr i ddbar.
    """
    w, vertex_area = _cotangent_matrix(mesh)
    row_sums = np.asarray(w.sum(axis=1)).ravel()
    lap = sp.diags(0.5 / vertex_area) @ (w - sp.diags(row_sums))
    return DiscreteGeometry(
        backend="mesh",
        num_nodes=mesh.num_vertices,
        dim=1,
        dA=vertex_area,
        laplacian=lap.tocsr(),
        points=mesh.vertices,
        mesh=mesh,
    )


def make_mesh_background(geom: DiscreteGeometry, f: np.ndarray,
                         sigma: int) -> BackgroundSplit:
    """Wrap per-node densities f (k, N) into a BackgroundSplit."""
    f = np.atleast_2d(np.asarray(f, dtype=float))
    if f.shape[1] != geom.num_nodes:
        raise BadSplitting(f"densities have {f.shape[1]} nodes, geometry has "
                           f"{geom.num_nodes}")
    if np.any(f <= 0.0):
        raise BadSplitting("background densities must be positive")
    if sigma not in (+1, -1):
        raise BadSplitting("sigma must be +1 or -1")
    C = f @ geom.dA / geom.volume
    return BackgroundSplit(k=f.shape[0], sigma=sigma, C=C, f=f)


# ---------------------------------------------------------------------------
# radial backend
# ---------------------------------------------------------------------------

def _derivative_matrices(m: int, h: float) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Second-order d/dx and d2/dx2 on a uniform grid, one-sided at ends."""
    d1 = sp.lil_matrix((m, m))
    d2 = sp.lil_matrix((m, m))
    for j in range(1, m - 1):
        d1[j, j - 1] = -0.5 / h
        d1[j, j + 1] = 0.5 / h
        d2[j, j - 1] = 1.0 / h**2
        d2[j, j] = -2.0 / h**2
        d2[j, j + 1] = 1.0 / h**2
    d1[0, 0], d1[0, 1], d1[0, 2] = -1.5 / h, 2.0 / h, -0.5 / h
    d1[m - 1, m - 1], d1[m - 1, m - 2], d1[m - 1, m - 3] = \
        1.5 / h, -2.0 / h, 0.5 / h
    d2[0, 0], d2[0, 1], d2[0, 2], d2[0, 3] = \
        2.0 / h**2, -5.0 / h**2, 4.0 / h**2, -1.0 / h**2
    d2[m - 1, m - 1], d2[m - 1, m - 2], d2[m - 1, m - 3], d2[m - 1, m - 4] = \
        2.0 / h**2, -5.0 / h**2, 4.0 / h**2, -1.0 / h**2
    return d1.tocsr(), d2.tocsr()


def build_radial_geometry(n: int, grid_size: int, a) \
        -> tuple[DiscreteGeometry, BackgroundSplit]:
    """Rotationally invariant P^n with omega_0 = omega_FS, theta_i = a_i omega_FS.

    The compactified coordinate is x = e^s / (1 + e^s) with s = log|z|^2, so
    the Fubini-Study potential u_FS = log(1 + e^s) has u_FS' = x and
    u_FS'' = x(1-x).  Requires sum a_i = n + 1, which makes
    Ric(omega_0) = sum theta_i hold exactly; the coupling sign is Fano
    (sigma = -1).  dA uses exact cell integrals of the density
    n (2 pi)^n x^(n-1), so weights are positive at every node and sum to
    (2 pi)^n exactly; the background Laplacian
    Delta v = x(1-x) v_xx + (n - (n+1) x) v_x is assembled in flux form
    (1/x^(n-1)) d/dx [x^n (1-x) dv/dx], which annihilates dA-means to
    round-off.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.size < 1:
        raise BadSplitting("need a 1-D list of coefficients")
    if np.any(a <= 0.0):
        raise BadSplitting("all coefficients a_i must be positive")
    if abs(a.sum() - (n + 1)) > 1e-12:
        raise BadSplitting(f"sum a_i = {a.sum()} but n + 1 = {n + 1}")
    if n < 1:
        raise ValueError("complex dimension n must be >= 1")
    if grid_size < 16:
        raise ValueError("grid_size must be >= 16")

    m = int(grid_size)
    h = 1.0 / (m - 1)
    x = np.linspace(0.0, 1.0, m)

    edges = np.empty(m + 1)
    edges[0] = 0.0
    edges[-1] = 1.0
    edges[1:-1] = (np.arange(1, m) - 0.5) * h
    cell_mass = edges[1:] ** n - edges[:-1] ** n   # integral of n x^(n-1)
    dA = TWO_PI ** n * cell_mass

    # flux-form Laplacian: conductance n * p(edge) / h on interior edges,
    # p(x) = x^n (1 - x); boundary fluxes vanish since p(0) = p(1) = 0
    inner = edges[1:-1]
    cond = n * inner**n * (1.0 - inner) / h
    rows, cols, vals = [], [], []
    for e in range(m - 1):
        c = cond[e]
        rows.extend([e, e, e + 1, e + 1])
        cols.extend([e, e + 1, e, e + 1])
        vals.extend([-c, c, c, -c])
    lap = sp.diags(1.0 / cell_mass) @ sp.csr_matrix(
        (vals, (rows, cols)), shape=(m, m))
    lap = lap.tocsr()

    d1, d2 = _derivative_matrices(m, h)
    geom = DiscreteGeometry(
        backend="radial",
        num_nodes=m,
        dim=n,
        dA=dA,
        laplacian=lap,
        x=x,
        d1=d1,
        d2=d2,
        fs_potential_slope=x,
    )
    bg = BackgroundSplit(k=a.size, sigma=-1, C=a**n, a=a)
    return geom, bg


def _radial_eigenfields(geom: DiscreteGeometry, bg: BackgroundSplit, i: int,
                        phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tangential and radial eigenvalue fields of theta_i + i ddbar phi.

    Relative to the Euclidean complex Hessian scale e^{-s}, the perturbed
    potential psi_i = a_i u_FS + phi has tangential eigenvalue x * tau and
    radial eigenvalue x(1-x) * rho with

        tau = a_i + (1 - x) phi_x
        rho = a_i + (1 - 2x) phi_x + x(1 - x) phi_xx.
    """
    x = geom.x
    px = geom.d1 @ phi
    pxx = geom.d2 @ phi
    tau = bg.a[i] + (1.0 - x) * px
    rho = bg.a[i] + (1.0 - 2.0 * x) * px + x * (1.0 - x) * pxx
    return tau, rho


# ---------------------------------------------------------------------------
# densities, linearizations, traces
# ---------------------------------------------------------------------------

def ma_density(geom: DiscreteGeometry, bg: BackgroundSplit, i: int,
               phi: np.ndarray) -> np.ndarray:
    """m_i[phi] = (theta_i + i ddbar phi)^n / omega_0^n at the nodes.

    Negative values are returned as-is; admissibility is the caller's
    concern.
    """
    if geom.backend == "mesh":
        return bg.f[i] + geom.laplacian @ phi
    tau, rho = _radial_eigenfields(geom, bg, i, phi)
    return tau ** (geom.dim - 1) * rho


def ma_density_operator(geom: DiscreteGeometry, bg: BackgroundSplit, i: int,
                        phi: np.ndarray) -> sp.spmatrix:
    """Sparse linearization of m_i at phi (exactly Delta on meshes)."""
    if geom.backend == "mesh":
        return geom.laplacian
    n = geom.dim
    x = geom.x
    tau, rho = _radial_eigenfields(geom, bg, i, phi)
    op = (sp.diags(tau ** (n - 1) * (1.0 - 2.0 * x)) @ geom.d1
          + sp.diags(tau ** (n - 1) * x * (1.0 - x)) @ geom.d2)
    if n > 1:
        op = op + sp.diags((n - 1) * tau ** (n - 2) * rho * (1.0 - x)) @ geom.d1
    return op.tocsr()


def ma_density_derivative(geom: DiscreteGeometry, bg: BackgroundSplit, i: int,
                          phi: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Directional derivative d/de m_i[phi + e delta] at e = 0."""
    return ma_density_operator(geom, bg, i, phi) @ delta


def trace_wrt_theta(geom: DiscreteGeometry, bg: BackgroundSplit, i: int,
                    phi: np.ndarray) -> np.ndarray:
    """n + Delta_{theta_i} phi: eigenvalue-ratio trace against theta_i."""
    if geom.backend == "mesh":
        return 1.0 + (geom.laplacian @ phi) / bg.f[i]
    tau, rho = _radial_eigenfields(geom, bg, i, phi)
    return ((geom.dim - 1) * tau + rho) / bg.a[i]


def solved_metric_laplacian(geom: DiscreteGeometry, bg: BackgroundSplit,
                            i: int, phi: np.ndarray) -> sp.spmatrix:
    """Sparse Delta_{omega_i} at the metric omega_i = theta_i + i ddbar phi.

    In complex dimension 1 this is Delta / m_i nodewise for both backends.
    """
    if geom.dim == 1:
        m = ma_density(geom, bg, i, phi)
        return (sp.diags(1.0 / m) @ geom.laplacian).tocsr()
    x = geom.x
    tau, rho = _radial_eigenfields(geom, bg, i, phi)
    op = (sp.diags((geom.dim - 1) * (1.0 - x) / tau) @ geom.d1
          + sp.diags((1.0 - 2.0 * x) / rho) @ geom.d1
          + sp.diags(x * (1.0 - x) / rho) @ geom.d2)
    return op.tocsr()


def metric_admissible(geom: DiscreteGeometry, bg: BackgroundSplit,
                      phis: np.ndarray) -> bool:
    """True when every theta_i + i ddbar phi_i is positive at every node.

    On the radial backend both eigenvalue fields must be positive; for
    even-dimensional twists m_i > 0 alone would admit sign-flipped pairs.
    """
    if not np.all(np.isfinite(phis)):
        return False
    for i in range(bg.k):
        if geom.backend == "mesh":
            if np.any(ma_density(geom, bg, i, phis[i]) <= 0.0):
                return False
        else:
            tau, rho = _radial_eigenfields(geom, bg, i, phis[i])
            if np.any(tau <= 0.0) or np.any(rho <= 0.0):
                return False
    return True


def integrate(geom: DiscreteGeometry, values: np.ndarray) -> float:
    """Quadrature sum over nodes of values * dA."""
    return float(np.dot(np.asarray(values), geom.dA))


def mean(geom: DiscreteGeometry, values: np.ndarray) -> float:
    return integrate(geom, values) / geom.volume


# ---------------------------------------------------------------------------
# Green constant
# ---------------------------------------------------------------------------

def _vdc_indices(count: int, total: int) -> np.ndarray:
    """First `count` distinct van der Corput (base 2) indices in [0, total)."""
    picked = []
    seen = set()
    m = 0
    while len(picked) < min(count, total):
        # bit-reversed fraction of m
        v, denom, mm = 0.0, 0.5, m
        while mm:
            if mm & 1:
                v += denom
            denom *= 0.5
            mm >>= 1
        idx = int(v * total)
        if idx not in seen:
            seen.add(idx)
            picked.append(idx)
        m += 1
        if m > 64 * total:
            break
    return np.array(picked, dtype=int)


def green_solver(geom: DiscreteGeometry):
    """Factorized solver for the background Green's function.

    Returns a callback node -> G(node, .) where G solves
    Delta_y G(x, y) = 1/V - delta_x with integral zero, the sign that keeps
    the positivized kernel integrable (the singular diagonal is a maximum).
    """
    lw = (sp.diags(geom.dA) @ geom.laplacian).tocsr()
    col = sp.csc_matrix(geom.dA[:, None])
    border = sp.bmat([[lw, col], [col.T, None]], format="csc")
    try:
        lu = spla.splu(border)
    except RuntimeError as exc:
        raise SolveFailure(f"singular background Laplacian: {exc}") from exc
    dA_over_v = geom.dA / geom.volume

    def column(node: int) -> np.ndarray:
        rhs = np.concatenate([dA_over_v, [0.0]])
        rhs[node] -= 1.0
        sol = lu.solve(rhs)
        return sol[:-1]

    return column


def green_constant(geom: DiscreteGeometry, samples: int = 16) -> float:
    """Upper bound sup_x integral of the positivized Green kernel.

    For each sampled node x the Poisson problem above is solved and the
    positivized mass integral (G - min G) dA = -V min_y G(x, y) recorded;
    the result is the max over samples.  Samples follow a fixed
    bit-reversal sequence over node indices, so enlarging `samples` only
    adds nodes and the estimate is monotone; samples >= N is exact.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    column = green_solver(geom)
    if samples >= geom.num_nodes:
        nodes = np.arange(geom.num_nodes)
    else:
        nodes = _vdc_indices(samples, geom.num_nodes)
    best = 0.0
    for node in nodes:
        g = column(int(node))
        best = max(best, -geom.volume * float(g.min()))
    return best


# ---------------------------------------------------------------------------
# smooth deterministic test fields
# ---------------------------------------------------------------------------

def low_frequency_basis(geom: DiscreteGeometry, count: int) -> np.ndarray:
    """(count, N) smooth non-constant fields for probes and perturbations.

    Mesh: coordinate harmonics evaluated at vertices; radial: Legendre
    polynomials in 2x - 1.  Deterministic, no randomness.
    """
    if geom.backend == "mesh":
        px, py, pz = geom.points.T
        pool = [px, py, pz, px * py, py * pz, pz * px,
                px**2 - py**2, 2 * pz**2 - px**2 - py**2,
                (px**2 - py**2) * pz, px * py * pz]
    else:
        u = 2.0 * geom.x - 1.0
        pool = [np.polynomial.legendre.Legendre.basis(l)(u)
                for l in range(1, 11)]
    if count > len(pool):
        raise ValueError(f"at most {len(pool)} basis fields available")
    return np.array(pool[:count])


def smooth_random_fields(geom: DiscreteGeometry, k: int, magnitude: float,
                         seed: int) -> np.ndarray:
    """(k, N) smooth pseudo-random fields with sup-norm = magnitude."""
    basis = low_frequency_basis(geom, 6)
    rng = np.random.default_rng(seed)
    fields = rng.standard_normal((k, basis.shape[0])) @ basis
    sup = np.abs(fields).max(axis=1, keepdims=True)
    sup[sup == 0.0] = 1.0
    return magnitude * fields / sup


def gradient_squared(geom: DiscreteGeometry, bg: BackgroundSplit, i: int,
                     phi: np.ndarray, v: np.ndarray) -> np.ndarray:
    """|dv|^2 measured in the solved metric omega_i, per node (n = 1 only).

    Mesh: P1 face gradients lumped to vertices, with the factor 1/2
    converting the Riemannian |grad v|^2 of omega_0 to the complex
    |dv|^2, then conformally rescaled by 1/m_i.  Radial: the invariant
    gradient x(1-x) v_x^2 divided by the radial eigenvalue field.
    """
    if geom.backend == "mesh":
        mesh = geom.mesh
        pts, tri = mesh.vertices, mesh.faces
        areas = mesh.face_areas()
        normals = np.cross(pts[tri[:, 1]] - pts[tri[:, 0]],
                           pts[tri[:, 2]] - pts[tri[:, 0]])
        normals /= np.linalg.norm(normals, axis=1)[:, None]
        edge_sum = (v[tri[:, 0], None] * (pts[tri[:, 2]] - pts[tri[:, 1]])
                    + v[tri[:, 1], None] * (pts[tri[:, 0]] - pts[tri[:, 2]])
                    + v[tri[:, 2], None] * (pts[tri[:, 1]] - pts[tri[:, 0]]))
        grads = np.cross(normals, edge_sum) / (2.0 * areas[:, None])
        g2_face = np.einsum("ij,ij->i", grads, grads)
        g2 = np.zeros(geom.num_nodes)
        np.add.at(g2, tri.ravel(), np.repeat(g2_face * areas / 3.0, 3))
        g2 /= geom.dA
        return 0.5 * g2 / ma_density(geom, bg, i, phi)
    x = geom.x
    _, rho = _radial_eigenfields(geom, bg, i, phi)
    return x * (1.0 - x) * (geom.d1 @ v) ** 2 / rho
