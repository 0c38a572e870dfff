"""Inverse-constructed backgrounds with known exact solutions.

Given target potentials phi* and a path parameter t*, a background is
manufactured for which (phi*, t*) solves the coupled system exactly at the
discrete level.  The analytic target fields are spherical harmonics of the
embedding coordinates, whose continuum Laplacians (in the tr i ddbar
convention: half the Laplace-Beltrami eigenvalues) are known in closed
form, enabling discretization-order studies against the same targets.
"""

from __future__ import annotations

import numpy as np

from .errors import InfeasibleTarget, UnsupportedBackend
from .geometry import BackgroundSplit, DiscreteGeometry, integrate, \
    make_mesh_background
from .system import CoupledState, make_state

# eigenvalue lambda with Delta field = -lambda * field on the unit sphere
_HARMONICS = {
    "x": (lambda p: p[:, 0], 1.0),
    "y": (lambda p: p[:, 1], 1.0),
    "z": (lambda p: p[:, 2], 1.0),
    "xy": (lambda p: p[:, 0] * p[:, 1], 3.0),
    "yz": (lambda p: p[:, 1] * p[:, 2], 3.0),
    "zx": (lambda p: p[:, 2] * p[:, 0], 3.0),
    "x2-y2": (lambda p: p[:, 0] ** 2 - p[:, 1] ** 2, 3.0),
    "3z2-1": (lambda p: 3.0 * p[:, 2] ** 2 - 1.0, 3.0),
}


def harmonic_names() -> list[str]:
    return list(_HARMONICS)


def harmonic_field(points: np.ndarray, name: str) -> np.ndarray:
    """Evaluate a unit-sphere harmonic at the given points."""
    if name not in _HARMONICS:
        raise KeyError(f"unknown harmonic {name!r}; available: "
                       f"{sorted(_HARMONICS)}")
    return _HARMONICS[name][0](points)


def harmonic_target(points: np.ndarray, terms) -> np.ndarray:
    """Sum of (amplitude, name) harmonic terms at the points."""
    out = np.zeros(points.shape[0])
    for amplitude, name in terms:
        out += amplitude * harmonic_field(points, name)
    return out


def harmonic_target_laplacian(points: np.ndarray, terms) -> np.ndarray:
    """Exact continuum Delta of a harmonic target on the unit sphere."""
    out = np.zeros(points.shape[0])
    for amplitude, name in terms:
        fn, lam = _HARMONICS[name]
        out -= amplitude * lam * fn(points)
    return out


def manufacture_background(geom: DiscreteGeometry, target: np.ndarray,
                           t_star: float, sigma: int, C) \
        -> tuple[BackgroundSplit, CoupledState]:
    """Background for which `target` is the exact discrete solution at t*.

    The first target potential is shifted by the unique constant making
    integral e^{sigma t* sum phi*} dA = V (the solvability identity every
    solution satisfies), then f_i = C_i e^{sigma t* sum phi*} - Delta phi*_i.
    Returns the background together with the shifted target state; the
    residual of that state vanishes to round-off by construction.
    """
    if geom.backend != "mesh":
        raise UnsupportedBackend("manufactured backgrounds require the mesh "
                                 "backend")
    C = np.asarray(C, dtype=float)
    target = np.atleast_2d(np.asarray(target, dtype=float)).copy()
    if np.any(C <= 0.0):
        raise InfeasibleTarget("constants C_i must be positive")
    if not 0.0 <= t_star <= 1.0:
        raise ValueError("t_star must lie in [0, 1]")

    if t_star > 0.0:
        mass = integrate(geom, np.exp(sigma * t_star * target.sum(axis=0)))
        target[0] += np.log(geom.volume / mass) / (sigma * t_star)

    expo = np.exp(sigma * t_star * target.sum(axis=0))
    f = np.empty_like(target)
    for i in range(target.shape[0]):
        f[i] = C[i] * expo - geom.laplacian @ target[i]
    if np.any(f <= 0.0):
        raise InfeasibleTarget(
            f"manufactured density would reach min {f.min():.3e}; increase "
            "C_i or shrink the target")
    bg = make_mesh_background(geom, f, sigma)
    return bg, make_state(t_star, target, sigma)
