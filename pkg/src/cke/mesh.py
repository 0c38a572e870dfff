"""Triangle meshes: OFF I/O, topology checks, icosphere generation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParseError, TopologyError


@dataclass(frozen=True)
class TriangleMesh:
    """Closed oriented triangle mesh embedded in R^3.

    vertices: (V, 3) float array, faces: (F, 3) int array (counter-clockwise
    when seen from outside).
    """

    vertices: np.ndarray
    faces: np.ndarray

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    def edge_set(self):
        """Undirected edges as a set of sorted index pairs."""
        edges = set()
        for tri in self.faces:
            a, b, c = int(tri[0]), int(tri[1]), int(tri[2])
            edges.update({tuple(sorted((a, b))), tuple(sorted((b, c))),
                          tuple(sorted((c, a)))})
        return edges

    def euler_characteristic(self) -> int:
        return self.num_vertices - len(self.edge_set()) + self.num_faces

    def face_areas(self) -> np.ndarray:
        p = self.vertices
        t = self.faces
        cross = np.cross(p[t[:, 1]] - p[t[:, 0]], p[t[:, 2]] - p[t[:, 0]])
        return 0.5 * np.linalg.norm(cross, axis=1)


def _check_topology(faces: np.ndarray, num_vertices: int) -> None:
    """Every undirected edge in exactly 2 faces, each directed edge once."""
    directed = {}
    for fi, tri in enumerate(faces):
        a, b, c = (int(v) for v in tri)
        if len({a, b, c}) != 3:
            raise TopologyError(f"face {fi} repeats a vertex: {tri}")
        for e in ((a, b), (b, c), (c, a)):
            if e in directed:
                raise TopologyError(
                    f"directed edge {e} appears twice; mesh is non-manifold "
                    "or inconsistently oriented")
            directed[e] = fi
    for (a, b) in directed:
        if (b, a) not in directed:
            raise TopologyError(f"edge ({a},{b}) is a boundary edge; mesh is "
                                "not closed")


def validate_mesh(mesh: TriangleMesh) -> None:
    """Raise TopologyError unless the mesh is a closed oriented 2-manifold."""
    if mesh.faces.size and mesh.faces.max() >= mesh.num_vertices:
        raise ParseError("face index out of range")
    _check_topology(mesh.faces, mesh.num_vertices)


def load_off_mesh(path) -> TriangleMesh:
    """Load a triangle mesh from an OFF file.

    Format: a literal `OFF` line, a `NV NF NE` line, NV vertex lines
    `x y z`, NF face lines `3 i j k` (0-based). `#` starts a comment.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.readlines()
    except OSError as exc:
        raise ParseError(f"cannot read OFF file {path}: {exc}") from exc

    lines = []
    for ln in raw:
        ln = ln.split("#", 1)[0].strip()
        if ln:
            lines.append(ln)
    if not lines or lines[0] != "OFF":
        raise ParseError(f"{path}: missing OFF magic line")
    if len(lines) < 2:
        raise ParseError(f"{path}: missing count line")
    counts = lines[1].split()
    if len(counts) < 2:
        raise ParseError(f"{path}: count line needs NV NF [NE]")
    try:
        nv, nf = int(counts[0]), int(counts[1])
    except ValueError as exc:
        raise ParseError(f"{path}: bad counts {lines[1]!r}") from exc
    if len(lines) < 2 + nv + nf:
        raise ParseError(f"{path}: expected {nv} vertices and {nf} faces, "
                         f"got {len(lines) - 2} data lines")

    verts = np.empty((nv, 3), dtype=float)
    for i in range(nv):
        parts = lines[2 + i].split()
        if len(parts) != 3:
            raise ParseError(f"{path}: vertex line {i} must have 3 coords")
        try:
            verts[i] = [float(x) for x in parts]
        except ValueError as exc:
            raise ParseError(f"{path}: bad vertex line {i}") from exc

    faces = np.empty((nf, 3), dtype=np.int64)
    for i in range(nf):
        parts = lines[2 + nv + i].split()
        if len(parts) != 4 or parts[0] != "3":
            raise ParseError(f"{path}: face line {i} must read '3 i j k'")
        try:
            faces[i] = [int(x) for x in parts[1:]]
        except ValueError as exc:
            raise ParseError(f"{path}: bad face line {i}") from exc
        if faces[i].min() < 0 or faces[i].max() >= nv:
            raise ParseError(f"{path}: face line {i} index out of range")

    mesh = TriangleMesh(vertices=verts, faces=faces)
    _check_topology(faces, nv)
    return mesh


def write_off(path, mesh: TriangleMesh) -> None:
    """Write a mesh in the OFF format accepted by load_off_mesh."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.num_vertices} {mesh.num_faces} "
                 f"{len(mesh.edge_set())}\n")
        for v in mesh.vertices:
            fh.write("%.17g %.17g %.17g\n" % (v[0], v[1], v[2]))
        for f in mesh.faces:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriangleMesh:
    """Icosahedron subdivided `subdivisions` times, projected onto the sphere.

    Vertex counts: 12, 42, 162, 642, 2562, 10242 for subdivisions 0..5.
    """
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ], dtype=float)
    faces = np.array([
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ], dtype=np.int64)

    verts /= np.linalg.norm(verts, axis=1)[:, None]

    for _ in range(subdivisions):
        vlist = list(verts)
        midpoint = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                m = vlist[a] + vlist[b]
                m = m / np.linalg.norm(m)
                midpoint[key] = len(vlist)
                vlist.append(m)
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc),
                              (ab, bc, ca)])
        verts = np.array(vlist)
        faces = np.array(new_faces, dtype=np.int64)

    return TriangleMesh(vertices=radius * verts, faces=faces)
