"""Rectangular bounding-plate discretization and its RWG degrees of freedom.

The plate lies in the z = 0 plane, centered on the origin.  Each grid cell
is split into two right triangles; every interior (shared) edge carries one
RWG basis function and is simultaneously one optimization variable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PlateSpec",
    "Mesh",
    "build_mesh",
    "save_mesh",
    "load_mesh",
    "central_gap_dof",
]


@dataclass(frozen=True)
class PlateSpec:
    """Bounding plate geometry plus its electrical size.

    ``ka`` fixes the wavenumber through the radius ``a`` of the sphere
    circumscribing the plate: k = ka / a with a = diag/2.
    """

    length_x: float
    length_y: float
    nx: int
    ny: int
    ka: float

    def __post_init__(self) -> None:
        if self.length_x <= 0 or self.length_y <= 0:
            raise ValueError("plate dimensions must be positive")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("nx, ny must be >= 1")
        if self.ka <= 0:
            raise ValueError("electrical size ka must be positive")

    @property
    def radius(self) -> float:
        return 0.5 * float(np.hypot(self.length_x, self.length_y))

    @property
    def wavenumber(self) -> float:
        return self.ka / self.radius


@dataclass(frozen=True)
class Mesh:
    """Fixed triangular discretization with interior-edge DOF bookkeeping.

    ``edges[n]`` holds the (lo, hi) vertex pair of interior edge n; the rows
    are sorted lexicographically so DOF numbering is reproducible.  For each
    edge, ``edge_tris[n] = (t_plus, t_minus)`` and ``edge_opposite[n]`` are
    the two adjacent triangles and their free vertices; reference current
    flows out of the plus triangle.
    """

    vertices: np.ndarray       # (nv, 3)
    triangles: np.ndarray      # (nt, 3) int
    edges: np.ndarray          # (ne, 2) int
    edge_tris: np.ndarray      # (ne, 2) int
    edge_opposite: np.ndarray  # (ne, 2) int
    edge_lengths: np.ndarray = field(repr=False, default=None)  # (ne,)

    @property
    def n_dof(self) -> int:
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        cross = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)


def _interior_edges(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Enumerate interior edges by brute-force adjacency counting."""
    edge_map: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for t, (i, j, k) in enumerate(triangles):
        for a, b, opp in ((i, j, k), (j, k, i), (k, i, j)):
            key = (min(a, b), max(a, b))
            edge_map.setdefault(key, []).append((t, int(opp)))
    edges, tris, opps = [], [], []
    for key in sorted(edge_map):
        owners = edge_map[key]
        if len(owners) > 2:
            raise ValueError(f"edge {key} shared by {len(owners)} triangles")
        if len(owners) == 2:
            (t0, o0), (t1, o1) = sorted(owners)
            edges.append(key)
            tris.append((t0, t1))
            opps.append((o0, o1))
    return (
        np.array(edges, dtype=np.int64).reshape(-1, 2),
        np.array(tris, dtype=np.int64).reshape(-1, 2),
        np.array(opps, dtype=np.int64).reshape(-1, 2),
    )


def _validate(mesh: Mesh) -> None:
    areas = mesh.triangle_areas()
    if np.any(areas <= 0):
        raise ValueError("mesh contains degenerate (zero-area) triangles")


def build_mesh(spec: PlateSpec) -> Mesh:
    """Structured mesh of 2*nx*ny right triangles over the plate."""
    xs = np.linspace(-spec.length_x / 2, spec.length_x / 2, spec.nx + 1)
    ys = np.linspace(-spec.length_y / 2, spec.length_y / 2, spec.ny + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)])

    def vid(i: int, j: int) -> int:
        return i * (spec.ny + 1) + j

    tris = []
    for i in range(spec.nx):
        for j in range(spec.ny):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            # split along the v00-v11 diagonal, both triangles CCW
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    triangles = np.array(tris, dtype=np.int64)

    edges, edge_tris, edge_opposite = _interior_edges(triangles)
    lengths = np.linalg.norm(
        vertices[edges[:, 0]] - vertices[edges[:, 1]], axis=1
    )
    mesh = Mesh(vertices, triangles, edges, edge_tris, edge_opposite, lengths)
    _validate(mesh)
    return mesh


def from_arrays(vertices: np.ndarray, triangles: np.ndarray) -> Mesh:
    """Build the DOF bookkeeping for an externally supplied triangle list."""
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    edges, edge_tris, edge_opposite = _interior_edges(triangles)
    lengths = np.linalg.norm(
        vertices[edges[:, 0]] - vertices[edges[:, 1]], axis=1
    )
    mesh = Mesh(vertices, triangles, edges, edge_tris, edge_opposite, lengths)
    _validate(mesh)
    return mesh


def central_gap_dof(mesh: Mesh) -> int:
    """Feed-edge pick for a centered delta gap: the horizontal interior
    edge (constant y, current crossing along the long axis) whose midpoint
    is closest to the plate center; falls back to the most central edge."""
    mids = mesh.vertices[mesh.edges].mean(axis=1)
    dy = np.abs(
        mesh.vertices[mesh.edges[:, 0], 1] - mesh.vertices[mesh.edges[:, 1], 1]
    )
    horizontal = dy < 1e-12
    dist = np.linalg.norm(mids[:, :2], axis=1)
    if horizontal.any():
        cand = np.flatnonzero(horizontal)
        return int(cand[np.argmin(dist[cand])])
    return int(np.argmin(dist))


def save_mesh(mesh: Mesh, path, fixed=(), gap=None) -> None:
    """Write the line-oriented ASCII mesh format (0-based indices).

    Records: ``v x y z``, ``t i j k``, optional ``fixed n`` and ``gap n``.
    """
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    for t in mesh.triangles:
        lines.append(f"t {t[0]} {t[1]} {t[2]}")
    for n in fixed:
        lines.append(f"fixed {n}")
    if gap is not None:
        lines.append(f"gap {gap}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path) -> tuple[Mesh, list[int], int | None]:
    """Read the ASCII mesh format; returns (mesh, fixed DOFs, gap DOF)."""
    verts: list[list[float]] = []
    tris: list[list[int]] = []
    fixed: list[int] = []
    gap: int | None = None
    with open(path, "r", encoding="ascii") as fh:
        for ln, raw in enumerate(fh, 1):
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag, rest = parts[0], parts[1:]
            if tag == "v":
                verts.append([float(x) for x in rest[:3]])
            elif tag == "t":
                tris.append([int(x) for x in rest[:3]])
            elif tag == "fixed":
                fixed.append(int(rest[0]))
            elif tag == "gap":
                gap = int(rest[0])
            else:
                raise ValueError(f"{path}:{ln}: unknown record {tag!r}")
    return from_arrays(np.array(verts), np.array(tris)), fixed, gap
