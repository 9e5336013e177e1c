"""Triangulations of the plate midplane, boundary tagging and macro quadrature."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import io


class PlateMeshError(ValueError):
    pass


class Triangulation:
    """Conforming triangle mesh with counterclockwise triangles.

    Local edge ``k`` of a triangle joins local vertices ``k+1`` and ``k+2``
    (mod 3), i.e. it is opposite vertex ``k``.
    """

    def __init__(self, vertices, triangles):
        V = np.asarray(vertices, dtype=float)
        T = np.asarray(triangles, dtype=np.int64)
        if V.ndim != 2 or V.shape[1] != 2 or T.ndim != 2 or T.shape[1] != 3:
            raise PlateMeshError("expected (n,2) vertices and (m,3) triangles")
        if len(T) == 0:
            raise PlateMeshError("empty triangulation")
        if T.min() < 0 or T.max() >= len(V):
            raise PlateMeshError("triangle references a missing vertex")
        a = _signed_area(V, T)
        if np.any(a == 0):
            raise PlateMeshError("degenerate triangle")
        flip = a < 0
        if np.any(flip):
            T = T.copy()
            T[flip] = T[flip][:, [0, 2, 1]]
        self.vertices = V
        self.triangles = T
        self._build_edges()

    def _build_edges(self):
        T = self.triangles
        loc = np.stack([T[:, [1, 2]], T[:, [2, 0]], T[:, [0, 1]]], axis=1)  # (nT,3,2)
        key = np.sort(loc.reshape(-1, 2), axis=1)
        edges, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        self.edges = edges
        self.tri_edges = inv.reshape(-1, 3)
        self.edge_boundary = counts == 1
        if np.any(counts > 2):
            raise PlateMeshError("non-manifold edge")
        p, q = self.vertices[edges[:, 0]], self.vertices[edges[:, 1]]
        d = q - p
        L = np.linalg.norm(d, axis=1)
        self.edge_length = L
        self.edge_tangent = d / L[:, None]
        self.edge_normal = np.column_stack([self.edge_tangent[:, 1], -self.edge_tangent[:, 0]])
        self.edge_midpoint = 0.5 * (p + q)

    # -- geometry -----------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def area(self):
        return _signed_area(self.vertices, self.triangles)

    @cached_property
    def centroid(self):
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def diameter(self):
        return self.edge_length[self.tri_edges].max(axis=1)

    @property
    def H(self) -> float:
        return float(self.diameter.max())

    @cached_property
    def inradius(self):
        perim = self.edge_length[self.tri_edges].sum(axis=1)
        return 2 * self.area / perim

    @property
    def shape_ratio(self) -> float:
        return float(np.max(self.diameter / self.inradius))

    @cached_property
    def min_angle(self) -> float:
        P = self.vertices[self.triangles]
        ang = []
        for k in range(3):
            u = P[:, (k + 1) % 3] - P[:, k]
            v = P[:, (k + 2) % 3] - P[:, k]
            c = np.sum(u * v, 1) / np.linalg.norm(u, axis=1) / np.linalg.norm(v, axis=1)
            ang.append(np.arccos(np.clip(c, -1, 1)))
        return float(np.min(ang))

    @cached_property
    def jacobians(self):
        """(nT,2,2) matrices ``J`` with ``x = z0 + J xi`` on the reference triangle."""
        P = self.vertices[self.triangles]
        return np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=-1)

    @cached_property
    def boundary_vertices(self):
        return np.unique(self.edges[self.edge_boundary])

    @cached_property
    def vertex_triangles(self):
        """Lists of incident triangles per vertex."""
        out = [[] for _ in range(self.n_vertices)]
        for t, tri in enumerate(self.triangles):
            for v in tri:
                out[v].append(t)
        return out


def _signed_area(V, T):
    P = V[T]
    d1, d2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def build_rect_mesh(width, height, nx, ny, origin=(0.0, 0.0)) -> Triangulation:
    """Structured mesh of ``[0,width] x [0,height]``; each quad split along one diagonal."""
    if nx < 1 or ny < 1:
        raise PlateMeshError("nx and ny must be at least 1")
    x = origin[0] + np.linspace(0.0, width, nx + 1)
    y = origin[1] + np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(x, y, indexing="ij")
    V = np.column_stack([X.ravel(), Y.ravel()])
    idx = lambda i, j: i * (ny + 1) + j  # noqa: E731
    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    return Triangulation(V, np.array(tris))


def uniform_refine(mesh: Triangulation) -> Triangulation:
    """Split each triangle into four by joining edge midpoints."""
    nV = mesh.n_vertices
    V = np.vstack([mesh.vertices, mesh.edge_midpoint])
    T = mesh.triangles
    m = nV + mesh.tri_edges  # midpoint of edge opposite local vertex k
    a, b, c = T[:, 0], T[:, 1], T[:, 2]
    ma, mb, mc = m[:, 0], m[:, 1], m[:, 2]
    children = np.concatenate([
        np.column_stack([a, mc, mb]),
        np.column_stack([mc, b, ma]),
        np.column_stack([mb, ma, c]),
        np.column_stack([ma, mb, mc]),
    ])
    return Triangulation(V, children)


# ---------------------------------------------------------------------------
# macro quadrature


@dataclass(frozen=True)
class MacroQuadratureRule:
    """Edge-midpoint rule, weights ``|T|/3``; exact on quadratics."""

    def points(self, mesh: Triangulation):
        """(nT,3,2) points; point ``k`` is the midpoint of local edge ``k``."""
        return mesh.edge_midpoint[mesh.tri_edges]

    def weights(self, mesh: Triangulation):
        return np.repeat(mesh.area[:, None] / 3.0, 3, axis=1)

    # barycentric coordinates of the points on every triangle
    bary = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])


MACRO_RULE = MacroQuadratureRule()


def macro_integrate(mesh: Triangulation, f, rule: MacroQuadratureRule = MACRO_RULE) -> float:
    pts = rule.points(mesh)
    w = rule.weights(mesh)
    vals = np.asarray(f(pts.reshape(-1, 2)), dtype=float).reshape(w.shape)
    return float(np.sum(w * vals))


# ---------------------------------------------------------------------------
# Dirichlet data


_SIDES = ("left", "right", "bottom", "top")


def _side_mask(mesh: Triangulation, side: str):
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    tol = 1e-10 * max(1.0, float(np.max(hi - lo)))
    E = mesh.edges
    P, Q = mesh.vertices[E[:, 0]], mesh.vertices[E[:, 1]]
    axis, val = {"left": (0, lo[0]), "right": (0, hi[0]), "bottom": (1, lo[1]), "top": (1, hi[1])}[side]
    return mesh.edge_boundary & (np.abs(P[:, axis] - val) < tol) & (np.abs(Q[:, axis] - val) < tol)


def dirichlet_edges(mesh: Triangulation, selector):
    """Boolean mask of boundary edges picked by ``selector``.

    ``selector`` may be ``None``/``"none"``/empty (free boundary), ``"all"``,
    one of ``left, right, bottom, top``, a list of those, or a predicate on
    edge midpoints.
    """
    if selector is None or (isinstance(selector, (list, tuple)) and len(selector) == 0) or selector == "none":
        return np.zeros(len(mesh.edges), dtype=bool)
    if callable(selector):
        return mesh.edge_boundary & np.array([bool(selector(z)) for z in mesh.edge_midpoint])
    if isinstance(selector, str):
        selector = [selector]
    mask = np.zeros(len(mesh.edges), dtype=bool)
    for s in selector:
        if s == "all":
            mask |= mesh.edge_boundary
        elif s in _SIDES:
            mask |= _side_mask(mesh, s)
        else:
            raise PlateMeshError(f"unknown boundary selector {s!r}")
    return mask


def tag_dirichlet(mesh: Triangulation, selector, required: bool = False):
    """Vertex indices on the clamped boundary part."""
    mask = dirichlet_edges(mesh, selector)
    if required and not np.any(mask):
        raise PlateMeshError(f"boundary selector {selector!r} matches no edge")
    return np.unique(mesh.edges[mask])


@dataclass(frozen=True)
class DirichletData:
    """Clamped nodes with the affine isometry ``s -> R (s,0) + b`` (R is 3x2)."""

    nodes: np.ndarray
    R: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, float)
        if R.shape != (3, 2) or not np.allclose(R.T @ R, np.eye(2), atol=1e-12):
            raise PlateMeshError("Dirichlet gradient must have orthonormal columns")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "b", np.asarray(self.b, float))
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=np.int64))

    def value(self, z):
        return np.asarray(z, float) @ self.R.T + self.b

    @classmethod
    def flat(cls, nodes):
        return cls(nodes, np.eye(3)[:, :2], np.zeros(3))


def make_dirichlet(mesh: Triangulation, selector, R=None, b=None, required=False) -> DirichletData:
    nodes = tag_dirichlet(mesh, selector, required=required)
    R = np.eye(3)[:, :2] if R is None else np.asarray(R, float)
    b = np.zeros(3) if b is None else np.asarray(b, float)
    return DirichletData(nodes, R, b)


# ---------------------------------------------------------------------------
# file IO


def read_mesh(path) -> Triangulation:
    """ASCII format: vertex count, ``x y`` lines, triangle count, ``i j k`` lines (0-based)."""
    tokens = Path(path).read_text().split()
    try:
        n = int(tokens[0])
        V = np.array(tokens[1:1 + 2 * n], dtype=float).reshape(n, 2)
        m = int(tokens[1 + 2 * n])
        T = np.array(tokens[2 + 2 * n:2 + 2 * n + 3 * m], dtype=np.int64).reshape(m, 3)
    except (IndexError, ValueError) as exc:
        raise PlateMeshError(f"malformed mesh file {path}: {exc}") from None
    return Triangulation(V, T)


def write_mesh(path, mesh: Triangulation):
    lines = [str(mesh.n_vertices)]
    lines += [f"{io.fmt(x)} {io.fmt(y)}" for x, y in mesh.vertices]
    lines.append(str(mesh.n_triangles))
    lines += [" ".join(str(i) for i in t) for t in mesh.triangles]
    return io.atomic_write(path, "\n".join(lines) + "\n")


def export_vtk(path, mesh: Triangulation, point_data=None, cell_data=None):
    return io.write_vtk(path, mesh.vertices, mesh.triangles, io.VTK_TRIANGLE, point_data, cell_data)
