"""Discrete Kirchhoff triangle: reduced cubic deformations and the P2 discrete gradient.

Degrees of freedom per vertex are the value ``w(z) in R^3`` and the
gradient ``grad w(z) in R^{3x2}``.  On each triangle every component is the
reduced cubic fixed by these nine scalars plus the center-of-mass condition
``6 p(z_T) = sum_i (2 p(z_i) - grad p(z_i).(z_i - z_T))``.

The discrete gradient is a P2 field stored by its six Lagrange nodes
(vertices first, then midpoints of local edges 0, 1, 2).  The scalar
operators below act on the local vector ``(w_a, d1 w_a, d2 w_a)`` for
``a = 0, 1, 2`` and are shared by all three components.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import io
from .plate import Triangulation

# ---------------------------------------------------------------------------
# reference reduced cubic

_MONO = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)]
_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def _mono(xi):
    xi = np.atleast_2d(xi)
    return np.stack([xi[:, 0] ** a * xi[:, 1] ** b for a, b in _MONO], axis=-1)


def _mono_grad(xi):
    xi = np.atleast_2d(xi)
    x, y = xi[:, 0], xi[:, 1]
    dx = [a * x ** max(a - 1, 0) * y ** b if a else 0 * x for a, b in _MONO]
    dy = [b * x ** a * y ** max(b - 1, 0) if b else 0 * x for a, b in _MONO]
    return np.stack([np.stack(dx, -1), np.stack(dy, -1)], axis=-1)  # (P,10,2)


@lru_cache(maxsize=1)
def reference_basis():
    """(10,9) monomial coefficients of the nine reduced cubic shape functions."""
    V = np.zeros((10, 10))
    vals = _mono(_REF_VERTS)
    grads = _mono_grad(_REF_VERTS)
    for a in range(3):
        V[3 * a] = vals[a]
        V[3 * a + 1] = grads[a, :, 0]
        V[3 * a + 2] = grads[a, :, 1]
    c = _REF_VERTS.mean(axis=0)
    row = 6 * _mono(c)[0]
    for a in range(3):
        row = row - 2 * vals[a] + grads[a] @ (_REF_VERTS[a] - c)
    V[9] = row
    return np.linalg.inv(V)[:, :9]


def _dof_transform(mesh: Triangulation):
    """(nT,9,9) map from physical to reference local DOFs."""
    J = mesh.jacobians
    Tm = np.zeros((mesh.n_triangles, 9, 9))
    for a in range(3):
        Tm[:, 3 * a, 3 * a] = 1.0
        Tm[:, 3 * a + 1:3 * a + 3, 3 * a + 1:3 * a + 3] = np.swapaxes(J, 1, 2)
    return Tm


# ---------------------------------------------------------------------------
# deformation container


@dataclass
class DktDeformation:
    """Nodal values ``(N,3)`` and gradients ``(N,3,2)`` on a triangulation."""

    mesh: Triangulation
    values: np.ndarray
    grads: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.grads = np.asarray(self.grads, dtype=float)
        n = self.mesh.n_vertices
        if self.values.shape != (n, 3) or self.grads.shape != (n, 3, 2):
            raise ValueError("deformation arrays do not match the mesh")

    def to_vector(self):
        """Flat DOF vector, per vertex ``(u, F[:,0], F[:,1])``."""
        return np.concatenate([self.values, self.grads[:, :, 0], self.grads[:, :, 1]], axis=1).ravel()

    @classmethod
    def from_vector(cls, mesh, x):
        X = np.asarray(x, dtype=float).reshape(mesh.n_vertices, 9)
        return cls(mesh, X[:, 0:3].copy(), np.stack([X[:, 3:6], X[:, 6:9]], axis=-1))

    def copy(self):
        return DktDeformation(self.mesh, self.values.copy(), self.grads.copy())

    def local_dofs(self):
        """(nT,3,9) physical local DOFs, one row per component."""
        T = self.mesh.triangles
        D = np.empty((len(T), 3, 9))
        for a in range(3):
            D[:, :, 3 * a] = self.values[T[:, a]]
            D[:, :, 3 * a + 1] = self.grads[T[:, a], :, 0]
            D[:, :, 3 * a + 2] = self.grads[T[:, a], :, 1]
        return D

    def isometry_violation(self):
        """Per-node Frobenius norm of ``F^T F - I``."""
        G = np.einsum("nik,nil->nkl", self.grads, self.grads) - np.eye(2)
        return np.linalg.norm(G, axis=(1, 2))

    def is_admissible(self, dirichlet=None, tol=1e-12) -> bool:
        if np.max(self.isometry_violation(), initial=0.0) > tol:
            return False
        if dirichlet is not None and len(dirichlet.nodes):
            z = self.mesh.vertices[dirichlet.nodes]
            if np.max(np.abs(self.values[dirichlet.nodes] - dirichlet.value(z))) > tol:
                return False
            if np.max(np.abs(self.grads[dirichlet.nodes] - dirichlet.R)) > tol:
                return False
        return True

    def export_vtk(self, path):
        n = discrete_normal(self).values
        return io.write_vtk(path, self.values, self.mesh.triangles, io.VTK_TRIANGLE,
                            point_data={"normal": n})


# ---------------------------------------------------------------------------
# analytic deformations


@dataclass(frozen=True)
class AnalyticDeformation:
    """Smooth map ``S -> R^3`` given by value, gradient and Hessian callables."""

    value: callable
    grad: callable
    hess: callable = None

    def normal(self, s):
        g = self.grad(s)
        return np.cross(g[..., 0], g[..., 1])


def affine_map(R, b) -> AnalyticDeformation:
    R = np.asarray(R, float)
    b = np.asarray(b, float)
    return AnalyticDeformation(
        lambda s: np.asarray(s) @ R.T + b,
        lambda s: np.broadcast_to(R, (len(np.atleast_2d(s)), 3, 2)).copy(),
        lambda s: np.zeros((len(np.atleast_2d(s)), 3, 2, 2)),
    )


def cylinder_map(kappa=1.0, axis=1, anchored=False) -> AnalyticDeformation:
    """Isometric roll with curvature ``kappa`` whose generators run along ``axis``.

    For ``kappa = 1, axis = 1`` this is ``(sin s1, s2, cos s1)``.  With
    ``anchored`` the map and its gradient agree with the flat embedding at
    the origin.
    """
    if kappa == 0:
        return affine_map(np.eye(3)[:, :2], np.zeros(3))
    k = float(kappa)
    bend = 1 - axis  # in-plane coordinate that bends
    shift = 1.0 / k if anchored else 0.0

    def value(s):
        s = np.atleast_2d(s)
        t = s[:, bend]
        out = np.empty((len(s), 3))
        out[:, bend] = np.sin(k * t) / k
        out[:, axis] = s[:, axis]
        out[:, 2] = np.cos(k * t) / k - shift
        return out

    def grad(s):
        s = np.atleast_2d(s)
        t = s[:, bend]
        G = np.zeros((len(s), 3, 2))
        G[:, bend, bend] = np.cos(k * t)
        G[:, 2, bend] = -np.sin(k * t)
        G[:, axis, axis] = 1.0
        return G

    def hess(s):
        s = np.atleast_2d(s)
        t = s[:, bend]
        Hs = np.zeros((len(s), 3, 2, 2))
        Hs[:, bend, bend, bend] = -k * np.sin(k * t)
        Hs[:, 2, bend, bend] = -k * np.cos(k * t)
        return Hs

    return AnalyticDeformation(value, grad, hess)


def quadratic_map(A, c=None, R=None) -> AnalyticDeformation:
    """Componentwise quadratic ``u_i = 1/2 s.A_i s + R_i.s + c_i`` with symmetric ``A_i``."""
    A = np.asarray(A, float)
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    R = np.zeros((3, 2)) if R is None else np.asarray(R, float)
    c = np.zeros(3) if c is None else np.asarray(c, float)
    return AnalyticDeformation(
        lambda s: 0.5 * np.einsum("pj,ijk,pk->pi", np.atleast_2d(s), A, np.atleast_2d(s)) + np.atleast_2d(s) @ R.T + c,
        lambda s: np.einsum("ijk,pk->pij", A, np.atleast_2d(s)) + R,
        lambda s: np.broadcast_to(A, (len(np.atleast_2d(s)), 3, 2, 2)).copy(),
    )


def interpolate_dkt(u, mesh: Triangulation) -> DktDeformation:
    """Nodal interpolant: values and gradients of ``u`` at the vertices."""
    if isinstance(u, tuple):
        u = AnalyticDeformation(*u)
    z = mesh.vertices
    return DktDeformation(mesh, np.asarray(u.value(z), float), np.asarray(u.grad(z), float))


# ---------------------------------------------------------------------------
# evaluation of the reduced cubic


def _xi(bary):
    bary = np.asarray(bary, float)
    return bary[..., 1:3]


def eval_deformation(w: DktDeformation, T, bary, with_grad=False):
    """Value (and exact gradient) of the reduced cubic on triangle ``T``.

    ``T`` may be an index or an index array; ``bary`` is one barycentric
    point or an array of them (one per requested triangle).
    """
    T = np.atleast_1d(T)
    bary = np.broadcast_to(np.asarray(bary, float), (len(T), 3))
    C = reference_basis()
    mesh = w.mesh
    D = w.local_dofs()[T]  # (k,3,9)
    Tm = _dof_transform(mesh)[T]
    ref = np.einsum("kab,kib->kia", Tm, D)
    xi = _xi(bary)
    phi = _mono(xi) @ C  # (k,9)
    val = np.einsum("ka,kia->ki", phi, ref)
    if not with_grad:
        return val if len(val) > 1 else val[0]
    dphi = np.einsum("kmd,ma->kad", _mono_grad(xi), C)  # (k,9,2)
    gref = np.einsum("kad,kia->kid", dphi, ref)
    Jinv = np.linalg.inv(mesh.jacobians[T])
    g = np.einsum("kid,kdj->kij", gref, Jinv)
    if len(val) == 1:
        return val[0], g[0]
    return val, g


# ---------------------------------------------------------------------------
# discrete gradient


@dataclass(frozen=True)
class ThetaCoeffs:
    """P2 nodal values ``(nT,6,3,2)`` of the discrete gradient."""

    mesh: Triangulation
    nodes: np.ndarray
    triangles: np.ndarray

    def evaluate(self, bary):
        """(nT,3,2) values at one barycentric point on every stored triangle."""
        return np.einsum("n,tnik->tik", p2_values(bary), self.nodes)


def theta_operator(mesh: Triangulation):
    """(nT,6,2,9): scalar map from local DOFs to P2 nodal values of the discrete gradient."""
    P = mesh.vertices[mesh.triangles]
    nT = mesh.n_triangles
    op = np.zeros((nT, 6, 2, 9))
    for a in range(3):
        op[:, a, 0, 3 * a + 1] = 1.0
        op[:, a, 1, 3 * a + 2] = 1.0
    for k in range(3):
        a, b = (k + 1) % 3, (k + 2) % 3
        d = P[:, b] - P[:, a]
        L = np.linalg.norm(d, axis=1)
        t = d / L[:, None]
        n = np.column_stack([t[:, 1], -t[:, 0]])
        # cubic Hermite derivative at the edge midpoint
        rt = np.zeros((nT, 9))
        rt[:, 3 * a] = -1.5 / L
        rt[:, 3 * b] = 1.5 / L
        rt[:, 3 * a + 1:3 * a + 3] = -0.25 * t
        rt[:, 3 * b + 1:3 * b + 3] = -0.25 * t
        rn = np.zeros((nT, 9))
        rn[:, 3 * a + 1:3 * a + 3] = 0.5 * n
        rn[:, 3 * b + 1:3 * b + 3] = 0.5 * n
        op[:, 3 + k] = t[:, :, None] * rt[:, None, :] + n[:, :, None] * rn[:, None, :]
    return op


def barycentric_gradients(mesh: Triangulation):
    """(nT,3,2) constant gradients of the barycentric coordinates."""
    Jinv = np.linalg.inv(mesh.jacobians)  # rows are grad xi_1, grad xi_2
    g1, g2 = Jinv[:, 0, :], Jinv[:, 1, :]
    return np.stack([-g1 - g2, g1, g2], axis=1)


def p2_values(bary):
    lam = np.asarray(bary, float)
    out = [lam[a] * (2 * lam[a] - 1) for a in range(3)]
    out += [4 * lam[(k + 1) % 3] * lam[(k + 2) % 3] for k in range(3)]
    return np.array(out)


def p2_gradients(mesh: Triangulation, bary):
    """(nT,6,2) gradients of the P2 Lagrange basis at one barycentric point."""
    lam = np.asarray(bary, float)
    gl = barycentric_gradients(mesh)
    out = [(4 * lam[a] - 1) * gl[:, a] for a in range(3)]
    for k in range(3):
        b, c = (k + 1) % 3, (k + 2) % 3
        out.append(4 * (lam[b] * gl[:, c] + lam[c] * gl[:, b]))
    return np.stack(out, axis=1)


def hessian_operator(mesh: Triangulation, bary, theta_op=None):
    """(nT,2,2,9): scalar map from local DOFs to ``d_j theta_k`` at a barycentric point."""
    op = theta_operator(mesh) if theta_op is None else theta_op
    return np.einsum("tnj,tnkd->tjkd", p2_gradients(mesh, bary), op)


def gradient_operator(mesh: Triangulation, bary, theta_op=None):
    """(nT,2,9): scalar map from local DOFs to the discrete gradient at a point."""
    op = theta_operator(mesh) if theta_op is None else theta_op
    return np.einsum("n,tnkd->tkd", p2_values(bary), op)


def discrete_gradient(w: DktDeformation, T=None) -> ThetaCoeffs:
    mesh = w.mesh
    T = np.arange(mesh.n_triangles) if T is None else np.atleast_1d(T)
    op = theta_operator(mesh)[T]
    D = w.local_dofs()[T]
    nodes = np.einsum("tnkd,tid->tnik", op, D)
    return ThetaCoeffs(mesh, nodes, T)


def discrete_hessian(theta: ThetaCoeffs, T, bary):
    """``A[i,j,k] = d_j theta_{ik}`` on stored triangle ``T`` (position in ``theta.triangles``)."""
    g = p2_gradients(theta.mesh, bary)[theta.triangles[T]]
    return np.einsum("nj,nik->ijk", g, theta.nodes[T])


def discrete_hessian_all(w: DktDeformation, bary):
    """(nT,3,2,2) discrete Hessian on every triangle at one barycentric point."""
    H = hessian_operator(w.mesh, bary)
    return np.einsum("tjkd,tid->tijk", H, w.local_dofs())


# ---------------------------------------------------------------------------
# normals


@dataclass(frozen=True)
class NormalField:
    """P1 field with nodal values ``n(z) = d1 w(z) x d2 w(z)``."""

    mesh: Triangulation
    values: np.ndarray

    def evaluate(self, T, bary):
        T = np.atleast_1d(T)
        return np.einsum("a,kai->ki", np.asarray(bary, float), self.values[self.mesh.triangles[T]])

    def at_edge_midpoints(self):
        """(nT,3,3) values at the macro quadrature points."""
        V = self.values[self.mesh.triangles]
        return 0.5 * np.stack([V[:, 1] + V[:, 2], V[:, 2] + V[:, 0], V[:, 0] + V[:, 1]], axis=1)


def discrete_normal(w: DktDeformation) -> NormalField:
    return NormalField(w.mesh, np.cross(w.grads[:, :, 0], w.grads[:, :, 1]))


# ---------------------------------------------------------------------------
# diagnostics

_A1, _B1 = (6 - np.sqrt(15)) / 21, (9 + 2 * np.sqrt(15)) / 21
_A2, _B2 = (6 + np.sqrt(15)) / 21, (9 - 2 * np.sqrt(15)) / 21
_W1, _W2 = (155 - np.sqrt(15)) / 1200, (155 + np.sqrt(15)) / 1200
SEVEN_POINT_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _A1, _B1], [_A1, _B1, _A1], [_B1, _A1, _A1],
    [_A2, _A2, _B2], [_A2, _B2, _A2], [_B2, _A2, _A2],
])
SEVEN_POINT_WEIGHTS = np.array([9 / 40, _W1, _W1, _W1, _W2, _W2, _W2])  # fractions of |T|


def isometry_defect(w: DktDeformation) -> float:
    """``||theta^T theta - I||_{L1}`` with a degree-5 seven-point rule."""
    mesh = w.mesh
    op = theta_operator(mesh)
    D = w.local_dofs()
    total = 0.0
    for lam, wt in zip(SEVEN_POINT_BARY, SEVEN_POINT_WEIGHTS):
        th = np.einsum("tkd,tid->tik", gradient_operator(mesh, lam, op), D)
        G = np.einsum("tik,til->tkl", th, th) - np.eye(2)
        total += wt * np.sum(mesh.area * np.linalg.norm(G, axis=(1, 2)))
    return float(total)


def l2_norm_sq(mesh: Triangulation, fields_at_points):
    """Squared L2 norm with the seven-point rule; ``fields_at_points[q]`` is (nT,...)."""
    total = 0.0
    for F, wt in zip(fields_at_points, SEVEN_POINT_WEIGHTS):
        F = np.asarray(F).reshape(mesh.n_triangles, -1)
        total += wt * np.sum(mesh.area * np.sum(F ** 2, axis=1))
    return float(total)


def gradient_error_l2(w: DktDeformation, grad_fn):
    """``||grad_H w - grad u||_{L2}`` against an analytic gradient."""
    mesh = w.mesh
    op = theta_operator(mesh)
    D = w.local_dofs()
    vals = []
    for lam in SEVEN_POINT_BARY:
        th = np.einsum("tkd,tid->tik", gradient_operator(mesh, lam, op), D)
        z = np.einsum("a,tad->td", lam, mesh.vertices[mesh.triangles])
        vals.append(th - grad_fn(z))
    return np.sqrt(l2_norm_sq(mesh, vals))


def cubic_gradient_error_l2(w: DktDeformation):
    """``||grad_H w - grad w||_{L2}`` between the discrete and the exact cubic gradient."""
    mesh = w.mesh
    op = theta_operator(mesh)
    D = w.local_dofs()
    T = np.arange(mesh.n_triangles)
    vals = []
    for lam in SEVEN_POINT_BARY:
        th = np.einsum("tkd,tid->tik", gradient_operator(mesh, lam, op), D)
        _, g = eval_deformation(w, T, lam, with_grad=True)
        vals.append(th - g.reshape(th.shape))
    return np.sqrt(l2_norm_sq(mesh, vals))


def cubic_gradient_l2(w: DktDeformation):
    """``||grad w||_{L2}`` of the reduced cubic itself."""
    mesh = w.mesh
    T = np.arange(mesh.n_triangles)
    vals = []
    for lam in SEVEN_POINT_BARY:
        _, g = eval_deformation(w, T, lam, with_grad=True)
        vals.append(g.reshape(mesh.n_triangles, -1))
    return np.sqrt(l2_norm_sq(mesh, vals))


def discrete_gradient_l2(w: DktDeformation):
    mesh = w.mesh
    op = theta_operator(mesh)
    D = w.local_dofs()
    vals = [np.einsum("tkd,tid->tik", gradient_operator(mesh, lam, op), D) for lam in SEVEN_POINT_BARY]
    return np.sqrt(l2_norm_sq(mesh, vals))


def discrete_hessian_l2(w: DktDeformation, sym_only=False):
    """``||grad grad_H w||_{L2}`` (exact: the Hessian is affine per triangle)."""
    mesh = w.mesh
    op = theta_operator(mesh)
    D = w.local_dofs()
    vals = []
    for lam in SEVEN_POINT_BARY:
        A = np.einsum("tjkd,tid->tijk", hessian_operator(mesh, lam, op), D)
        if sym_only:
            A = 0.5 * (A + np.swapaxes(A, 2, 3))
        vals.append(A)
    return np.sqrt(l2_norm_sq(mesh, vals))
