"""Discrete reformulated bending energy, its exact gradient and reference energies.

At every macro quadrature point ``q`` (edge midpoints, weight ``|T|/3``) the
density is ``<L A, A + 2 n (x) B_eff>`` with ``A`` the discrete Hessian and
``n`` the interpolated normal.  Writing ``a_i`` for the Sym(2) coefficients
of slab ``e_i . A`` this is ``sum_i a_i.Q a_i + 2 sum_i n_i a_i.Q b``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import dkt, rve
from .plate import MACRO_RULE, Triangulation


class CacheMissError(KeyError):
    pass


# ---------------------------------------------------------------------------
# coefficient cache


@dataclass(frozen=True)
class CoefficientField:
    """Effective coefficients at the macro quadrature points of one mesh.

    Arrays are indexed ``[triangle, point]``; point ``k`` is the midpoint of
    local edge ``k``.
    """

    points: np.ndarray  # (nT,3,2)
    Qhat: np.ndarray  # (nT,3,3,3)
    Beff: np.ndarray  # (nT,3,2,2)
    weights: np.ndarray  # (nT,3)
    provenance: np.ndarray  # (nT,3) strings
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("points", "Qhat", "Beff", "weights"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not np.allclose(self.Qhat, np.swapaxes(self.Qhat, -1, -2), atol=1e-12):
            raise ValueError("Qhat must be symmetric")
        if np.min(np.linalg.eigvalsh(self.Qhat)) <= 0:
            raise ValueError("Qhat must be positive definite")

    @property
    def b(self):
        """(nT,3,3) Sym(2) coefficients of B_eff."""
        return rve.sym_coeffs(self.Beff)

    def check_covers(self, mesh: Triangulation):
        pts = MACRO_RULE.points(mesh)
        if self.points.shape != pts.shape:
            raise CacheMissError(f"coefficient cache has {self.points.shape[0]} triangles, "
                                 f"mesh has {mesh.n_triangles}")
        bad = np.argwhere(np.any(np.abs(self.points - pts) > 1e-12, axis=-1))
        if len(bad):
            listed = ", ".join(f"T{t}/q{q} at {tuple(pts[t, q])}" for t, q in bad[:10])
            raise CacheMissError(f"{len(bad)} quadrature points missing from cache: {listed}")

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_functions(cls, mesh: Triangulation, qhat_fn, beff_fn, tag="analytic"):
        pts = MACRO_RULE.points(mesh)
        flat = pts.reshape(-1, 2)
        Q = np.array([qhat_fn(s) for s in flat]).reshape(*pts.shape[:2], 3, 3)
        B = np.array([beff_fn(s) for s in flat]).reshape(*pts.shape[:2], 2, 2)
        return cls(pts, Q, B, MACRO_RULE.weights(mesh), np.full(pts.shape[:2], tag, dtype=object))

    @classmethod
    def constant(cls, mesh: Triangulation, Qhat, Beff=None, tag="analytic"):
        Qhat = np.asarray(Qhat, float)
        Beff = np.zeros((2, 2)) if Beff is None else np.asarray(Beff, float)
        pts = MACRO_RULE.points(mesh)
        shp = pts.shape[:2]
        return cls(pts, np.broadcast_to(Qhat, shp + (3, 3)), np.broadcast_to(Beff, shp + (2, 2)),
                   MACRO_RULE.weights(mesh), np.full(shp, tag, dtype=object))

    @classmethod
    def isotropic(cls, mesh: Triangulation, lam=1.0, mu=1.0, Beff=None):
        """Homogeneous isotropic plate via the closed-form relaxation."""
        return cls.constant(mesh, rve.analytic_qhat_isotropic(lam, mu), Beff)

    @classmethod
    def from_cell_solves(cls, mesh: Triangulation, spec, gamma, rve_mesh, rule=rve.MICRO_RULE,
                         threads=1, tol=1e-12):
        """Solve cell problems once per distinct macro state among the quadrature points."""
        pts = MACRO_RULE.points(mesh)
        flat = pts.reshape(-1, 2)
        keys = np.empty(len(flat), dtype=np.int64)
        index, samples = {}, []
        for j, s in enumerate(flat):
            key = spec.macro_key(s)
            if key not in index:
                index[key] = len(samples)
                samples.append(s)
            keys[j] = index[key]
        samples = np.array(samples)

        def work(s):
            return rve.solve_correctors(spec, s, gamma, rve_mesh, rule, tol)

        if threads > 1 and len(samples) > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                outs = list(ex.map(work, samples))
        else:
            outs = [work(s) for s in samples]
        Q = np.array([o.Qhat for o in outs])[keys].reshape(*pts.shape[:2], 3, 3)
        B = np.array([o.Beff for o in outs])[keys].reshape(*pts.shape[:2], 2, 2)
        tags = np.array([f"cell-solve at s=({s[0]:.6g},{s[1]:.6g})" for s in samples], dtype=object)[keys]
        info = {"n_cell_solves": len(samples), "h": rve_mesh.h, "gamma": gamma}
        return cls(pts, Q, B, MACRO_RULE.weights(mesh), tags.reshape(pts.shape[:2]), info)


# ---------------------------------------------------------------------------
# pointwise forms


def contract_third_order(Qhat, A, C) -> float:
    """``sum_i <L (e_i.A), e_i.C>`` for 3x2x2 tensors."""
    a = rve.sym_coeffs(np.asarray(A, float))
    c = rve.sym_coeffs(np.asarray(C, float))
    return float(np.einsum("ik,kl,il->", a, np.asarray(Qhat, float), c))


def bending_density_third_order(Qhat, A) -> float:
    return contract_third_order(Qhat, A, A)


# ---------------------------------------------------------------------------
# assembly


@dataclass
class EnergyReport:
    total: float
    per_triangle: np.ndarray
    quadratic: float
    coupling: float
    offset: float | None = None

    @property
    def total_with_offset(self):
        return None if self.offset is None else self.total + self.offset

    def to_dict(self):
        return {
            "total": self.total,
            "quadratic": self.quadratic,
            "coupling": self.coupling,
            "offset": self.offset,
            "total_with_offset": self.total_with_offset,
            "per_triangle": self.per_triangle,
        }


class EnergyAssembler:
    """Precomputed operators for repeated energy and gradient evaluations on one mesh."""

    def __init__(self, mesh: Triangulation, coeffs: CoefficientField):
        coeffs.check_covers(mesh)
        self.mesh = mesh
        self.coeffs = coeffs
        theta = dkt.theta_operator(mesh)
        H = np.stack([dkt.hessian_operator(mesh, lam, theta) for lam in MACRO_RULE.bary], axis=1)
        self.Bq = rve.sym_coeffs(np.moveaxis(H, -1, 2)).transpose(0, 1, 3, 2)  # (nT,3q,3c,9)
        self.w = coeffs.weights  # (nT,3)
        self.Q = coeffs.Qhat
        self.g = np.einsum("tqkl,tql->tqk", self.Q, coeffs.b)  # Q b
        tri = mesh.triangles
        # vertices averaged into quadrature point k: endpoints of local edge k
        self.qverts = np.stack([tri[:, [1, 2]], tri[:, [2, 0]], tri[:, [0, 1]]], axis=1)

    def _hessian_coeffs(self, w: dkt.DktDeformation):
        D = w.local_dofs()
        return D, np.einsum("tqcd,tid->tqic", self.Bq, D)  # (nT,3q,3i,3c)

    def _normals(self, w: dkt.DktDeformation):
        N = np.cross(w.grads[:, :, 0], w.grads[:, :, 1])
        return N, 0.5 * N[self.qverts].sum(axis=2)  # (nT,3q,3)

    def energy(self, w: dkt.DktDeformation, with_offset=False) -> EnergyReport:
        _, a = self._hessian_coeffs(w)
        _, nq = self._normals(w)
        quad = np.einsum("tq,tqic,tqcl,tqil->t", self.w, a, self.Q, a)
        coup = 2 * np.einsum("tq,tqi,tqic,tqc->t", self.w, nq, a, self.g)
        per = quad + coup
        off = reformulation_offset(self.coeffs) if with_offset else None
        return EnergyReport(float(np.sum(per)), per, float(np.sum(quad)), float(np.sum(coup)), off)

    def gradient(self, w: dkt.DktDeformation):
        """(N,9) derivative, per vertex ``(u, F[:,0], F[:,1])``."""
        mesh = self.mesh
        _, a = self._hessian_coeffs(w)
        _, nq = self._normals(w)
        Qa = np.einsum("tqcl,tqil->tqic", self.Q, a)
        # local scalar DOF gradient per component
        rhs = 2 * (Qa + nq[..., None] * self.g[:, :, None, :])
        gl = np.einsum("tq,tqcd,tqic->tid", self.w, self.Bq, rhs)
        G = np.zeros((mesh.n_vertices, 9))
        tri = mesh.triangles
        comp = np.arange(3)
        for v in range(3):
            rows = np.repeat(tri[:, v], 3)
            np.add.at(G, (rows, np.tile(comp, len(tri))), gl[:, :, 3 * v].ravel())
            np.add.at(G, (rows, np.tile(3 + comp, len(tri))), gl[:, :, 3 * v + 1].ravel())
            np.add.at(G, (rows, np.tile(6 + comp, len(tri))), gl[:, :, 3 * v + 2].ravel())
        # dependence of n_H on the nodal frames
        c = 2 * np.einsum("tq,tqic,tqc->tqi", self.w, a, self.g)  # dE/dn_q
        av = np.zeros((mesh.n_vertices, 3))
        for j in range(2):
            np.add.at(av, self.qverts[:, :, j].ravel(), 0.5 * c.reshape(-1, 3))
        F1, F2 = w.grads[:, :, 0], w.grads[:, :, 1]
        G[:, 3:6] += np.cross(F2, av)
        G[:, 6:9] += np.cross(av, F1)
        return G

    def scalar_stiffness(self):
        """Sparse ``(3N,3N)`` matrix of the quadratic part for one component.

        Scalar DOFs are ordered ``(u_i, d1 u_i, d2 u_i)`` per vertex.
        """
        Ke = np.einsum("tq,tqcd,tqcl,tqle->tde", self.w, self.Bq, self.Q, self.Bq)
        tri = self.mesh.triangles
        idx = (3 * tri[:, :, None] + np.arange(3)).reshape(-1, 9)
        rows = np.repeat(idx, 9, axis=1).ravel()
        cols = np.tile(idx, (1, 9)).ravel()
        n = 3 * self.mesh.n_vertices
        return sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))


def assemble_energy(w: dkt.DktDeformation, coeffs: CoefficientField, with_offset=False) -> EnergyReport:
    return EnergyAssembler(w.mesh, coeffs).energy(w, with_offset)


def assemble_gradient(w: dkt.DktDeformation, coeffs: CoefficientField):
    """Flat DOF vector matching :meth:`DktDeformation.to_vector`."""
    return EnergyAssembler(w.mesh, coeffs).gradient(w).ravel()


def reformulation_offset(coeffs: CoefficientField) -> float:
    """Quadrature of ``Q_hom(s, B_eff(s))``; independent of the deformation."""
    b = coeffs.b
    dens = np.einsum("tqk,tqkl,tql->tq", b, coeffs.Qhat, b)
    return float(np.sum(coeffs.weights * dens))


# ---------------------------------------------------------------------------
# continuum references


def second_fundamental_form(u: dkt.AnalyticDeformation, s):
    """``II = -n . grad^2 u`` for an analytic map."""
    n = u.normal(s)
    return -np.einsum("pi,pijk->pjk", n, u.hess(s))


def gauss_rectangle(bounds, n=8, cells=(8, 8)):
    """Composite tensor Gauss-Legendre points and weights on a rectangle."""
    x0, x1, y0, y1 = bounds
    g, gw = np.polynomial.legendre.leggauss(n)
    xs = np.linspace(x0, x1, cells[0] + 1)
    ys = np.linspace(y0, y1, cells[1] + 1)
    px, wx = [], []
    for a, b in zip(xs[:-1], xs[1:]):
        px.append(0.5 * (a + b) + 0.5 * (b - a) * g)
        wx.append(0.5 * (b - a) * gw)
    py, wy = [], []
    for a, b in zip(ys[:-1], ys[1:]):
        py.append(0.5 * (a + b) + 0.5 * (b - a) * g)
        wy.append(0.5 * (b - a) * gw)
    px, wx, py, wy = map(np.concatenate, (px, wx, py, wy))
    X, Y = np.meshgrid(px, py, indexing="ij")
    W = np.outer(wx, wy)
    return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()


def reference_energy_original(u: dkt.AnalyticDeformation, qhat_fn, beff_fn, bounds, n=8, cells=(8, 8)):
    """``int_S Q_hom(s, II_u - B_eff)`` on a rectangle by composite Gauss quadrature."""
    pts, wts = gauss_rectangle(bounds, n, cells)
    II = second_fundamental_form(u, pts)
    total = 0.0
    for s, w, ii in zip(pts, wts, II):
        total += w * rve.qhom_eval(qhat_fn(s), ii - beff_fn(s))
    return float(total)


def reformulated_density(u: dkt.AnalyticDeformation, Qhat, Beff, s):
    """``Q(grad^2 u + n (x) B_eff)`` at points ``s``; equals ``Q(II - B_eff)`` for isometries."""
    n = u.normal(s)
    A = u.hess(s) + np.einsum("pi,jk->pijk", n, Beff)
    return np.array([bending_density_third_order(Qhat, a) for a in A])


def original_density(u: dkt.AnalyticDeformation, Qhat, Beff, s):
    II = second_fundamental_form(u, s)
    return np.array([rve.qhom_eval(Qhat, ii - Beff) for ii in II])


def mean_curvature_magnitude(w: dkt.DktDeformation):
    """Area-weighted mean of the largest principal curvature magnitude of ``-n_H . grad grad_H w``."""
    mesh = w.mesh
    nf = dkt.discrete_normal(w)
    total = 0.0
    for k, lam in enumerate(MACRO_RULE.bary):
        A = dkt.discrete_hessian_all(w, lam)
        n = nf.at_edge_midpoints()[:, k]
        II = -np.einsum("ti,tijk->tjk", n, A)
        II = 0.5 * (II + np.swapaxes(II, 1, 2))
        ev = np.linalg.eigvalsh(II)
        total += np.sum(mesh.area / 3 * np.max(np.abs(ev), axis=1))
    return float(total / np.sum(mesh.area))
