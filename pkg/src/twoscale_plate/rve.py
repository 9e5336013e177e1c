"""Discrete corrector problems on the unit cell and effective plate coefficients.

The cell ``(0,1)^2 x (-1/2,1/2)`` is split into an axis-aligned tensor grid of
hexahedra carrying trilinear (Q1) elements.  Correctors are sums of an
in-plane affine displacement ``iota(M) y`` and an in-plane periodic, zero-mean
Q1 field.  All integrals use a tensor Gauss rule pushed forward to each
element.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .materials import RVE_HI, RVE_LO, MaterialSpec, iota

log = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)


class MeshError(ValueError):
    pass


class CorrectorSolveError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Sym(2) basis


def sym_basis():
    """Orthonormal basis ``G1 = e1(x)e1, G2 = e2(x)e2, G3 = (e1(x)e2 + e2(x)e1)/sqrt2``."""
    G = np.zeros((3, 2, 2))
    G[0, 0, 0] = 1.0
    G[1, 1, 1] = 1.0
    G[2, 0, 1] = G[2, 1, 0] = 1 / SQRT2
    return G


def sym_coeffs(A):
    """Coefficients of ``sym(A)`` in :func:`sym_basis` (vectorized over leading axes)."""
    A = np.asarray(A, dtype=float)
    return np.stack([A[..., 0, 0], A[..., 1, 1], (A[..., 0, 1] + A[..., 1, 0]) / SQRT2], axis=-1)


def from_coeffs(c):
    c = np.asarray(c, dtype=float)
    return np.einsum("...k,kij->...ij", c, sym_basis())


def qhom_eval(Qhat, G) -> float:
    """Effective bending energy density ``sum_ij Qhat_ij (sym G)^_i (sym G)^_j``."""
    c = sym_coeffs(G)
    return float(c @ np.asarray(Qhat) @ c)


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Reference rule on the unit cube ``[0,1]^3``."""

    points: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)


def gauss_tensor(n: int = 2) -> QuadratureRule:
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    P = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    W = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
    return QuadratureRule(P, W)


MICRO_RULE = gauss_tensor(2)


def q1_unisolvent(rule: QuadratureRule) -> bool:
    """True if the rule's points determine every Q1 function on the reference cube."""
    V = _q1_shape(rule.points)
    return np.linalg.matrix_rank(V) == 8


# ---------------------------------------------------------------------------
# mesh


@dataclass(frozen=True)
class RveMesh:
    lines: tuple  # three strictly increasing coordinate arrays

    @property
    def shape(self):
        return tuple(len(l) - 1 for l in self.lines)

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.shape))

    @property
    def h(self) -> float:
        return float(max(np.max(np.diff(l)) for l in self.lines))

    @property
    def shape_ratio(self) -> float:
        d = [np.diff(l) for l in self.lines]
        hx, hy, hz = np.meshgrid(*d, indexing="ij")
        sizes = np.stack([hx, hy, hz], -1)
        return float(np.max(sizes.max(-1) / sizes.min(-1)))

    def element_sizes(self):
        d = [np.diff(l) for l in self.lines]
        hx, hy, hz = np.meshgrid(*d, indexing="ij")
        return np.stack([hx.ravel(), hy.ravel(), hz.ravel()], axis=-1)

    def element_origins(self):
        x, y, z = np.meshgrid(*(l[:-1] for l in self.lines), indexing="ij")
        return np.stack([x.ravel(), y.ravel(), z.ravel()], axis=-1)

    def nodes(self):
        x, y, z = np.meshgrid(*self.lines, indexing="ij")
        return np.stack([x.ravel(), y.ravel(), z.ravel()], axis=-1)

    def element_nodes(self):
        """(E, 8) node indices; local node ``a = 4 a1 + 2 a2 + a3``."""
        n1, n2, n3 = self.shape
        i, j, k = np.meshgrid(np.arange(n1), np.arange(n2), np.arange(n3), indexing="ij")
        i, j, k = i.ravel(), j.ravel(), k.ravel()
        out = np.empty((len(i), 8), dtype=np.int64)
        for a1 in (0, 1):
            for a2 in (0, 1):
                for a3 in (0, 1):
                    out[:, 4 * a1 + 2 * a2 + a3] = ((i + a1) * (n2 + 1) + (j + a2)) * (n3 + 1) + (k + a3)
        return out

    def quadrature_points(self, rule: QuadratureRule = MICRO_RULE):
        """(E, l, 3) physical points and (E, l) weights."""
        org, size = self.element_origins(), self.element_sizes()
        pts = org[:, None, :] + rule.points[None, :, :] * size[:, None, :]
        w = rule.weights[None, :] * np.prod(size, axis=1)[:, None]
        return pts, w


@dataclass(frozen=True)
class PeriodicDofMap:
    node_to_dof: np.ndarray  # geometric node -> periodic node index
    n_periodic: int

    @property
    def n_unknowns(self) -> int:
        return 3 * self.n_periodic


def periodic_map(mesh: RveMesh) -> PeriodicDofMap:
    n1, n2, n3 = mesh.shape
    i, j, k = np.meshgrid(np.arange(n1 + 1), np.arange(n2 + 1), np.arange(n3 + 1), indexing="ij")
    idx = ((i % n1) * n2 + (j % n2)) * (n3 + 1) + k
    return PeriodicDofMap(idx.ravel(), n1 * n2 * (n3 + 1))


def _axis_lines(div, lo, hi):
    if np.ndim(div) == 0:
        n = int(div)
        if n < 1:
            raise MeshError("need at least one division per axis")
        return np.linspace(lo, hi, n + 1)
    lines = np.asarray(div, dtype=float)
    if lines.ndim != 1 or len(lines) < 2 or np.any(np.diff(lines) <= 0):
        raise MeshError("explicit grid lines must be strictly increasing")
    if abs(lines[0] - lo) > 1e-14 or abs(lines[-1] - hi) > 1e-14:
        raise MeshError(f"grid lines must span [{lo}, {hi}]")
    lines[0], lines[-1] = lo, hi
    return lines


def build_rve_mesh(divisions, spec: MaterialSpec | None = None, max_ratio: float | None = None) -> RveMesh:
    """Tensor grid of the unit cell.

    ``divisions`` is either three per-axis counts, a single count used for every
    axis, or three explicit arrays of grid lines.  Every region face of ``spec``
    has to be a grid plane.
    """
    if np.isscalar(divisions):
        divisions = (divisions,) * 3
    if len(divisions) != 3:
        raise MeshError("divisions must be given for three axes")
    lines = tuple(_axis_lines(d, lo, hi) for d, lo, hi in zip(divisions, RVE_LO, RVE_HI))
    mesh = RveMesh(lines)
    if spec is not None:
        missing = []
        for axis, planes in enumerate(spec.planes()):
            for p in planes:
                if not np.any(np.abs(lines[axis] - p) < 1e-12):
                    missing.append(f"y{axis + 1}={p:g}")
        if missing:
            raise MeshError("region faces not resolved by the grid; missing planes: " + ", ".join(missing))
    if max_ratio is not None and mesh.shape_ratio > max_ratio:
        raise MeshError(f"element aspect ratio {mesh.shape_ratio:.3g} exceeds {max_ratio:g}")
    return mesh


def micro_integrate(mesh: RveMesh, rule: QuadratureRule, f) -> float:
    """Apply the composite quadrature rule to ``f(points[N,3]) -> values[N]``."""
    pts, w = mesh.quadrature_points(rule)
    vals = np.asarray(f(pts.reshape(-1, 3)), dtype=float).reshape(w.shape)
    return float(np.sum(w * vals))


# ---------------------------------------------------------------------------
# Q1 reference element


def _q1_shape(r):
    r = np.atleast_2d(r)
    N = np.empty((len(r), 8))
    for a1 in (0, 1):
        for a2 in (0, 1):
            for a3 in (0, 1):
                f = [r[:, d] if a else 1 - r[:, d] for d, a in enumerate((a1, a2, a3))]
                N[:, 4 * a1 + 2 * a2 + a3] = f[0] * f[1] * f[2]
    return N


def _q1_grad(r):
    r = np.atleast_2d(r)
    dN = np.empty((len(r), 8, 3))
    for a1 in (0, 1):
        for a2 in (0, 1):
            for a3 in (0, 1):
                a = (a1, a2, a3)
                f = [r[:, d] if a[d] else 1 - r[:, d] for d in range(3)]
                df = [np.ones(len(r)) if a[d] else -np.ones(len(r)) for d in range(3)]
                loc = 4 * a1 + 2 * a2 + a3
                dN[:, loc, 0] = df[0] * f[1] * f[2]
                dN[:, loc, 1] = f[0] * df[1] * f[2]
                dN[:, loc, 2] = f[0] * f[1] * df[2]
    return dN


# ---------------------------------------------------------------------------
# correctors


@dataclass
class Corrector:
    M: np.ndarray  # 2x2 symmetric affine part
    phi: np.ndarray  # (n_nodes, 3) nodal periodic part on the geometric grid
    gamma: float

    def mean(self, mesh: RveMesh, rule: QuadratureRule = MICRO_RULE):
        conn = mesh.element_nodes()
        _, w = mesh.quadrature_points(rule)
        N = _q1_shape(rule.points)
        vals = np.einsum("qa,eac->eqc", N, self.phi[conn])
        return np.einsum("eq,eqc->c", w, vals)


@dataclass
class CellOutputs:
    Qhat: np.ndarray
    Bhat: np.ndarray
    Beff: np.ndarray
    correctors: list
    gamma: float
    h: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def Beff_coeffs(self):
        return sym_coeffs(self.Beff)

    def to_dict(self):
        return {
            "Qhat": self.Qhat.tolist(),
            "Bhat": self.Bhat.tolist(),
            "Beff": self.Beff.tolist(),
            "gamma": self.gamma,
            "h": self.h,
            "diagnostics": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                            for k, v in self.diagnostics.items()},
        }


class CellProblem:
    """Assembled discrete corrector problem for one macro point.

    Holds the element gradients, coefficients at quadrature points and the
    factorized saddle-point system; solving for the three basis strains
    reuses one factorization.
    """

    def __init__(self, spec: MaterialSpec, s, gamma: float, mesh: RveMesh,
                 rule: QuadratureRule = MICRO_RULE, tol: float = 1e-12):
        if not gamma > 0:
            raise ValueError(f"gamma must be positive, got {gamma}")
        self.spec, self.s, self.gamma, self.mesh, self.rule, self.tol = spec, np.asarray(s, float), float(gamma), mesh, rule, tol
        self.pmap = periodic_map(mesh)
        self.conn = mesh.element_nodes()
        size = mesh.element_sizes()
        self.qpts, self.qw = mesh.quadrature_points(rule)
        E, nq = self.qw.shape

        centroids = mesh.element_origins() + 0.5 * size
        region_of_element = spec.region_ids(centroids)
        rid = np.repeat(region_of_element, nq)
        lam, mu, B = spec.evaluate(self.s, self.qpts.reshape(-1, 3), rid)
        self.lam = lam.reshape(E, nq)
        self.mu = mu.reshape(E, nq)
        self.B = B.reshape(E, nq, 3, 3)

        self.N = _q1_shape(rule.points)  # (q, 8)
        dN = _q1_grad(rule.points)  # (q, 8, 3)
        g = dN[None, :, :, :] / size[:, None, None, :]  # (E, q, 8, 3)
        g[..., 2] /= self.gamma  # scaled gradient
        self.g = g
        self._assemble()

    # -- assembly ---------------------------------------------------------

    def _assemble(self):
        g, w, lam, mu = self.g, self.qw, self.lam, self.mu
        wm, wl = w * mu, w * lam
        G = sym_basis()
        trG = np.array([1.0, 1.0, 0.0])
        E = g.shape[0]
        nP = self.pmap.n_periodic
        n_phi = 3 * nP

        # phi-phi block
        gg = np.einsum("eq,eqad,eqbd->eab", wm, g, g)
        Ke = np.einsum("eab,cd->eacbd", gg, np.eye(3))
        Ke += np.einsum("eq,eqad,eqbc->eacbd", wm, g, g)
        Ke += np.einsum("eq,eqac,eqbd->eacbd", wl, g, g)
        dofs = (3 * self.pmap.node_to_dof[self.conn])[:, :, None] + np.arange(3)[None, None, :]  # (E,8,3)
        dofs = dofs.reshape(E, 24)
        Ke = Ke.reshape(E, 24, 24)
        rows = np.repeat(dofs, 24, axis=1).ravel()
        cols = np.tile(dofs, (1, 24)).ravel()
        K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n_phi, n_phi)).tocsc()

        # coupling of a constant strain iota(G_k) with phi; weighted by y3 for the loads
        y3 = self.qpts[..., 2]
        iG = iota(G)  # (3,3,3)

        def strain_coupling(weight):
            # <L iota(G_k), e_c (x) g_a> = 2 mu (iota(G_k) g_a)_c + lam tr(G_k) g_ac
            t1 = 2 * np.einsum("eq,kcd,eqad->ekac", wm * weight, iG, g)
            t2 = np.einsum("eq,k,eqac->ekac", wl * weight, trG, g)
            return (t1 + t2).reshape(E, 3, 24)

        Cm = strain_coupling(1.0)
        Cl = strain_coupling(y3)

        def scatter(Ce):
            out = np.zeros((3, n_phi))
            for k in range(3):
                np.add.at(out[k], dofs.ravel(), Ce[:, k, :].ravel())
            return out

        KMphi = scatter(Cm)
        Lphi = scatter(Cl)
        GG = np.einsum("kij,lij->kl", G, G)
        tt = np.outer(trG, trG)
        KMM = 2 * np.sum(wm) * GG + np.sum(wl) * tt
        LMM = 2 * np.sum(wm * y3) * GG + np.sum(wl * y3) * tt

        # zero-mean constraint on phi
        mass = np.einsum("eq,qa->ea", w, self.N)
        m = np.zeros(nP)
        np.add.at(m, self.pmap.node_to_dof[self.conn].ravel(), mass.ravel())
        Cmean = sp.kron(sp.csr_matrix(m[None, :]), sp.identity(3)).tocsr()  # (3, n_phi)

        Z33 = sp.csr_matrix((3, 3))
        A = sp.bmat([
            [K, sp.csr_matrix(KMphi.T), Cmean.T],
            [sp.csr_matrix(KMphi), sp.csr_matrix(KMM), None],
            [Cmean, None, Z33],
        ], format="csc")
        self.A = A
        self.n_phi, self.n_total = n_phi, A.shape[0]
        # loads for the three basis strains (negated coupling)
        rhs = np.zeros((self.n_total, 3))
        rhs[:n_phi] = -Lphi.T
        rhs[n_phi:n_phi + 3] = -LMM.T
        self.rhs = rhs
        self.mass = m

    # -- solve ------------------------------------------------------------

    def solve(self):
        try:
            lu = spla.splu(self.A)
        except RuntimeError as exc:
            ritz = self._smallest_ritz()
            raise CorrectorSolveError(f"corrector system is singular ({exc}); smallest Ritz value {ritz:.3e}") from None
        X = lu.solve(self.rhs)
        history = []
        bnorm = np.linalg.norm(self.rhs, axis=0)
        for _ in range(5):
            R = self.rhs - self.A @ X
            rel = float(np.max(np.linalg.norm(R, axis=0) / np.maximum(bnorm, 1e-300)))
            history.append(rel)
            if rel <= self.tol:
                break
            X += lu.solve(R)
        else:
            raise CorrectorSolveError(f"corrector solve did not reach tolerance; residual history {history}")
        self.residual_history = history
        return X

    def _smallest_ritz(self):
        try:
            n = self.n_phi + 3
            Kblock = self.A[:n, :n]
            if n <= 3000:
                return float(np.min(np.abs(np.linalg.eigvalsh(Kblock.toarray()))))
            vals = spla.eigsh(Kblock, k=1, which="SA", return_eigenvectors=False, maxiter=2000)
            return float(vals[0])
        except Exception:  # noqa: BLE001 -- best-effort diagnostic only
            return float("nan")

    # -- post-processing ----------------------------------------------------

    def strains(self, X):
        """Total strains ``y3 iota(G_i) + iota(M_i) + grad_gamma phi_i`` at quadrature points, (3,E,q,3,3)."""
        G = sym_basis()
        n_phi = self.n_phi
        out = []
        y3 = self.qpts[..., 2]
        for i in range(3):
            phi = X[:n_phi, i].reshape(-1, 3)[self.pmap.node_to_dof[self.conn]]  # (E,8,3)
            F = np.einsum("eac,eqad->eqcd", phi, self.g)
            M = from_coeffs(X[n_phi:n_phi + 3, i])
            F = F + iota(M) + y3[..., None, None] * iota(G[i])
            out.append(F)
        return np.array(out)

    def corrector_strain(self, X, i):
        phi = X[:self.n_phi, i].reshape(-1, 3)[self.pmap.node_to_dof[self.conn]]
        F = np.einsum("eac,eqad->eqcd", phi, self.g)
        return F + iota(from_coeffs(X[self.n_phi:self.n_phi + 3, i]))

    def _L(self, F):
        tr = np.trace(F, axis1=-2, axis2=-1)
        return 2 * self.mu[..., None, None] * 0.5 * (F + np.swapaxes(F, -1, -2)) + self.lam[..., None, None] * tr[..., None, None] * np.eye(3)

    def outputs(self, X) -> CellOutputs:
        F = self.strains(X)
        LF = np.array([self._L(Fi) for Fi in F])
        Q = np.einsum("eq,ieqcd,jeqcd->ij", self.qw, LF, F)
        Q = 0.5 * (Q + Q.T)
        Bhat = np.einsum("eq,ieqcd,eqcd->i", self.qw, LF, self.B)
        evals = np.linalg.eigvalsh(Q)
        if evals[0] <= 0:
            raise CorrectorSolveError(f"effective stiffness not positive definite; eigenvalues {evals}")
        beff = np.linalg.solve(Q, Bhat)
        correctors = []
        nodes_map = self.pmap.node_to_dof
        for i in range(3):
            phi = X[:self.n_phi, i].reshape(-1, 3)[nodes_map]
            correctors.append(Corrector(from_coeffs(X[self.n_phi:self.n_phi + 3, i]), phi, self.gamma))
        ortho = np.zeros((3, 3))
        for j in range(3):
            Gj = self.corrector_strain(X, j)
            ortho[:, j] = np.einsum("eq,ieqcd,eqcd->i", self.qw, LF, Gj)
        diag = {
            "residual_history": list(self.residual_history),
            "galerkin_orthogonality": ortho,
            "min_eigenvalue": float(evals[0]),
            "n_unknowns": int(self.n_total),
        }
        return CellOutputs(Q, Bhat, from_coeffs(beff), correctors, self.gamma, self.mesh.h, diag)


def solve_correctors(spec: MaterialSpec, s, gamma: float, mesh: RveMesh,
                     rule: QuadratureRule = MICRO_RULE, tol: float = 1e-12) -> CellOutputs:
    """Solve the three basis corrector problems and assemble the effective quantities."""
    problem = CellProblem(spec, s, gamma, mesh, rule, tol)
    X = problem.solve()
    return problem.outputs(X)


def corrector_h1_norm(corr: Corrector, mesh: RveMesh, rule: QuadratureRule = MICRO_RULE) -> float:
    """``||iota(M) y + phi||_{H^1}`` with the unscaled gradient."""
    conn = mesh.element_nodes()
    pts, w = mesh.quadrature_points(rule)
    size = mesh.element_sizes()
    N = _q1_shape(rule.points)
    g = _q1_grad(rule.points)[None] / size[:, None, None, :]
    phi = corr.phi[conn]
    val = np.einsum("qa,eac->eqc", N, phi)
    grad = np.einsum("eac,eqad->eqcd", phi, g)
    iM = iota(corr.M)
    val = val + np.einsum("cd,eqd->eqc", iM, pts)
    grad = grad + iM
    return float(np.sqrt(np.sum(w * (np.sum(val ** 2, -1) + np.sum(grad ** 2, (-1, -2))))))


def analytic_qhat_isotropic(lam: float, mu: float) -> np.ndarray:
    """Closed-form effective stiffness of a homogeneous isotropic plate.

    ``Q_hom(G) = (2 mu |G|^2 + 2 mu lam / (2 mu + lam) (tr G)^2) / 12``.
    """
    G = sym_basis()
    c = 2 * mu * lam / (2 * mu + lam)
    tr = np.array([1.0, 1.0, 0.0])
    return (2 * mu * np.einsum("kij,lij->kl", G, G) + c * np.outer(tr, tr)) / 12.0
