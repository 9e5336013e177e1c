"""Riemannian descent on nodewise isometric DKT deformations.

The admissible set is a product of ``R^3 x Stiefel(3,2)`` per free vertex
with clamped vertices held fixed.  Search directions solve

    min 1/2 d.P d + g.d   subject to   sym(F_v^T dF_v) = 0 at free vertices,

where ``P`` is either the identity or the quadratic energy part plus a
lumped mass shift (the metric preconditioner).  Steps are retracted by the
polar factor and accepted by Armijo backtracking.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import dkt, io
from .energy import CoefficientField, EnergyAssembler
from .plate import DirichletData, Triangulation

log = logging.getLogger(__name__)


class RetractionError(ValueError):
    pass


class AdmissibilityError(ValueError):
    pass


class LineSearchError(RuntimeError):
    def __init__(self, msg, report=None, state=None):
        super().__init__(msg)
        self.report = report
        self.state = state


# ---------------------------------------------------------------------------
# Stiefel helpers


def polar_retraction(F, rank_tol=1e-12):
    """Orthonormal polar factor ``U V^T`` of one or many 3x2 matrices."""
    F = np.asarray(F, dtype=float)
    U, S, Vt = np.linalg.svd(F, full_matrices=False)
    if np.any(S[..., -1] <= rank_tol * np.maximum(S[..., 0], 1.0)):
        raise RetractionError("rank-deficient frame in retraction")
    return U @ Vt


def tangent_project(g, F):
    """``g - F sym(F^T g)``: removes the component normal to the Stiefel manifold."""
    g = np.asarray(g, float)
    F = np.asarray(F, float)
    FtG = np.swapaxes(F, -1, -2) @ g
    return g - F @ (0.5 * (FtG + np.swapaxes(FtG, -1, -2)))


# ---------------------------------------------------------------------------
# configuration and reporting


@dataclass(frozen=True)
class SolveConfig:
    max_iter: int = 200
    gtol: float = 1e-8
    ftol: float = 1e-13
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    step0: float = 1.0
    step_growth: float = 2.0
    max_step: float = 1e3
    max_backtracks: int = 60
    preconditioner: str = "metric"
    metric_shift: float = 1e-4
    seed: dict = field(default_factory=lambda: {"kind": "flat"})

    def __post_init__(self):
        if self.gtol <= 0 or self.ftol < 0 or self.step0 <= 0:
            raise ValueError("tolerances and initial step must be positive")
        if not 0 < self.armijo_c < 1 or not 0 < self.backtrack < 1:
            raise ValueError("Armijo parameters must lie in (0,1)")
        if self.preconditioner not in ("none", "metric"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.step_growth < 1 or self.max_step < self.step0:
            raise ValueError("step growth must be >= 1 and max_step >= step0")
        if self.max_iter < 0 or self.max_backtracks < 1:
            raise ValueError("iteration limits must be positive")

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown solver keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class IterationReport:
    energy: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    step: list = field(default_factory=list)
    max_violation: list = field(default_factory=list)
    status: str = "running"

    def record(self, e, g, t, v):
        self.energy.append(float(e))
        self.grad_norm.append(float(g))
        self.step.append(float(t))
        self.max_violation.append(float(v))

    @property
    def iterations(self):
        return max(len(self.energy) - 1, 0)

    def rows(self):
        return [(k, e, g, t, v) for k, (e, g, t, v) in
                enumerate(zip(self.energy, self.grad_norm, self.step, self.max_violation))]

    def csv(self):
        return io.csv_text(("iter", "energy", "grad_norm", "step", "max_violation"), self.rows())

    def write_csv(self, path):
        return io.atomic_write(path, self.csv())


# ---------------------------------------------------------------------------
# seeds


def _flat(mesh: Triangulation, R=None, b=None):
    R = np.eye(3)[:, :2] if R is None else np.asarray(R, float)
    b = np.zeros(3) if b is None else np.asarray(b, float)
    return dkt.interpolate_dkt(dkt.affine_map(R, b), mesh)


def seed_deformation(kind, mesh: Triangulation, bc: DirichletData | None = None) -> dkt.DktDeformation:
    """Admissible starting state from a descriptor.

    ``kind`` is a string (``flat``) or a dict with ``kind`` in
    ``flat | cylinder | perturbed``; cylinders take ``kappa``, ``axis`` and
    ``anchored``; perturbations take ``sigma``, ``seed`` and an optional
    ``base`` descriptor.
    """
    desc = {"kind": kind} if isinstance(kind, str) else dict(kind)
    k = desc.get("kind", "flat")
    if k == "flat":
        if bc is not None and len(bc.nodes):
            w = _flat(mesh, bc.R, bc.b)
        else:
            w = _flat(mesh)
    elif k == "cylinder":
        u = dkt.cylinder_map(float(desc.get("kappa", 1.0)), int(desc.get("axis", 1)),
                             bool(desc.get("anchored", False)))
        w = dkt.interpolate_dkt(u, mesh)
    elif k == "perturbed":
        base = seed_deformation(desc.get("base", "flat"), mesh, bc)
        rng = np.random.default_rng(int(desc.get("seed", 0)))
        sigma = float(desc.get("sigma", 0.1))
        dv = sigma * rng.standard_normal(base.values.shape)
        dF = sigma * rng.standard_normal(base.grads.shape)
        if bc is not None and len(bc.nodes):
            dv[bc.nodes] = 0.0
            dF[bc.nodes] = 0.0
        values = base.values + dv
        grads = polar_retraction(base.grads + tangent_project(dF, base.grads))
        if bc is not None and len(bc.nodes):
            grads[bc.nodes] = base.grads[bc.nodes]
        w = dkt.DktDeformation(mesh, values, grads)
    else:
        raise ValueError(f"unknown seed kind {k!r}")
    if bc is not None and len(bc.nodes) and not w.is_admissible(bc, tol=1e-10):
        raise AdmissibilityError(f"seed {k!r} is incompatible with the clamped data")
    return w


# ---------------------------------------------------------------------------
# driver


def _scalar_index(N):
    """(3,3N) map from component-wise scalar DOFs to positions in the (N,9) layout."""
    v = np.arange(N)
    out = []
    for i in range(3):
        cols = np.array([i, 3 + i, 6 + i])
        out.append((9 * v[:, None] + cols).ravel())
    return np.array(out)


def lumped_mass(mesh: Triangulation):
    m = np.zeros(mesh.n_vertices)
    np.add.at(m, mesh.triangles.ravel(), np.repeat(mesh.area / 3.0, 3))
    return m


class _Stepper:
    def __init__(self, assembler: EnergyAssembler, bc, cfg: SolveConfig):
        mesh = assembler.mesh
        N = mesh.n_vertices
        self.N = N
        clamped = np.zeros(N, dtype=bool)
        if bc is not None and len(bc.nodes):
            clamped[bc.nodes] = True
        self.clamped = clamped
        self.free_nodes = np.flatnonzero(~clamped)
        mask = np.repeat(~clamped, 9)
        self.free_dofs = np.flatnonzero(mask)
        self.cfg = cfg
        if cfg.preconditioner == "metric":
            K = assembler.scalar_stiffness()
            scale = max(float(K.diagonal().mean()), 1e-300)
            M = np.repeat(lumped_mass(mesh), 3) / np.mean(lumped_mass(mesh))
            Pc = (K + cfg.metric_shift * scale * sp.diags(M)).tocoo()
        else:
            Pc = sp.identity(3 * N, format="coo")
        idx = _scalar_index(N)
        rows = np.concatenate([idx[i][Pc.row] for i in range(3)])
        cols = np.concatenate([idx[i][Pc.col] for i in range(3)])
        data = np.tile(Pc.data, 3)
        P = sp.csr_matrix((data, (rows, cols)), shape=(9 * N, 9 * N))
        self.P = P[self.free_dofs][:, self.free_dofs].tocsc()
        self.pos = -np.ones(9 * N, dtype=np.int64)
        self.pos[self.free_dofs] = np.arange(len(self.free_dofs))

    def constraint_matrix(self, grads):
        fn = self.free_nodes
        nf = len(fn)
        F0, F1 = grads[fn, :, 0], grads[fn, :, 1]
        base = 9 * fn
        r = np.arange(nf)
        rows, cols, vals = [], [], []
        for c in range(3):
            rows += [3 * r, 3 * r + 1, 3 * r + 2, 3 * r + 2]
            cols += [base + 3 + c, base + 6 + c, base + 6 + c, base + 3 + c]
            vals += [F0[:, c], F1[:, c], F0[:, c], F1[:, c]]
        rows = np.concatenate(rows)
        cols = self.pos[np.concatenate(cols)]
        vals = np.concatenate(vals)
        return sp.csr_matrix((vals, (rows, cols)), shape=(3 * nf, len(self.free_dofs)))

    def direction(self, w, G):
        """Projected gradient (N,9) and descent direction (N,9)."""
        g = G.copy()
        g[:, 3:9] = tangent_project(G[:, 3:9].reshape(-1, 2, 3).transpose(0, 2, 1),
                                    w.grads).transpose(0, 2, 1).reshape(-1, 6)
        g[self.clamped] = 0.0
        if self.cfg.preconditioner == "none":
            return g, -g
        C = self.constraint_matrix(w.grads)
        nc = C.shape[0]
        Kkt = sp.bmat([[self.P, C.T], [C, None]], format="csc")
        rhs = np.concatenate([-G.ravel()[self.free_dofs], np.zeros(nc)])
        sol = spla.splu(Kkt).solve(rhs)
        d = np.zeros(9 * self.N)
        d[self.free_dofs] = sol[:len(self.free_dofs)]
        return g, d.reshape(self.N, 9)


def _apply_step(w: dkt.DktDeformation, d, t, clamped):
    values = w.values + t * d[:, 0:3]
    grads = w.grads + t * np.stack([d[:, 3:6], d[:, 6:9]], axis=-1)
    free = ~clamped
    out = w.grads.copy()
    out[free] = polar_retraction(grads[free])
    values[clamped] = w.values[clamped]
    return dkt.DktDeformation(w.mesh, values, out)


def minimize_energy(w0: dkt.DktDeformation, coeffs: CoefficientField, bc: DirichletData | None = None,
                    cfg: SolveConfig | None = None, callback=None):
    """Descend from an admissible ``w0``; returns ``(w, IterationReport)``."""
    cfg = cfg or SolveConfig()
    mesh = w0.mesh
    viol = np.max(w0.isometry_violation(), initial=0.0)
    if viol > 1e-8:
        raise AdmissibilityError(f"initial state violates nodal isometry by {viol:.3e}")
    if bc is not None and len(bc.nodes) and not w0.is_admissible(bc, tol=1e-8):
        raise AdmissibilityError("initial state violates the clamped boundary data")
    w = w0.copy()
    clamped = np.zeros(mesh.n_vertices, dtype=bool)
    if bc is not None and len(bc.nodes):
        clamped[bc.nodes] = True
    free = ~clamped
    w.grads[free] = polar_retraction(w.grads[free])

    asm = EnergyAssembler(mesh, coeffs)
    stepper = _Stepper(asm, bc, cfg)
    report = IterationReport()
    E = asm.energy(w).total
    G = asm.gradient(w)
    g, d = stepper.direction(w, G)
    gnorm = float(np.linalg.norm(g))
    report.record(E, gnorm, 0.0, np.max(w.isometry_violation(), initial=0.0))

    t_next = cfg.step0
    for it in range(cfg.max_iter):
        if gnorm <= cfg.gtol:
            report.status = "converged"
            break
        slope = float(np.sum(G * d))
        if slope >= 0:
            d, slope = -g, -gnorm ** 2
        t = t_next
        for k in range(cfg.max_backtracks):
            try:
                trial = _apply_step(w, d, t, clamped)
            except RetractionError:
                t *= cfg.backtrack
                continue
            Et = asm.energy(trial).total
            if Et <= E + cfg.armijo_c * t * slope:
                break
            t *= cfg.backtrack
        else:
            report.status = "line_search_failed"
            raise LineSearchError(f"line search failed at iteration {it} after "
                                  f"{cfg.max_backtracks} backtracks", report, w)
        # grow the trial step after an unshortened acceptance
        t_next = min(t * cfg.step_growth, cfg.max_step) if k == 0 else t
        dE = E - Et
        w, E = trial, Et
        G = asm.gradient(w)
        g, d = stepper.direction(w, G)
        gnorm = float(np.linalg.norm(g))
        report.record(E, gnorm, t, np.max(w.isometry_violation(), initial=0.0))
        if callback is not None:
            callback(it, w, report)
        log.debug("iter %d energy %.12g grad %.3e step %.3e", it, E, gnorm, t)
        if dE <= cfg.ftol * max(1.0, abs(E)):
            report.status = "stalled"
            break
    else:
        report.status = "converged" if gnorm <= cfg.gtol else "max_iter"
    return w, report
