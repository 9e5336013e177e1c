"""Invariant battery run by ``check``: each item reports pass/fail and measured constants."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .. import dkt, energy, materials, minimize, plate, rve
from ..plate import MACRO_RULE, MacroQuadratureRule


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    detail: str = ""
    seconds: float = 0.0

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        meas = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items())
        return f"[{tag}] {self.name}: {meas}" + (f" ({self.detail})" if self.detail else "")

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "measured": self.measured,
                "detail": self.detail, "seconds": self.seconds}


def _short(v):
    if isinstance(v, float):
        return f"{v:.3e}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


# ---------------------------------------------------------------------------
# exact integrals of polynomials


def _box_monomial_integral(lo, hi, powers):
    out = 1.0
    for a, b, p in zip(lo, hi, powers):
        out *= (b ** (p + 1) - a ** (p + 1)) / (p + 1)
    return out


def random_tricubic(rng):
    """Random polynomial of degree <= 3 in each variable, with its exact integral on a box."""
    C = rng.standard_normal((4, 4, 4))

    def f(y):
        y = np.atleast_2d(y)
        P = [np.stack([y[:, d] ** k for k in range(4)], axis=-1) for d in range(3)]
        return np.einsum("abc,na,nb,nc->n", C, P[0], P[1], P[2])

    def exact(lo, hi):
        return sum(C[a, b, c] * _box_monomial_integral(lo, hi, (a, b, c))
                   for a in range(4) for b in range(4) for c in range(4))

    return f, exact


def triangle_monomial_integral(P, a, b):
    """Exact integral of ``x^a y^b`` over the triangle with vertices ``P`` (3x2)."""
    # Grundmann-Moeller style: integrate via the reference map and binomial expansion
    import math
    z0, e1, e2 = P[0], P[1] - P[0], P[2] - P[0]
    det = abs(e1[0] * e2[1] - e1[1] * e2[0])
    # x = z0x + e1x r + e2x s, y = z0y + e1y r + e2y s; expand multinomially
    total = 0.0
    for i0 in range(a + 1):
        for i1 in range(a - i0 + 1):
            i2 = a - i0 - i1
            ca = math.factorial(a) / (math.factorial(i0) * math.factorial(i1) * math.factorial(i2))
            ca *= z0[0] ** i0 * e1[0] ** i1 * e2[0] ** i2
            for j0 in range(b + 1):
                for j1 in range(b - j0 + 1):
                    j2 = b - j0 - j1
                    cb = math.factorial(b) / (math.factorial(j0) * math.factorial(j1) * math.factorial(j2))
                    cb *= z0[1] ** j0 * e1[1] ** j1 * e2[1] ** j2
                    r, s = i1 + j1, i2 + j2
                    ref = math.factorial(r) * math.factorial(s) / math.factorial(r + s + 2)
                    total += ca * cb * ref
    return det * total


def random_p2(rng):
    c = rng.standard_normal(6)
    mon = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]

    def f(s):
        s = np.atleast_2d(s)
        return sum(ci * s[:, 0] ** a * s[:, 1] ** b for ci, (a, b) in zip(c, mon))

    def exact(P):
        return sum(ci * triangle_monomial_integral(P, a, b) for ci, (a, b) in zip(c, mon))

    return f, exact


# ---------------------------------------------------------------------------
# quadrature checks


def check_micro_exactness(rng, rule=rve.MICRO_RULE, divisions=(3, 2, 4), trials=5, tol=1e-13):
    mesh = rve.build_rve_mesh(divisions)
    worst = 0.0
    for _ in range(trials):
        f, exact = random_tricubic(rng)
        approx = rve.micro_integrate(mesh, rule, f)
        ref = exact(materials.RVE_LO, materials.RVE_HI)
        worst = max(worst, abs(approx - ref) / max(abs(ref), 1e-300))
    return CheckResult("micro quadrature exactness (tri-cubic)", worst < tol, {"max_rel_error": worst})


def check_macro_exactness(rng, rule: MacroQuadratureRule = MACRO_RULE, trials=5, tol=1e-13):
    mesh = plate.build_rect_mesh(1.7, 1.1, 3, 2)
    verts = mesh.vertices[mesh.triangles]
    worst = 0.0
    for _ in range(trials):
        f, exact = random_p2(rng)
        approx = plate.macro_integrate(mesh, f, rule)
        ref = sum(exact(P) for P in verts)
        worst = max(worst, abs(approx - ref) / max(abs(ref), 1e-300))
    return CheckResult("macro quadrature exactness (P2)", worst < tol, {"max_rel_error": worst})


def check_micro_norm_equivalence(rng, levels=(2, 4, 8)):
    """Discrete vs exact L2 norm of Q1 functions on cells of shrinking size."""
    rule = rve.MICRO_RULE
    fine = rve.gauss_tensor(4)
    ratios = []
    for n in levels:
        mesh = rve.build_rve_mesh((n, n, n))
        pts, w = mesh.quadrature_points(rule)
        ptsf, wf = mesh.quadrature_points(fine)
        conn = mesh.element_nodes()
        vals = rng.standard_normal(len(mesh.nodes()))
        N = rve._q1_shape(rule.points)
        Nf = rve._q1_shape(fine.points)
        g = np.einsum("qa,ea->eq", N, vals[conn])
        gf = np.einsum("qa,ea->eq", Nf, vals[conn])
        a = np.sum(w * g ** 2, axis=1)
        b = np.sum(wf * gf ** 2, axis=1)
        r = np.sqrt(a / b)
        ratios.append((float(r.min()), float(r.max())))
    lo = min(r[0] for r in ratios)
    hi = max(r[1] for r in ratios)
    return CheckResult("micro norm equivalence (Q1)", lo > 0 and hi / lo < 10,
                       {"min_ratio": lo, "max_ratio": hi})


def _duffy_rule(n=8):
    g, w = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1)
    w = 0.5 * w
    U, V = np.meshgrid(g, g, indexing="ij")
    WU, WV = np.meshgrid(w, w, indexing="ij")
    x = U.ravel()
    y = (V * (1 - U)).ravel()
    wt = (WU * WV * (1 - U)).ravel()
    return np.column_stack([1 - x - y, x, y]), wt  # barycentric, weights sum to 1/2


def check_quadrature_p1_estimate(rng, levels=3, base=(2, 2)):
    """``|E_T[f g g']| / (H_T |f|_{W1inf} |g| |g'|)`` stays bounded under refinement."""
    bary, wt = _duffy_rule(10)
    k = rng.uniform(1, 2, size=2)
    f = lambda s: np.sin(k[0] * s[..., 0]) * np.cos(k[1] * s[..., 1]) + 2  # noqa: E731
    w1inf = 3.0 + float(np.hypot(k[0], k[1]))
    mesh = plate.build_rect_mesh(1.0, 1.0, *base)
    consts = []
    for _ in range(levels):
        P = mesh.vertices[mesh.triangles]
        ga = rng.standard_normal((mesh.n_triangles, 3))
        gb = rng.standard_normal((mesh.n_triangles, 3))
        pts = np.einsum("qa,tad->tqd", bary, P)
        exact = 2 * mesh.area * np.einsum("q,tq,tq,tq->t", wt, f(pts), ga @ bary.T, gb @ bary.T)
        qp = np.einsum("qa,tad->tqd", MACRO_RULE.bary, P)
        quad = mesh.area / 3 * np.einsum("tq,tq,tq->t", f(qp), ga @ MACRO_RULE.bary.T, gb @ MACRO_RULE.bary.T)
        na = np.sqrt(2 * mesh.area * np.einsum("q,tq->t", wt, (ga @ bary.T) ** 2))
        nb = np.sqrt(2 * mesh.area * np.einsum("q,tq->t", wt, (gb @ bary.T) ** 2))
        c = np.abs(quad - exact) / (mesh.diameter * w1inf * na * nb)
        consts.append(float(c.max()))
        mesh = plate.uniform_refine(mesh)
    # the estimate holds with constant 2 (twice the oscillation bound of f)
    return CheckResult("macro quadrature estimate with P1 factors", max(consts) <= 2.0,
                       {"constants": consts})


def check_quadrature_q1_estimate(rng, levels=(2, 4, 8)):
    """``|E_K[f d_i g d_j g']| / (h |f|_{W1inf} |d_i g| |d_j g'|)`` stays bounded."""
    fine = rve.gauss_tensor(6)
    k = 2 * np.pi
    f = lambda y: 2 + np.sin(k * y[..., 0]) * np.cos(k * y[..., 1]) * (1 + y[..., 2])  # noqa: E731
    w1inf = 3.0 + 2 * k
    consts = []
    for n in levels:
        mesh = rve.build_rve_mesh((n, n, n))
        conn = mesh.element_nodes()
        size = mesh.element_sizes()
        a = rng.standard_normal(len(mesh.nodes()))[conn]
        b = rng.standard_normal(len(mesh.nodes()))[conn]
        vals = []
        for rule in (rve.MICRO_RULE, fine):
            pts, w = mesh.quadrature_points(rule)
            dg = rve._q1_grad(rule.points)[None] / size[:, None, None, :]
            ga = np.einsum("ea,eqad->eqd", a, dg)[..., 0]
            gb = np.einsum("ea,eqad->eqd", b, dg)[..., 1]
            vals.append((np.sum(w * f(pts) * ga * gb, axis=1), w, ga, gb))
        err = np.abs(vals[0][0] - vals[1][0])
        _, wf, gaf, gbf = vals[1]
        na = np.sqrt(np.sum(wf * gaf ** 2, axis=1))
        nb = np.sqrt(np.sum(wf * gbf ** 2, axis=1))
        consts.append(float(np.max(err / (mesh.h * w1inf * na * nb))))
    return CheckResult("micro quadrature estimate with Q1 gradients", max(consts) <= 2 * consts[0],
                       {"constants": consts})


# ---------------------------------------------------------------------------
# cell problem


def check_galerkin_orthogonality(rng, n=4):
    spec = materials.checkerboard()
    out = rve.solve_correctors(spec, np.zeros(2), 1.0, rve.build_rve_mesh((n, n, n), spec))
    ortho = float(np.max(np.abs(out.diagnostics["galerkin_orthogonality"])))
    scale = float(np.max(np.abs(out.Qhat)))
    return CheckResult("Galerkin orthogonality of correctors", ortho < 1e-10 * max(scale, 1.0),
                       {"max_abs": ortho})


def check_prestrain_identity(rng, n=4):
    A = rng.standard_normal((2, 2))
    A = 0.5 * (A + A.T)
    spec = materials.checkerboard().with_prestrain(materials.LinearY3Prestrain(A))
    out = rve.solve_correctors(spec, np.zeros(2), 1.0, rve.build_rve_mesh((n, n, n), spec))
    err = float(np.max(np.abs(out.Beff - A)))
    return CheckResult("effective prestrain of y3-linear prestrain", err < 1e-10, {"max_abs_error": err})


# ---------------------------------------------------------------------------
# DKT


def random_isometric_state(mesh, rng, sigma=0.3, base=None):
    base = base or {"kind": "flat"}
    return minimize.seed_deformation({"kind": "perturbed", "sigma": sigma,
                                      "seed": int(rng.integers(2 ** 31)), "base": base}, mesh)


def check_dkt_reproduction(rng, trials=20):
    mesh = plate.build_rect_mesh(1.3, 0.9, 3, 3)
    worst = 0.0
    for _ in range(trials):
        u = dkt.quadratic_map(rng.standard_normal((3, 2, 2)), rng.standard_normal(3),
                              rng.standard_normal((3, 2)))
        w = dkt.interpolate_dkt(u, mesh)
        th = dkt.discrete_gradient(w)
        for _ in range(3):
            lam = rng.dirichlet(np.ones(3))
            z = np.einsum("a,tad->td", lam, mesh.vertices[mesh.triangles])
            worst = max(worst, float(np.max(np.abs(th.evaluate(lam) - u.grad(z)))))
    return CheckResult("discrete gradient reproduces quadratics", worst < 1e-12, {"max_abs_error": worst})


def check_vertex_consistency(rng):
    mesh = plate.build_rect_mesh(1.0, 1.0, 3, 3)
    w = random_isometric_state(mesh, rng)
    th = dkt.discrete_gradient(w)
    err = float(np.max(np.abs(th.nodes[:, :3] - w.grads[mesh.triangles])))
    return CheckResult("discrete gradient equals nodal gradients at vertices", err == 0.0, {"max_abs_error": err})


def check_normal_bound(rng, points=100):
    mesh = plate.build_rect_mesh(1.0, 1.0, 4, 4)
    worst = 0.0
    for _ in range(5):
        w = random_isometric_state(mesh, rng, sigma=1.0)
        nf = dkt.discrete_normal(w)
        T = rng.integers(mesh.n_triangles, size=points)
        lam = rng.dirichlet(np.ones(3), size=points)
        vals = np.einsum("ka,kai->ki", lam, nf.values[mesh.triangles[T]])
        worst = max(worst, float(np.max(np.linalg.norm(vals, axis=1))))
    return CheckResult("interpolated normal bounded by one", worst <= 1 + 1e-14, {"max_norm": worst})


def check_dkt_norm_equivalence(rng, levels=3):
    mesh = plate.build_rect_mesh(1.0, 1.0, 2, 2)
    lows, highs = [], []
    for _ in range(levels):
        ratios = []
        for _ in range(5):
            w = dkt.DktDeformation(mesh, rng.standard_normal((mesh.n_vertices, 3)),
                                   rng.standard_normal((mesh.n_vertices, 3, 2)))
            ratios.append(dkt.discrete_gradient_l2(w) / dkt.cubic_gradient_l2(w))
        lows.append(float(min(ratios)))
        highs.append(float(max(ratios)))
        mesh = plate.uniform_refine(mesh)
    ok = max(highs) / min(highs) <= 2 and max(lows) / min(lows) <= 2
    return CheckResult("norm equivalence of discrete and exact gradients", bool(ok),
                       {"min_ratio": lows, "max_ratio": highs})


# ---------------------------------------------------------------------------
# energy


def check_gradient_fd(rng, directions=10):
    mesh = plate.build_rect_mesh(1.0, 1.0, 3, 3)
    A = rng.standard_normal((3, 3))
    Q = A @ A.T + np.eye(3)
    Bm = rng.standard_normal((2, 2))
    coeffs = energy.CoefficientField.from_functions(
        mesh, lambda s: Q * (1 + 0.2 * s[0]), lambda s: 0.5 * (Bm + Bm.T) * (1 + 0.3 * s[1]))
    w = random_isometric_state(mesh, rng)
    asm = energy.EnergyAssembler(mesh, coeffs)
    x = w.to_vector()
    g = asm.gradient(w).ravel()
    E = lambda v: asm.energy(dkt.DktDeformation.from_vector(mesh, v)).total  # noqa: E731
    worst = 0.0
    for _ in range(directions):
        d = rng.standard_normal(x.size)
        h = 1e-5
        fd = (E(x + h * d) - E(x - h * d)) / (2 * h)
        worst = max(worst, abs(fd - g @ d) / max(abs(g @ d), 1e-300))
    return CheckResult("energy gradient vs central differences", worst < 1e-6, {"max_rel_error": worst})


def check_reformulation_identity(rng, samples=20):
    Q = rve.analytic_qhat_isotropic(1.0, 1.0)
    s = rng.uniform(0, np.pi, size=(10, 2))
    worst = 0.0
    for _ in range(samples):
        u = dkt.cylinder_map(rng.uniform(0.2, 3.0), int(rng.integers(2)))
        B = rng.standard_normal((2, 2))
        B = 0.5 * (B + B.T)
        a = energy.original_density(u, Q, B, s)
        b = energy.reformulated_density(u, Q, B, s)
        worst = max(worst, float(np.max(np.abs(a - b))))
    return CheckResult("reformulation identity on cylinders", worst < 1e-12, {"max_abs_error": worst})


def coercivity_constant(E, S):
    """Smallest ``C`` with ``E >= S/C - C`` for all sample pairs."""
    E = np.asarray(E, float)
    S = np.asarray(S, float)
    return float(np.max((-E + np.sqrt(E ** 2 + 4 * S)) / 2))


def measure_coercivity(rng, levels=3, samples=50, base=(2, 2), alpha=0.5):
    """Measured constant per level for random nodewise isometric states."""
    mesh = plate.build_rect_mesh(1.0, 1.0, *base)
    out = []
    for _ in range(levels):
        coeffs = energy.CoefficientField.isotropic(mesh, Beff=alpha * np.eye(2))
        asm = energy.EnergyAssembler(mesh, coeffs)
        E, S = [], []
        for k in range(samples):
            sigma = 10 ** rng.uniform(-2, 0)
            w = random_isometric_state(mesh, rng, sigma=sigma)
            E.append(asm.energy(w).total)
            S.append(dkt.discrete_hessian_l2(w, sym_only=True) ** 2)
        out.append(coercivity_constant(E, S))
        mesh = plate.uniform_refine(mesh)
    return out


def measure_isometry_defect(rng, levels=3, samples=10, base=(2, 2)):
    """Per level: max of ``defect / (H |grad grad_H w| |grad_H w|)`` over smooth random states."""
    mesh = plate.build_rect_mesh(1.0, 1.0, *base)
    # smooth nonisometric-in-between states: random low-frequency rotations of frames
    modes = rng.standard_normal((samples, 3, 2, 2))
    out = []
    for _ in range(levels):
        ratios = []
        for m in modes:
            z = mesh.vertices
            ang = np.einsum("kab,nb->nka", m[:, :, :], np.column_stack([np.sin(2 * z[:, 0]), np.cos(3 * z[:, 1])]))
            ang = ang.sum(axis=2)  # (n,3) rotation vector field
            R = _rotations(ang)
            u = dkt.cylinder_map(1.0, 1)
            w = dkt.interpolate_dkt(u, mesh)
            w = dkt.DktDeformation(mesh, w.values, np.einsum("nij,njk->nik", R, w.grads))
            d = dkt.isometry_defect(w)
            ratios.append(d / (mesh.H * dkt.discrete_hessian_l2(w) * dkt.discrete_gradient_l2(w)))
        out.append(float(max(ratios)))
        mesh = plate.uniform_refine(mesh)
    return out


def _rotations(v):
    th = np.linalg.norm(v, axis=1)
    k = v / np.maximum(th, 1e-300)[:, None]
    K = np.zeros((len(v), 3, 3))
    K[:, 0, 1], K[:, 0, 2], K[:, 1, 2] = -k[:, 2], k[:, 1], -k[:, 0]
    K = K - np.swapaxes(K, 1, 2)
    s, c = np.sin(th)[:, None, None], np.cos(th)[:, None, None]
    return np.eye(3) + s * K + (1 - c) * K @ K


def check_coercivity(rng, samples=20):
    consts = measure_coercivity(rng, samples=samples)
    ok = max(consts) <= 2 * min(consts)
    return CheckResult("energy coercivity constant stable under refinement", bool(ok), {"constants": consts})


def check_isometry_defect(rng, samples=5):
    consts = measure_isometry_defect(rng, samples=samples)
    ok = max(consts) <= 2 * min(consts)
    return CheckResult("isometry defect bound constant stable under refinement", bool(ok), {"constants": consts})


# ---------------------------------------------------------------------------
# battery


BATTERY = [
    check_micro_exactness,
    check_macro_exactness,
    check_micro_norm_equivalence,
    check_quadrature_q1_estimate,
    check_quadrature_p1_estimate,
    check_galerkin_orthogonality,
    check_prestrain_identity,
    check_dkt_reproduction,
    check_vertex_consistency,
    check_normal_bound,
    check_dkt_norm_equivalence,
    check_gradient_fd,
    check_reformulation_identity,
    check_coercivity,
    check_isometry_defect,
]


def run_battery(seed=0, checks=None):
    results = []
    for fn in checks or BATTERY:
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        try:
            res = fn(rng)
        except Exception as exc:  # a crashing check is a failing check
            res = CheckResult(fn.__name__, False, {}, f"raised {type(exc).__name__}: {exc}")
        res.seconds = time.perf_counter() - t0
        results.append(res)
    return results
