"""Acceptance criteria, one test per criterion, each printing a single PASS/FAIL line."""

import time

import numpy as np
import pytest

from twoscale_plate import dkt, energy, materials, minimize, plate, rve
from twoscale_plate.energy import CoefficientField
from twoscale_plate.harness import checks, studies


def record(log, number, title, passed, seconds, budget, **measured):
    ok = bool(passed) and seconds < budget
    meas = ", ".join(f"{k}={v}" for k, v in measured.items())
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({meas}; {seconds:.1f}s of {budget:g}s)"
    print(line)
    log.append(line)
    return ok


def test_criterion_01_effective_stiffness(acceptance_log):
    t0 = time.perf_counter()
    ref = rve.analytic_qhat_isotropic(1.0, 1.0)
    spec = materials.homogeneous(1.0, 1.0)
    out = {n: rve.solve_correctors(spec, (0, 0), 1.0, rve.build_rve_mesh(n, spec)).Qhat for n in (8, 16)}
    secs = time.perf_counter() - t0
    idx = [(0, 0), (0, 1), (2, 2)]
    err16 = max(abs(out[16][i] - ref[i]) for i in idx)
    # Q33 is reproduced to round-off on every grid, so its ratio carries no order information
    orders = [np.log2(abs(out[8][i] - ref[i]) / abs(out[16][i] - ref[i])) for i in idx[:2]]
    err33 = max(abs(out[n][2, 2] - ref[2, 2]) for n in out)
    ok = err16 < 1e-3 and min(orders) >= 1.5 and err33 < 1e-12
    assert record(acceptance_log, 1, "effective stiffness oracle", ok, secs, 60,
                  err_h16=f"{err16:.3e}", min_order_Q11_Q12=f"{min(orders):.3f}", err_Q33=f"{err33:.1e}",
                  Q11=f"{out[16][0, 0]:.6f}", Q12=f"{out[16][0, 1]:.6f}", Q33=f"{out[16][2, 2]:.6f}")


def test_criterion_02_prestrain_identity(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for name in sorted(materials.CATALOG):
        for n in (2, 4):
            A = rng.standard_normal((2, 2))
            A = 0.5 * (A + A.T)
            spec = materials.CATALOG[name]().with_prestrain(materials.LinearY3Prestrain(A))
            out = rve.solve_correctors(spec, (0.3, 0.7), 1.0, rve.build_rve_mesh(n, spec))
            worst = max(worst, np.linalg.norm(out.Beff - A))
    secs = time.perf_counter() - t0
    assert record(acceptance_log, 2, "prestrain identity", worst < 1e-10, secs, 10, max_error=f"{worst:.3e}")


def test_criterion_03_flat_shape_law(acceptance_log):
    t0 = time.perf_counter()
    worst = 0.0
    rules = [materials.ScalarPrestrain(0.1), materials.ScalarPrestrain(-0.4),
             materials.ConstantPrestrain([[0.2, 0.1, 0.0], [0.1, -0.3, 0.05], [0.0, 0.05, 0.1]])]
    for rule in rules:
        for n in (2, 4, 8):
            spec = materials.homogeneous(1.3, 0.8, prestrain=rule)
            out = rve.solve_correctors(spec, (0, 0), 1.0, rve.build_rve_mesh(n))
            worst = max(worst, np.linalg.norm(out.Beff))
    secs = time.perf_counter() - t0
    assert record(acceptance_log, 3, "flat-shape law", worst < 1e-9, secs, 10, max_norm=f"{worst:.3e}")


def test_criterion_04_quadrature_exactness(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    micro = checks.check_micro_exactness(rng, tol=1e-13)
    macro = checks.check_macro_exactness(rng, tol=1e-13)
    secs = time.perf_counter() - t0
    assert record(acceptance_log, 4, "quadrature exactness", micro.passed and macro.passed, secs, 1,
                  micro_rel=f"{micro.measured['max_rel_error']:.3e}",
                  macro_rel=f"{macro.measured['max_rel_error']:.3e}")


def test_criterion_05_dkt_correctness(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    rep = checks.check_dkt_reproduction(rng, trials=20)
    vert = checks.check_vertex_consistency(rng)
    nrm = checks.check_normal_bound(rng, points=100)
    secs = time.perf_counter() - t0
    ok = rep.measured["max_abs_error"] < 1e-12 and vert.measured["max_abs_error"] == 0.0 and \
        nrm.measured["max_norm"] <= 1 + 1e-14
    assert record(acceptance_log, 5, "DKT correctness", ok, secs, 5,
                  reproduction=f"{rep.measured['max_abs_error']:.3e}",
                  vertex=f"{vert.measured['max_abs_error']:.1e}", max_normal=f"{nrm.measured['max_norm']:.15f}")


def test_criterion_06_energy_gradient(acceptance_log):
    t0 = time.perf_counter()
    res = checks.check_gradient_fd(np.random.default_rng(6), directions=50)
    secs = time.perf_counter() - t0
    assert record(acceptance_log, 6, "energy gradient vs central differences", res.measured["max_rel_error"] < 1e-6,
                  secs, 30, max_rel_error=f"{res.measured['max_rel_error']:.3e}")


def test_criterion_07_macro_energy_consistency(acceptance_log):
    t0 = time.perf_counter()
    exact = np.pi * 2 / 9
    u = dkt.cylinder_map(1.0, axis=1)
    mesh = plate.build_rect_mesh(np.pi, 1.0, 8, 3)  # s1 spacing pi/8, near-square cells
    spacing, rel = [], []
    for _ in range(3):
        e = energy.assemble_energy(dkt.interpolate_dkt(u, mesh), CoefficientField.isotropic(mesh)).total
        spacing.append(np.pi / round(np.pi / np.ptp(mesh.vertices[mesh.triangles][..., 0], axis=1).max()))
        rel.append(abs(e - exact) / exact)
        mesh = plate.uniform_refine(mesh)
    secs = time.perf_counter() - t0
    ok = rel[0] > rel[1] > rel[2] and rel[2] < 0.02
    assert np.allclose(spacing, [np.pi / 8, np.pi / 16, np.pi / 32])
    assert record(acceptance_log, 7, "macro energy consistency", ok, secs, 120,
                  rel_errors="[" + ", ".join(f"{r:.2e}" for r in rel) + "]")


def test_criterion_08_minimizer_vs_curvature_oracle(acceptance_log):
    t0 = time.perf_counter()
    alpha, L, n = 0.5, 16.0, 32
    mesh = plate.build_rect_mesh(L, L, n, n)
    area = L * L
    coeffs = CoefficientField.isotropic(mesh, 1.0, 1.0, Beff=alpha * np.eye(2))
    w0 = minimize.seed_deformation({"kind": "cylinder", "kappa": 1.0, "axis": 1}, mesh)
    w, rep = minimize.minimize_energy(w0, coeffs, None, minimize.SolveConfig(max_iter=200))
    secs = time.perf_counter() - t0
    target = -25 / 72 * area * alpha ** 2
    e_err = abs(rep.energy[-1] - target) / abs(target)
    kappa = energy.mean_curvature_magnitude(w)
    k_err = abs(kappa - 5 * alpha / 4) / (5 * alpha / 4)
    assert record(acceptance_log, 8, "minimizer vs curvature oracle", e_err < 0.05 and k_err < 0.10, secs, 600,
                  energy_per_area=f"{rep.energy[-1] / area:.5f}", energy_rel_error=f"{e_err:.3%}",
                  curvature=f"{kappa:.4f}", curvature_rel_error=f"{k_err:.2%}", status=rep.status,
                  iterations=rep.iterations)


def test_criterion_09_coercivity_and_isometry_defect(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    coer = checks.measure_coercivity(rng, levels=3, samples=50)
    defect = checks.measure_isometry_defect(rng, levels=3, samples=10)
    secs = time.perf_counter() - t0
    ok = max(coer) <= 2 * min(coer) and max(defect) <= 2 * min(defect)
    assert record(acceptance_log, 9, "coercivity and isometry-defect constants", ok, secs, 300,
                  coercivity="[" + ", ".join(f"{c:.3f}" for c in coer) + "]",
                  defect="[" + ", ".join(f"{c:.4f}" for c in defect) + "]")


def test_criterion_10_commuting_limits(acceptance_log):
    t0 = time.perf_counter()
    table = studies.commute_study(materials.graded_bilayer(), 1.0, [4, 8, 16],
                                  plate.build_rect_mesh(1.0, 1.0, 2, 2), [0, 1, 2],
                                  dkt.cylinder_map(1.0, axis=1))
    secs = time.perf_counter() - t0
    s = table.summary
    assert record(acceptance_log, 10, "commuting limits", s["discrepancy"] <= 2 * s["finest_error_estimate"],
                  secs, 900, discrepancy=f"{s['discrepancy']:.3e}",
                  finest_error_estimate=f"{s['finest_error_estimate']:.3e}",
                  limit=f"{s['limit_H_then_h']:.10f}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
