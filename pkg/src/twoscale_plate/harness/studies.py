"""Convergence tables for the micro, macro, simultaneous and commuting-limit studies."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import dkt, energy, io, materials, plate, rve


# ---------------------------------------------------------------------------
# extrapolation


def observed_orders(errors, ratio=2.0):
    """``log_ratio(e_k / e_{k+1})``; ``nan`` where undefined."""
    out = []
    for a, b in zip(errors[:-1], errors[1:]):
        out.append(math.log(a / b, ratio) if a > 0 and b > 0 else float("nan"))
    return out


def estimated_order(x0, x1, x2, ratio=2.0):
    d1, d2 = x1 - x0, x2 - x1
    if d1 == 0 or d2 == 0 or d1 * d2 < 0:
        return float("nan")
    return math.log(abs(d1 / d2), ratio)


def richardson_limit(values, ratio=2.0, order=None, fallback_order=2.0, bounds=(0.5, 6.0)):
    """Extrapolated limit from the last three values of a halving sequence.

    With ``order=None`` the order is estimated from the data (Aitken's
    process); estimates that are undefined or outside ``bounds`` fall back
    to ``fallback_order``.  Returns ``(limit, order_used)``.
    """
    x0, x1, x2 = (float(v) for v in values[-3:])
    p = order
    if p is None:
        p = estimated_order(x0, x1, x2, ratio)
        if not (bounds[0] <= p <= bounds[1]):
            p = fallback_order
    f = ratio ** p
    return x2 + (x2 - x1) / (f - 1.0), p


# ---------------------------------------------------------------------------
# tables


@dataclass
class ConvergenceTable:
    mode: str
    columns: list
    rows: list = field(default_factory=list)
    reference: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def add(self, **row):
        self.rows.append(row)

    def csv(self):
        return io.csv_text(self.columns, [[r.get(c, "") for c in self.columns] for r in self.rows])

    def to_dict(self):
        return {"mode": self.mode, "columns": self.columns, "rows": self.rows,
                "reference": self.reference, "summary": self.summary}

    def write(self, out_dir, stem=None):
        stem = stem or f"converge_{self.mode}"
        io.atomic_write(f"{out_dir}/{stem}.csv", self.csv())
        io.write_json(f"{out_dir}/{stem}.json", self.to_dict())


def _attach_orders(table, err_key, order_key="order"):
    errs = [r[err_key] for r in table.rows]
    orders = observed_orders(errs)
    table.rows[0][order_key] = float("nan")
    for r, p in zip(table.rows[1:], orders):
        r[order_key] = p


# ---------------------------------------------------------------------------
# micro


def _is_homogeneous_isotropic(spec: materials.MaterialSpec):
    return (len(spec.regions) == 1 and spec.regions[0].lame_field is None
            and spec.regions[0].macro is None)


def micro_study(spec, gamma, divisions, s=(0.0, 0.0), threads=1) -> ConvergenceTable:
    """Cell outputs for a sequence of uniform RVE divisions."""
    def work(n):
        mesh = rve.build_rve_mesh((n, n, n), spec)
        return rve.solve_correctors(spec, np.asarray(s, float), gamma, mesh)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        outs = list(ex.map(work, divisions))
    table = ConvergenceTable("micro", ["h", "Q11", "Q12", "Q22", "Q33", "B11", "B22", "B12", "error", "order"])
    if _is_homogeneous_isotropic(spec):
        lame = spec.regions[0].lame
        ref = rve.analytic_qhat_isotropic(lame.lam, lame.mu)
        table.reference = {"Qhat": ref, "tag": "derived", "source": "closed-form isotropic relaxation"}
    else:
        ref = np.array([[richardson_limit([o.Qhat[i, j] for o in outs])[0] for j in range(3)]
                        for i in range(3)])
        table.reference = {"Qhat": ref, "tag": "derived", "source": "Richardson self-convergence"}
    for n, o in zip(divisions, outs):
        table.add(h=1.0 / n, Q11=o.Qhat[0, 0], Q12=o.Qhat[0, 1], Q22=o.Qhat[1, 1], Q33=o.Qhat[2, 2],
                  B11=o.Beff[0, 0], B22=o.Beff[1, 1], B12=o.Beff[0, 1],
                  error=float(np.max(np.abs(o.Qhat - ref))))
    _attach_orders(table, "error")
    return table


# ---------------------------------------------------------------------------
# macro


def deformation_from_desc(desc):
    desc = dict(desc or {"kind": "cylinder"})
    kind = desc.get("kind", "cylinder")
    if kind == "cylinder":
        return dkt.cylinder_map(float(desc.get("kappa", 1.0)), int(desc.get("axis", 1)),
                                bool(desc.get("anchored", False)))
    if kind == "flat":
        return dkt.affine_map(np.eye(3)[:, :2], np.zeros(3))
    raise ValueError(f"unknown analytic deformation {kind!r}")


def macro_energy(mesh, u, coeffs):
    w = dkt.interpolate_dkt(u, mesh)
    return energy.assemble_energy(w, coeffs, with_offset=True)


def macro_study(base_mesh, levels, u, coeff_factory, reference=None) -> ConvergenceTable:
    """Energy of the interpolant of ``u`` on successively refined meshes.

    ``coeff_factory(mesh)`` builds the coefficient field; ``reference`` is a
    ``(value, tag, source)`` triple or ``None`` for self-convergence.
    """
    table = ConvergenceTable("macro", ["H", "energy", "energy_with_offset", "error", "order"])
    mesh = base_mesh
    meshes = {}
    for lev in range(max(levels) + 1):
        if lev in levels:
            meshes[lev] = mesh
        mesh = plate.uniform_refine(mesh) if lev < max(levels) else mesh
    energies = []
    for lev in levels:
        m = meshes[lev]
        rep = macro_energy(m, u, coeff_factory(m))
        energies.append((m.H, rep.total, rep.total_with_offset))
    if reference is None:
        ref = richardson_limit([e[1] for e in energies])[0]
        reference = (ref, "derived", "Richardson self-convergence")
    table.reference = {"energy": reference[0], "tag": reference[1], "source": reference[2]}
    for H, e, eo in energies:
        table.add(H=H, energy=e, energy_with_offset=eo, error=abs(e - reference[0]))
    _attach_orders(table, "error")
    return table


# ---------------------------------------------------------------------------
# simultaneous and commuting limits


def _grid_energy(spec, gamma, n, mesh, u, threads):
    rmesh = rve.build_rve_mesh((n, n, n), spec)
    coeffs = energy.CoefficientField.from_cell_solves(mesh, spec, gamma, rmesh, threads=threads)
    return macro_energy(mesh, u, coeffs).total


def _mesh_levels(base_mesh, levels):
    out, mesh = {}, base_mesh
    for lev in range(max(levels) + 1):
        out[lev] = mesh
        if lev < max(levels):
            mesh = plate.uniform_refine(mesh)
    return [out[lev] for lev in levels]


def simultaneous_study(spec, gamma, divisions, base_mesh, levels, u, threads=1) -> ConvergenceTable:
    """Joint refinement ``(h_k, H_k)``."""
    meshes = _mesh_levels(base_mesh, levels)
    vals = [_grid_energy(spec, gamma, n, m, u, threads) for n, m in zip(divisions, meshes)]
    ref, p = richardson_limit(vals)
    table = ConvergenceTable("simultaneous", ["h", "H", "energy", "error", "order"],
                             reference={"energy": ref, "tag": "derived",
                                        "source": "Richardson self-convergence", "order_used": p})
    for n, m, e in zip(divisions, meshes, vals):
        table.add(h=1.0 / n, H=m.H, energy=e, error=abs(e - ref))
    _attach_orders(table, "error")
    return table


def commute_study(spec, gamma, divisions, base_mesh, levels, u, threads=1) -> ConvergenceTable:
    """Energy on the full ``(h, H)`` grid and the two iterated extrapolated limits.

    Discrepancy metric (a harness convention): the difference between the
    limit taken along ``H`` first and the limit taken along ``h`` first, each
    by Richardson extrapolation with an estimated order.  It is compared with
    the finest-level error estimate ``|E(h_min, H_min) - mean limit|``.
    """
    meshes = _mesh_levels(base_mesh, levels)
    E = np.zeros((len(divisions), len(meshes)))
    for i, n in enumerate(divisions):
        rmesh = rve.build_rve_mesh((n, n, n), spec)
        for j, m in enumerate(meshes):
            coeffs = energy.CoefficientField.from_cell_solves(m, spec, gamma, rmesh, threads=threads)
            E[i, j] = macro_energy(m, u, coeffs).total
    row_lim = [richardson_limit(E[i, :])[0] for i in range(E.shape[0])]  # H -> 0 at fixed h
    col_lim = [richardson_limit(E[:, j])[0] for j in range(E.shape[1])]  # h -> 0 at fixed H
    lim_H_first, p_h = richardson_limit(row_lim)
    lim_h_first, p_H = richardson_limit(col_lim)
    mean = 0.5 * (lim_H_first + lim_h_first)
    est = abs(E[-1, -1] - mean)
    disc = abs(lim_H_first - lim_h_first)
    table = ConvergenceTable("commute", ["h", "H", "energy"])
    for i, n in enumerate(divisions):
        for j, m in enumerate(meshes):
            table.add(h=1.0 / n, H=m.H, energy=E[i, j])
    table.reference = {"tag": "derived", "source": "iterated Richardson extrapolation"}
    table.summary = {
        "limit_H_then_h": lim_H_first,
        "limit_h_then_H": lim_h_first,
        "discrepancy": disc,
        "finest_error_estimate": est,
        "ratio": disc / est if est > 0 else float("inf"),
        "pass": bool(disc <= 2 * est),
        "row_limits": row_lim,
        "column_limits": col_lim,
        "order_h": p_h,
        "order_H": p_H,
    }
    return table
