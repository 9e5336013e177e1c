"""Microscopic elasticity tensors and prestrain fields on the unit cell.

The unit cell (RVE) is the box ``(0,1)^2 x (-1/2,1/2)``.  A material is a
list of axis-aligned boxes tiling the cell, each carrying an isotropic Lame
pair and a prestrain rule.  Coefficients may be modulated smoothly in the
macroscopic position ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

RVE_LO = np.array([0.0, 0.0, -0.5])
RVE_HI = np.array([1.0, 1.0, 0.5])


class MaterialError(ValueError):
    """Invalid material definition or sample request."""


@dataclass(frozen=True)
class IsotropicLame:
    lam: float
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise MaterialError(f"shear modulus must be positive, got mu={self.mu}")
        if not 2 * self.mu + 3 * self.lam > 0:
            raise MaterialError(
                f"bulk part 2*mu+3*lambda must be positive, got {2 * self.mu + 3 * self.lam}"
            )

    @property
    def ellipticity_constant(self) -> float:
        """Smallest c0 with |G|^2/c0 <= <L G, G> <= c0 |G|^2 on symmetric G."""
        k = 2 * self.mu + 3 * self.lam
        g = 2 * self.mu
        return max(k, g, 1 / g, 1 / k)


def sym(F):
    return 0.5 * (F + np.swapaxes(F, -1, -2))


def apply_elasticity(lame: IsotropicLame, F):
    """Return ``2 mu sym(F) + lambda tr(F) I`` (works on stacks of matrices)."""
    F = np.asarray(F, dtype=float)
    tr = np.trace(F, axis1=-2, axis2=-1)
    return 2 * lame.mu * sym(F) + lame.lam * tr[..., None, None] * np.eye(3)


def quadratic_form(lame: IsotropicLame, F) -> float:
    F = np.asarray(F, dtype=float)
    return float(np.sum(apply_elasticity(lame, F) * F))


def iota(G):
    """Embed a 2x2 matrix as the upper-left block of a 3x3 matrix."""
    G = np.asarray(G, dtype=float)
    out = np.zeros(G.shape[:-2] + (3, 3))
    out[..., :2, :2] = G
    return out


# ---------------------------------------------------------------------------
# prestrain rules


@dataclass(frozen=True)
class ConstantPrestrain:
    matrix: tuple

    def __init__(self, matrix):
        M = np.asarray(matrix, dtype=float)
        if M.shape != (3, 3):
            raise MaterialError("constant prestrain must be a 3x3 matrix")
        if not np.allclose(M, M.T, atol=1e-14):
            raise MaterialError("prestrain must be symmetric")
        object.__setattr__(self, "matrix", tuple(map(tuple, M)))

    def values(self, y):
        return np.broadcast_to(np.array(self.matrix), (len(y), 3, 3)).copy()


@dataclass(frozen=True)
class ScalarPrestrain:
    rho: float

    def values(self, y):
        return np.broadcast_to(self.rho * np.eye(3), (len(y), 3, 3)).copy()


@dataclass(frozen=True)
class LinearY3Prestrain:
    """``B(y) = y3 * iota(A)`` with a symmetric 2x2 matrix ``A``."""

    A: tuple

    def __init__(self, A):
        A = np.asarray(A, dtype=float)
        if A.shape != (2, 2) or not np.allclose(A, A.T, atol=1e-14):
            raise MaterialError("y3-linear prestrain needs a symmetric 2x2 matrix")
        object.__setattr__(self, "A", tuple(map(tuple, A)))

    def values(self, y):
        return y[:, 2, None, None] * iota(np.array(self.A))


ZERO_PRESTRAIN = ScalarPrestrain(0.0)


# ---------------------------------------------------------------------------
# regions and specs


@dataclass(frozen=True)
class RegionBox:
    lo: tuple
    hi: tuple

    def __init__(self, lo, hi):
        lo = tuple(float(v) for v in lo)
        hi = tuple(float(v) for v in hi)
        if len(lo) != 3 or len(hi) != 3:
            raise MaterialError("region boxes are three-dimensional")
        if not all(a < b for a, b in zip(lo, hi)):
            raise MaterialError(f"degenerate region box {lo} -> {hi}")
        if np.any(np.array(lo) < RVE_LO - 1e-14) or np.any(np.array(hi) > RVE_HI + 1e-14):
            raise MaterialError(f"region box {lo} -> {hi} leaves the unit cell")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def contains(self, y, strict=False):
        y = np.atleast_2d(y)
        lo, hi = np.array(self.lo), np.array(self.hi)
        if strict:
            return np.all((y > lo) & (y < hi), axis=1)
        return np.all((y >= lo) & (y <= hi), axis=1)


# (s) -> (lambda factor, mu factor, rho factor)
MacroModulation = Callable[[np.ndarray], tuple]
# (s, y[N,3]) -> (lambda[N], mu[N]); must not vary with s (use ``macro`` for that)
LameField = Callable[[np.ndarray, np.ndarray], tuple]


@dataclass(frozen=True)
class Region:
    box: RegionBox
    lame: IsotropicLame
    prestrain: object = ZERO_PRESTRAIN
    lame_field: LameField | None = None
    macro: MacroModulation | None = None

    def coefficients(self, s, y):
        """Lame arrays and prestrain stack at points ``y`` for macro point ``s``."""
        n = len(y)
        if self.lame_field is not None:
            lam, mu = self.lame_field(np.asarray(s, float), y)
            lam = np.broadcast_to(np.asarray(lam, float), (n,)).copy()
            mu = np.broadcast_to(np.asarray(mu, float), (n,)).copy()
        else:
            lam = np.full(n, self.lame.lam)
            mu = np.full(n, self.lame.mu)
        B = self.prestrain.values(y)
        if self.macro is not None:
            fl, fm, fr = self.macro(np.asarray(s, float))
            lam, mu, B = lam * fl, mu * fm, B * fr
        return lam, mu, B


@dataclass(frozen=True)
class MaterialSample:
    lame: IsotropicLame
    prestrain: np.ndarray


@dataclass(frozen=True)
class MaterialSpec:
    regions: tuple
    name: str = "custom"
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        if not self.regions:
            raise MaterialError("a material needs at least one region")

    @property
    def s_constant(self) -> bool:
        return all(r.macro is None for r in self.regions)

    def macro_key(self, s):
        """Hashable summary of the macro dependence at ``s``.

        Cell outputs depend on ``s`` only through the region modulations.
        """
        return tuple(None if r.macro is None else tuple(round(float(v), 14) for v in r.macro(s))
                     for r in self.regions)

    def planes(self):
        """Sorted coordinates of all region faces, one list per axis."""
        out = []
        for axis in range(3):
            vals = {r.box.lo[axis] for r in self.regions} | {r.box.hi[axis] for r in self.regions}
            out.append(sorted(vals))
        return out

    def region_index(self, y, hint=None) -> int:
        y = np.asarray(y, float).reshape(1, 3)
        if np.any(y < RVE_LO - 1e-14) or np.any(y > RVE_HI + 1e-14):
            raise MaterialError(f"point {y.ravel()} is outside the unit cell")
        inside = [k for k, r in enumerate(self.regions) if r.box.contains(y)[0]]
        if len(inside) == 1:
            return inside[0]
        if hint is not None and hint in inside:
            return hint
        raise MaterialError(f"point {y.ravel()} lies on a region face; supply a region hint")

    def region_ids(self, y):
        """Region index for points strictly inside some region (vectorized)."""
        y = np.atleast_2d(y)
        ids = np.full(len(y), -1, dtype=int)
        for k, r in enumerate(self.regions):
            mask = r.box.contains(y, strict=True)
            ids[mask] = k
        if np.any(ids < 0):
            bad = y[np.argmax(ids < 0)]
            raise MaterialError(f"point {bad} is not strictly inside a region")
        return ids

    def evaluate(self, s, y, region_ids=None):
        """Vectorized sample: returns ``(lam[N], mu[N], B[N,3,3])``."""
        y = np.atleast_2d(np.asarray(y, float))
        if region_ids is None:
            region_ids = self.region_ids(y)
        lam = np.empty(len(y))
        mu = np.empty(len(y))
        B = np.empty((len(y), 3, 3))
        for k, r in enumerate(self.regions):
            mask = region_ids == k
            if np.any(mask):
                lam[mask], mu[mask], B[mask] = r.coefficients(s, y[mask])
        return lam, mu, B

    def sample(self, s, y, hint=None) -> MaterialSample:
        k = self.region_index(y, hint)
        lam, mu, B = self.regions[k].coefficients(s, np.asarray(y, float).reshape(1, 3))
        return MaterialSample(IsotropicLame(float(lam[0]), float(mu[0])), B[0])

    def with_prestrain(self, rule) -> "MaterialSpec":
        regions = [replace(r, prestrain=rule) for r in self.regions]
        return MaterialSpec(regions, name=f"{self.name}+{type(rule).__name__}", metadata=self.metadata)

    def validate(self, s_samples=None, lipschitz_bound=1e3):
        """Check tiling, ellipticity and macro Lipschitz bounds.  Returns warnings."""
        vol = sum(r.box.volume for r in self.regions)
        if abs(vol - 1.0) > 1e-14:
            raise MaterialError(f"regions do not tile the unit cell: total volume {vol!r}")
        for a in range(len(self.regions)):
            for b in range(a + 1, len(self.regions)):
                A, B = self.regions[a].box, self.regions[b].box
                ov = np.prod(np.clip(np.minimum(A.hi, B.hi) - np.maximum(A.lo, B.lo), 0, None))
                if ov > 0:
                    raise MaterialError(f"regions {a} and {b} overlap")
        warnings = []
        if s_samples is None:
            s_samples = np.array([[0.0, 0.0]])
        s_samples = np.atleast_2d(s_samples)
        for k, r in enumerate(self.regions):
            ys = _interior_grid(r.box)
            for s in s_samples:
                lam, mu, _ = r.coefficients(s, ys)
                if np.any(mu <= 0) or np.any(2 * mu + 3 * lam <= 0):
                    raise MaterialError(f"region {k} loses ellipticity at s={s}")
            if r.macro is not None and len(s_samples) > 1:
                vals = np.array([r.macro(s) for s in s_samples])
                dv = np.linalg.norm(vals[:, None, :] - vals[None, :, :], axis=-1)
                ds = np.linalg.norm(s_samples[:, None, :] - s_samples[None, :, :], axis=-1)
                mask = ds > 0
                q = float(np.max(dv[mask] / ds[mask])) if np.any(mask) else 0.0
                if not np.isfinite(q) or q > lipschitz_bound:
                    warnings.append(f"region {k}: sampled macro Lipschitz quotient {q:.3g}")
        return warnings


def _interior_grid(box: RegionBox, n=3):
    t = (np.arange(n) + 0.5) / n
    lo, hi = np.array(box.lo), np.array(box.hi)
    g = np.stack(np.meshgrid(t, t, t, indexing="ij"), axis=-1).reshape(-1, 3)
    return lo + g * (hi - lo)


# ---------------------------------------------------------------------------
# catalog

_FULL = RegionBox(RVE_LO, RVE_HI)


def homogeneous(lam=1.0, mu=1.0, prestrain=ZERO_PRESTRAIN) -> MaterialSpec:
    return MaterialSpec([Region(_FULL, IsotropicLame(lam, mu), prestrain)], name="homogeneous")


def bilayer(top=(1.0, 1.0), bottom=(1.0, 1.0), rho_top=0.0, rho_bottom=0.0, split=0.0,
            macro_top=None) -> MaterialSpec:
    """Two layers split at ``y3 = split`` with isotropic prestrain ``rho * I`` each."""
    upper = Region(RegionBox((0, 0, split), (1, 1, 0.5)), IsotropicLame(*top),
                   ScalarPrestrain(rho_top), macro=macro_top)
    lower = Region(RegionBox((0, 0, -0.5), (1, 1, split)), IsotropicLame(*bottom),
                   ScalarPrestrain(rho_bottom))
    return MaterialSpec([lower, upper], name="bilayer")


def checkerboard(a=(1.0, 1.0), b=(4.0, 2.0), rho_top=0.1, rho_bottom=-0.1) -> MaterialSpec:
    """In-plane 2x2 checkerboard of two materials, prestrained as a bilayer."""
    regions = []
    for i in range(2):
        for j in range(2):
            lame = IsotropicLame(*(a if (i + j) % 2 == 0 else b))
            for lo3, hi3, rho in ((-0.5, 0.0, rho_bottom), (0.0, 0.5, rho_top)):
                box = RegionBox((0.5 * i, 0.5 * j, lo3), (0.5 * (i + 1), 0.5 * (j + 1), hi3))
                regions.append(Region(box, lame, ScalarPrestrain(rho)))
    return MaterialSpec(regions, name="checkerboard")


@dataclass(frozen=True)
class LinearGrade:
    """Scalar factor ``1 + slope . s`` applied to (lambda, mu, rho)."""

    slope: tuple = (0.5, 0.0)
    on_lame: bool = True
    on_prestrain: bool = False

    def __call__(self, s):
        f = 1.0 + float(np.dot(self.slope, np.asarray(s, float)[:2]))
        return (f if self.on_lame else 1.0, f if self.on_lame else 1.0,
                f if self.on_prestrain else 1.0)


def graded_bilayer(top=(1.0, 1.0), bottom=(1.0, 1.0), rho_top=0.1, rho_bottom=-0.1,
                   slope=(0.3, 0.0)) -> MaterialSpec:
    """Bilayer whose top layer stiffens linearly in ``s``."""
    spec = bilayer(top, bottom, rho_top, rho_bottom, macro_top=LinearGrade(tuple(slope)))
    return replace(spec, name="graded_bilayer")


@dataclass(frozen=True)
class SineLambda:
    """``lambda(y) = base + amp * sin(2 pi y1)`` with constant ``mu``."""

    base: float = 2.0
    amp: float = 1.0
    mu: float = 1.0

    def __call__(self, s, y):
        return self.base + self.amp * np.sin(2 * np.pi * y[:, 0]), np.full(len(y), self.mu)


def smooth_lambda(base=2.0, amp=1.0, mu=1.0) -> MaterialSpec:
    field_ = SineLambda(base, amp, mu)
    region = Region(_FULL, IsotropicLame(base, mu), ZERO_PRESTRAIN, lame_field=field_)
    return MaterialSpec([region], name="smooth_lambda")


CATALOG = {
    "homogeneous": homogeneous,
    "bilayer": bilayer,
    "checkerboard": checkerboard,
    "graded_bilayer": graded_bilayer,
    "smooth_lambda": smooth_lambda,
}


def prestrain_rule(desc) -> object:
    """Build a prestrain rule from a config mapping."""
    kind = desc.get("kind", "zero")
    if kind == "zero":
        return ZERO_PRESTRAIN
    if kind == "scalar":
        return ScalarPrestrain(float(desc["rho"]))
    if kind == "constant":
        return ConstantPrestrain(desc["matrix"])
    if kind == "y3_linear":
        return LinearY3Prestrain(desc["A"])
    raise MaterialError(f"unknown prestrain kind {kind!r}")


def from_config(desc: dict) -> MaterialSpec:
    """Material from a config table: ``{"catalog": name, ...params, "prestrain": {...}}``."""
    desc = dict(desc)
    name = desc.pop("catalog", "homogeneous")
    override = desc.pop("prestrain", None)
    if name not in CATALOG:
        raise MaterialError(f"unknown material catalog entry {name!r}; choose from {sorted(CATALOG)}")
    params = {k: (tuple(v) if isinstance(v, list) else v) for k, v in desc.items()}
    try:
        spec = CATALOG[name](**params)
    except TypeError as exc:
        raise MaterialError(f"bad parameters for {name!r}: {exc}") from None
    if override is not None:
        spec = spec.with_prestrain(prestrain_rule(override))
    return spec


def region_volumes(spec: MaterialSpec) -> Sequence[float]:
    return [r.box.volume for r in spec.regions]
