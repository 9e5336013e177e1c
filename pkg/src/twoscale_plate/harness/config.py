"""Run configuration: TOML file plus command-line overrides, validated before any solve."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .. import materials, plate, rve
from ..minimize import SolveConfig


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "out": "out",
    "gamma": 1.0,
    "material": {"catalog": "homogeneous"},
    "cell": {"divisions": 8, "export_vtk": False},
    "plate": {"width": 1.0, "height": 1.0, "nx": 4, "ny": 4, "refine": 0},
    "boundary": {"selector": "none", "R": [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]], "b": [0.0, 0.0, 0.0]},
    "coefficients": {"mode": "cell"},
    "solver": {},
    "converge": {"mode": "micro", "h_list": [4, 8, 16], "H_levels": [0, 1, 2]},
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _set_path(d, dotted, value):
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


def parse_override(text: str):
    """``key.path=value`` with the value parsed as a TOML scalar or array."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, raw = text.split("=", 1)
    try:
        value = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        value = raw
    return key.strip(), value


@dataclass
class RunConfig:
    raw: dict
    source: str | None = None
    warnings: list = field(default_factory=list)

    # -- construction -------------------------------------------------------

    @classmethod
    def load(cls, path=None, overrides=(), **flags):
        data = {}
        if path is not None:
            p = Path(path)
            try:
                data = tomli.loads(p.read_text())
            except FileNotFoundError:
                raise ConfigError(f"config file {p} not found") from None
            except tomli.TOMLDecodeError as exc:
                raise ConfigError(f"{p}: {exc}") from None
        raw = _merge(DEFAULTS, data)
        for item in overrides:
            k, v = parse_override(item) if isinstance(item, str) else item
            _set_path(raw, k, v)
        for k, v in flags.items():
            if v is not None:
                raw[k] = v
        cfg = cls(raw, None if path is None else str(path))
        cfg.validate()
        return cfg

    @classmethod
    def from_dict(cls, data):
        cfg = cls(_merge(DEFAULTS, data))
        cfg.validate()
        return cfg

    # -- accessors ----------------------------------------------------------

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def threads(self) -> int:
        return int(self.raw["threads"])

    @property
    def out(self) -> Path:
        return Path(self.raw["out"])

    @property
    def gamma(self) -> float:
        return float(self.raw["gamma"])

    def material(self) -> materials.MaterialSpec:
        return materials.from_config(self.raw["material"])

    def rve_mesh(self, divisions=None, spec=None):
        div = self.raw["cell"]["divisions"] if divisions is None else divisions
        if isinstance(div, int):
            div = (div, div, div)
        return rve.build_rve_mesh(tuple(div), spec or self.material())

    def plate_mesh(self, refine=None):
        p = self.raw["plate"]
        if p.get("mesh_file"):
            mesh = plate.read_mesh(p["mesh_file"])
        else:
            mesh = plate.build_rect_mesh(float(p["width"]), float(p["height"]), int(p["nx"]), int(p["ny"]))
        for _ in range(int(p.get("refine", 0) if refine is None else refine)):
            mesh = plate.uniform_refine(mesh)
        return mesh

    def dirichlet(self, mesh):
        b = self.raw["boundary"]
        sel = b.get("selector", "none")
        required = sel not in (None, "none", [], "")
        return plate.make_dirichlet(mesh, sel, np.array(b["R"], float), np.array(b["b"], float), required)

    def solver(self) -> SolveConfig:
        return SolveConfig.from_dict(self.raw["solver"])

    # -- validation ---------------------------------------------------------

    def validate(self):
        r = self.raw
        try:
            if self.threads < 1:
                raise ConfigError("threads must be >= 1")
            if not self.gamma > 0:
                raise ConfigError("gamma must be positive")
            spec = self.material()
            p = r["plate"]
            if not p.get("mesh_file"):
                if float(p["width"]) <= 0 or float(p["height"]) <= 0:
                    raise ConfigError("plate dimensions must be positive")
                if int(p["nx"]) < 1 or int(p["ny"]) < 1:
                    raise ConfigError("nx and ny must be >= 1")
            s_samples = np.array([[0.0, 0.0], [float(p.get("width", 1.0)), 0.0],
                                  [0.0, float(p.get("height", 1.0))]])
            self.warnings = spec.validate(s_samples)
            self.rve_mesh(spec=spec)
            mesh = self.plate_mesh(refine=0)
            self.dirichlet(mesh)
            mode = r["coefficients"].get("mode", "cell")
            if mode not in ("cell", "analytic"):
                raise ConfigError(f"unknown coefficient mode {mode!r}")
            if mode == "analytic":
                c = r["coefficients"]
                materials.IsotropicLame(float(c.get("lam", 1.0)), float(c.get("mu", 1.0)))
                B = np.asarray(c.get("Beff", np.zeros((2, 2))), float)
                if B.shape != (2, 2) or not np.allclose(B, B.T):
                    raise ConfigError("coefficients.Beff must be a symmetric 2x2 matrix")
            self.solver()
            if r["converge"].get("mode") not in ("micro", "macro", "simultaneous", "commute"):
                raise ConfigError(f"unknown convergence mode {r['converge'].get('mode')!r}")
        except ConfigError:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
