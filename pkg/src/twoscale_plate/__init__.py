"""Two-scale finite element simulation of prestrained composite plates.

A periodic cell problem on a hexahedral grid produces effective bending
stiffness and prestrain; a discrete Kirchhoff triangle discretization of the
nonlinear bending energy is then minimized under a nodewise isometry
constraint.
"""

__version__ = "0.1.0"

from . import dkt, energy, io, materials, minimize, plate, rve  # noqa: E402

__all__ = ["dkt", "energy", "io", "materials", "minimize", "plate", "rve", "__version__"]
