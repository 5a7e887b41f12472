"""High-order prismatic solid-shell elements for geometrically nonlinear shells."""

from .kinematics import Material
from .shellgeom import ShellMesh, read_mesh, write_mesh
from .element import Load, self_weight
from .model import ShellModel

__all__ = ["Material", "ShellMesh", "read_mesh", "write_mesh", "Load", "self_weight", "ShellModel"]
__version__ = "0.1.0"
