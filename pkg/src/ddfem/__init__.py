"""ddfem: four-field mixed finite elements for incompressible nonlinear
elasticity in 2D (displacement, displacement gradient, first
Piola-Kirchhoff stress, pressure) with discontinuous displacements and
tensor-valued BDM spaces."""

from .assembly import BlockState, BoundaryData, FourFieldSpaces
from .materials import C1, C2, Material
from .mesh import TriangleMesh, structured_square_mesh
from .solver import NewtonConfig

__all__ = [
    "BlockState",
    "BoundaryData",
    "FourFieldSpaces",
    "C1",
    "C2",
    "Material",
    "TriangleMesh",
    "structured_square_mesh",
    "NewtonConfig",
]

__version__ = "0.1.0"
