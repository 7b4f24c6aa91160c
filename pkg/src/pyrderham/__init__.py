"""Lowest-order de Rham finite elements on tetrahedral, hexahedral and pyramidal meshes."""
from .femspace import FieldFn, LocalInterpolant, derivative_matrix, interpolate, pullback
from .globalspace import GlobalField, build_dof_map, check_conformity, global_derivative, interpolate_global
from .harness import StudyConfig, build_demo_thp, catalog_field, run_convergence
from .mesh import ThpMesh, distortion, load_mesh, refine, save_mesh, validate
from .refbasis import Space, basis
from .refgeom import ElementMap, Kind, reference_element

__version__ = "0.1.0"

__all__ = [
    "ElementMap", "FieldFn", "GlobalField", "Kind", "LocalInterpolant", "Space", "StudyConfig", "ThpMesh",
    "basis", "build_demo_thp", "build_dof_map", "catalog_field", "check_conformity", "derivative_matrix",
    "distortion", "global_derivative", "interpolate", "interpolate_global", "load_mesh", "pullback",
    "reference_element", "refine", "run_convergence", "save_mesh", "validate",
]
