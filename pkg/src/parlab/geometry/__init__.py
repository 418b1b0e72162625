from .distance import BallGrowthTable, ball_growth_samples, distance_field, is_star_shaped
from .mesh import MeshManifold, ScalarField, VectorField, field_on, refine
from .meshgen import (
    build_annulus_mesh,
    build_disk_mesh,
    build_halfannulus_mesh,
    build_halfdisk_mesh,
    build_model_mesh,
    model_rings,
    quality_report,
)
from .meshio import load_mesh, save_mesh
from .model import ModelManifold, build_model, unit_sphere_area

__all__ = [
    "BallGrowthTable",
    "ball_growth_samples",
    "distance_field",
    "is_star_shaped",
    "load_mesh",
    "save_mesh",
    "MeshManifold",
    "ModelManifold",
    "ScalarField",
    "VectorField",
    "build_annulus_mesh",
    "build_disk_mesh",
    "build_halfannulus_mesh",
    "build_halfdisk_mesh",
    "build_model",
    "build_model_mesh",
    "field_on",
    "model_rings",
    "quality_report",
    "refine",
    "unit_sphere_area",
]
