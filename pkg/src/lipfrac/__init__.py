"""Explicit-dynamics finite elements for brittle fracture with Lipschitz-regularized damage."""

from .config import ConfigError, SimulationConfig, load_config
from .driver import Simulation, run
from .dynamics import (
    BoundaryCondition,
    DivergenceError,
    KinematicState,
    MassSolver,
    TimeControl,
    critical_timestep,
)
from .fem import ElementKinematics, assemble_mass, external_traction, kinetic_energy
from .lipfield import (
    BoundsSolver,
    DamageState,
    RegionSolveError,
    compute_bounds,
    damage_update,
    local_damage_field,
)
from .material import (
    MaterialParams,
    Strain2D,
    StrainSplit,
    WaveSpeeds,
    eigen_split,
    lame_plane_strain,
    wave_speeds,
    yc_from_gc,
)
from .mesh import LipMesh, Mesh, build_lipmesh, graph_distance, load_mesh, min_element_size

__all__ = [
    "BoundaryCondition",
    "BoundsSolver",
    "ConfigError",
    "DamageState",
    "DivergenceError",
    "ElementKinematics",
    "KinematicState",
    "LipMesh",
    "MassSolver",
    "MaterialParams",
    "Mesh",
    "RegionSolveError",
    "Simulation",
    "SimulationConfig",
    "Strain2D",
    "StrainSplit",
    "TimeControl",
    "WaveSpeeds",
    "assemble_mass",
    "build_lipmesh",
    "compute_bounds",
    "critical_timestep",
    "damage_update",
    "eigen_split",
    "external_traction",
    "graph_distance",
    "kinetic_energy",
    "lame_plane_strain",
    "load_config",
    "load_mesh",
    "local_damage_field",
    "min_element_size",
    "run",
    "wave_speeds",
    "yc_from_gc",
]
