"""Electrodynamic levitation (TEAM problem 28) with POD reduced-order models.

Axisymmetric transient eddy-current finite elements coupled to a 1D plate
motion, solved either in full or with a POD basis that is rebuilt on a new
mesh at every step or kept fixed on a deforming mesh.
"""
from .config import SimConfig, parse_config, write_config
from .errors import *  # noqa: F401,F403
from .fem import (AssembledSystem, FieldSolution, MaterialMap, SourceSpec, assemble_mass,
                  assemble_source, assemble_stiffness, assemble_system, compute_lorentz_force,
                  post_fields)
from .mesh import (Coil, DeformBox, Geometry, Mesh, deform_subdomain, generate_mesh, locate_points,
                   quality, read_mesh, remesh, write_mesh)
from .mor import (PODBasis, ReducedBasis, SnapshotMatrix, build_snapshots, compute_basis, lift,
                  project, project_between_meshes, read_snapshots, reduce_operators, step_reduced,
                  write_snapshots)
from .report import ErrorReport, l2_relative_error
from .runner import compare_runs, execute
from .sim import (MechParams, MechState, TimeGrid, Trajectory, deform_snapshots, remesh_snapshot_store,
                  run_full, run_rom_deform, run_rom_remesh, step_full, step_mechanics)

__version__ = "0.1.0"
