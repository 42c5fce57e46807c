"""Standard and pressure-robust Crouzeix-Raviart discretizations of the Stokes
equations on uniform and Shishkin meshes, with the Hiemenz stagnation-point
flow as benchmark."""

from .boundary_layer import ExactFields, FlowParams, HiemenzProfile, make_fields, solve_profile
from .fem import CRVectorField, MethodKind, P0Scalar, StokesSystem, assemble
from .mesh import Grading, MeshQuality, Rect, TriMesh, build_shishkin, build_uniform, quality
from .solver import SolveReport, solve

__version__ = "0.1.0"
