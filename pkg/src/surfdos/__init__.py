"""Surface density of states for lattice random Schrodinger operators."""
from .disorder import BackgroundSpec, PotentialField, RandomFieldSpec, sample_field, shift_realization, total_potential
from .lattice import LatticeSpec, RegionMask, SubspaceFamily, ball_volume, build_box, project, region_mask
from .model import OperatorSet, SurfaceModel
from .operator import SparseOperator, assemble_hamiltonian, assemble_laplacian, spectral_bounds
from .sds import SDSEstimate, StudyReport
from .spectral import KPMPlan, SpectralFunction, dense_eig, kpm_masked_trace, masked_trace_dense

__version__ = "0.1.0"

__all__ = [
    "BackgroundSpec",
    "KPMPlan",
    "LatticeSpec",
    "OperatorSet",
    "PotentialField",
    "RandomFieldSpec",
    "RegionMask",
    "SDSEstimate",
    "SparseOperator",
    "SpectralFunction",
    "StudyReport",
    "SubspaceFamily",
    "SurfaceModel",
    "assemble_hamiltonian",
    "assemble_laplacian",
    "ball_volume",
    "build_box",
    "dense_eig",
    "kpm_masked_trace",
    "masked_trace_dense",
    "project",
    "region_mask",
    "sample_field",
    "shift_realization",
    "spectral_bounds",
    "total_potential",
]
