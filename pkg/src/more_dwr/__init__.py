"""Space-time FEM with an incremental POD reduced-order model and slabwise
dual-weighted-residual error control."""

from .driver import DriverConfig, MoreDwrDriver, RunReport, run_full
from .dwr_estimator import classify, effectivity, estimate_slab
from .errors import ConfigurationError, NumericalError
from .pod import ReducedBasis, ipod_update, load_basis, pod_batch, save_basis
from .rom import ReducedOperators, prolongate, reduce_operators
from .slab_solver import FullOrderModel
from .spatial_fem import build_mesh
from .temporal_dg import TemporalBasis, TemporalGrid, temporal_matrices

__all__ = [
    "ConfigurationError",
    "DriverConfig",
    "FullOrderModel",
    "MoreDwrDriver",
    "NumericalError",
    "ReducedBasis",
    "ReducedOperators",
    "RunReport",
    "TemporalBasis",
    "TemporalGrid",
    "build_mesh",
    "classify",
    "effectivity",
    "estimate_slab",
    "ipod_update",
    "load_basis",
    "pod_batch",
    "prolongate",
    "reduce_operators",
    "run_full",
    "save_basis",
    "temporal_matrices",
]
