"""Harmonic extension on point clouds: graph Laplacian, point integral and
volume constraint discretisations, and their use for semi-supervised
classification."""

__version__ = "0.1.0"

from .errors import (
    DegenerateBandwidth,
    DegenerateInput,
    HarmextError,
    IllPosedExtension,
    InvalidBoundary,
    InvalidInput,
    InvalidParameter,
    OutOfSupport,
    ParseError,
    SolverError,
)
from .geometry import (
    Metric,
    NeighborGraph,
    PointCloud,
    build_knn_graph,
    graph_distance_matrix,
    nearest_in_set,
    parse_metric,
    select_bandwidth,
)
from .kernel import (
    GraphLaplacian,
    KernelContext,
    KernelMatrix,
    assemble_kernel,
    assemble_laplacian,
    boundary_columns,
    prepare_kernel,
)
from .methods import (
    BoundaryCondition,
    HarmonicField,
    PimParams,
    VcmParams,
    extend,
    extend_fem1d,
    extend_glm,
    extend_pim,
    extend_vcm,
    interpolate_pim,
    interpolate_vcm,
)
from .solver import SolveOptions, SolveReport, solve
from .ssl import LabelAssignment, LabeledDataset, run_ssl, run_trials, zhou_lgc
