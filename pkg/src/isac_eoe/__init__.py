"""Extended-object shape estimation from single-bounce multipath.

Stages: incidence points from channel parameters (``mapping`` with a known
receiver, ``slam`` without), DBSCAN clustering (``clustering``), and a
radial Gaussian-process contour per cluster (``gp``).
"""

from .clustering import Cluster, DbscanParams, PolarTrainingSet, dbscan, to_polar
from .errors import (
    ConfigError,
    DegenerateGeometryError,
    EoeError,
    IllConditionedError,
    InsufficientPathsError,
    NoConsensusError,
    NumericalError,
    SchemaError,
)
from .evaluation import MonteCarloReport, monte_carlo
from .geometry import (
    SPEED_OF_LIGHT,
    IncidencePoint,
    PathKind,
    PathMeasurement,
    RxState,
    TxState,
    forward_jacobians,
    forward_model,
    synthesize_path,
    synthesize_scene,
    wrap_angle,
)
from .gp import (
    GpHyperParams,
    GpModel,
    RadialPrediction,
    fit,
    kernel,
    lml_gradient,
    log_marginal,
    predict,
    reconstruct_contour,
)
from .io import ingest_measurements
from .mapping import MappingConfig, cost_J, estimate_ip, map_paths
from .pipeline import PipelineConfig, run_pipeline
from .shapes import ShapeSpec, radial_truth, rmse, sample_contour
from .slam import SlamConfig, SlamResult, joint_ls_refine, snapshot_slam

__version__ = "0.1.0"
