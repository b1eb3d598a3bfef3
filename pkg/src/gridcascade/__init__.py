"""Cascading-failure workbench for power grids.

Simulates DC power-flow cascades on synthetic or imported grids, trains one
recurrent graph-attention model across grids, ranks line vulnerability on
structurally unseen grids zero-shot from attention traces, and benchmarks
the ranking against electric betweenness and outage-factor PageRank.
"""

from .baselines import BaselineScores, bodf_pagerank, electric_betweenness
from .cascade import (
    CascadeSample,
    Dataset,
    build_holdout_pool,
    build_training_dataset,
    load_dataset,
    pool_statistics,
    save_dataset,
    simulate_cascade,
)
from .config import ExperimentConfig, GridSpec, default_config, load_config
from .errors import (
    CheckpointError,
    ConfigMismatchError,
    GridCascadeError,
    GridFormatError,
    GridValidationError,
    InvalidSampleError,
    LabelOverflowError,
    PipelineError,
    ShapeError,
    SolverError,
)
from .exposure import (
    ExposureRanking,
    aggregate_exposure,
    cascade_weight,
    mask_edges,
    masked_incoming_attention,
    save_ranking,
)
from .grid import (
    SYNTHETIC_FAMILIES,
    UNREACHABLE,
    Bus,
    CascadeDepths,
    Line,
    LineGraph,
    PowerGrid,
    build_line_graph,
    cascade_depth,
    generate_synthetic_grid,
    load_grid,
    save_grid,
)
from .metrics import (
    HighExposureSet,
    VulnerabilityTable,
    ground_truth_vulnerability,
    high_exposure_set,
    macro_f1,
    mean_percentile_rank,
    mean_top_tau,
    sample_efficiency_sweep,
)
from .model import (
    ForwardTrace,
    GruGatModel,
    ModelConfig,
    TrainingHistory,
    load_checkpoint,
    reconstruction_macro_f1,
    save_checkpoint,
    train,
)
from .pipeline import Pipeline
from .powerflow import (
    FlowSolution,
    Ptdf,
    SensitivityMatrices,
    compute_lodf,
    compute_ptdf,
    predict_outage_flows,
    solve_dc,
)
from .rankers import BodfPageRankRanker, CascadeExposureRanker, ElectricBetweennessRanker
from .version import VERSION

__version__ = VERSION

__all__ = [
    "BaselineScores",
    "BodfPageRankRanker",
    "Bus",
    "CascadeDepths",
    "CascadeExposureRanker",
    "CascadeSample",
    "CheckpointError",
    "ConfigMismatchError",
    "Dataset",
    "ElectricBetweennessRanker",
    "ExperimentConfig",
    "ExposureRanking",
    "FlowSolution",
    "ForwardTrace",
    "GridCascadeError",
    "GridFormatError",
    "GridSpec",
    "GridValidationError",
    "GruGatModel",
    "HighExposureSet",
    "InvalidSampleError",
    "LabelOverflowError",
    "Line",
    "LineGraph",
    "ModelConfig",
    "Pipeline",
    "PipelineError",
    "PowerGrid",
    "Ptdf",
    "SensitivityMatrices",
    "SYNTHETIC_FAMILIES",
    "ShapeError",
    "SolverError",
    "TrainingHistory",
    "UNREACHABLE",
    "VERSION",
    "VulnerabilityTable",
    "aggregate_exposure",
    "bodf_pagerank",
    "build_holdout_pool",
    "build_line_graph",
    "build_training_dataset",
    "cascade_depth",
    "cascade_weight",
    "compute_lodf",
    "compute_ptdf",
    "default_config",
    "electric_betweenness",
    "generate_synthetic_grid",
    "ground_truth_vulnerability",
    "high_exposure_set",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "load_grid",
    "macro_f1",
    "mask_edges",
    "masked_incoming_attention",
    "mean_percentile_rank",
    "mean_top_tau",
    "pool_statistics",
    "predict_outage_flows",
    "reconstruction_macro_f1",
    "sample_efficiency_sweep",
    "save_checkpoint",
    "save_dataset",
    "save_grid",
    "save_ranking",
    "simulate_cascade",
    "solve_dc",
    "train",
]
