"""Deterministic material-classification benchmark harness.

Pipeline: dataset split protocol -> feature extraction at a network tap
(or FVEC ingestion) -> per-category linear SVM -> ranked scoring ->
average-precision reports, with batch timing aggregation.
"""

from .errors import MatbenchError, StageError
from .evaluation import (
    APReport,
    PRCurve,
    ScoredImage,
    average_precision,
    common_ground_filter,
    mean_ap,
    rank,
    top_n,
)
from .features import FeatureRecord, l2_normalize, read_features, write_features
from .harness import (
    CategoryResult,
    RunReport,
    TestSpec,
    TimingTable,
    emit_plot_data,
    emit_report,
    load_toy_image,
    run_batch,
    run_test,
)
from .network import (
    FeatureVector,
    LayerSpec,
    NetworkSpec,
    PRESETS,
    extract_patch,
    forward_with_tap,
    layer_output_shape,
    load_network,
    parse_network_spec,
    resblock_forward,
)
from .protocol import (
    CategoryEntry,
    DatasetManifest,
    SplitPlan,
    build_split,
    load_manifest,
)
from .svm import (
    LinearModel,
    TrainConfig,
    hinge_objective,
    linear_kernel,
    load_model,
    save_model,
    score,
    train_linear_svm,
)

__version__ = "0.1.0"

__all__ = [
    "APReport",
    "CategoryEntry",
    "CategoryResult",
    "DatasetManifest",
    "FeatureRecord",
    "FeatureVector",
    "LayerSpec",
    "LinearModel",
    "MatbenchError",
    "NetworkSpec",
    "PRCurve",
    "PRESETS",
    "RunReport",
    "ScoredImage",
    "SplitPlan",
    "StageError",
    "TestSpec",
    "TimingTable",
    "TrainConfig",
    "average_precision",
    "build_split",
    "common_ground_filter",
    "emit_plot_data",
    "emit_report",
    "extract_patch",
    "forward_with_tap",
    "hinge_objective",
    "l2_normalize",
    "layer_output_shape",
    "linear_kernel",
    "load_manifest",
    "load_model",
    "load_network",
    "load_toy_image",
    "mean_ap",
    "parse_network_spec",
    "rank",
    "read_features",
    "resblock_forward",
    "run_batch",
    "run_test",
    "save_model",
    "score",
    "top_n",
    "train_linear_svm",
    "write_features",
]
