"""Self-supervised traversability estimation from driving trajectories.

The package turns a pose log plus camera calibration into per-pixel
traversability: driven vehicle footprints are projected into each frame as
positive labels, a small convolutional network is trained with a one-class
objective assisted by balanced prototype clustering and cross-view pixel
contrastive learning, and predictions are scored against ground-truth masks.
A synthetic ray-cast world supplies end-to-end benchmarks.

The pieces compose through five entry points, mirrored by the CLI:

- :func:`selftrav.synthworld.generate_world` renders a dataset,
- :func:`selftrav.geometry.labels.generate_dataset_labels` writes label masks,
- :func:`selftrav.pipeline.train` fits a model,
- :func:`selftrav.pipeline.predict_scores` renders score maps,
- :func:`selftrav.evaluation.evaluate` turns scores + masks into a report.
"""

from .errors import DataError, NumericError, UndefinedMetricError, UsageError
from .evaluation import EvalReport, evaluate, render_overlays, write_report
from .geometry import FootprintSpec
from .geometry.labels import LabelParams, generate_dataset_labels, read_manifest
from .pipeline import TrainConfig, load_checkpoint, predict_scores, train
from .synthworld import WorldSpec, generate_world

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "EvalReport",
    "FootprintSpec",
    "LabelParams",
    "NumericError",
    "TrainConfig",
    "UndefinedMetricError",
    "UsageError",
    "WorldSpec",
    "evaluate",
    "generate_dataset_labels",
    "generate_world",
    "load_checkpoint",
    "predict_scores",
    "read_manifest",
    "render_overlays",
    "train",
    "write_report",
    "__version__",
]
