"""Change detection between repeated camera missions.

A mission is revisited along roughly the same trajectory; frames from the
new pass are paired with reference frames by pose, matched feature-to-
feature, and the unmatched residue is turned into anomaly regions by a
per-instance vote plus density clustering. The match threshold and the
cluster radius are not tuned by hand: both fall out of a self-calibration
sweep over a handful of image pairs.
"""

from .backend import (
    BackendConfig,
    BackendKind,
    DescriptorKind,
    DescriptorSet,
    FeatureBackend,
    Keypoint,
    MatchResult,
    create_backend,
)
from .calibration import (
    CalibrationCurve,
    CalibrationResult,
    KneeResult,
    calibrate,
    calibrate_eps,
    chord_knee_index,
    knee,
    pair_cv,
    sweep,
)
from .clustering import ClusterConfig, Clustering, dbscan
from .dataset import RunDataset, RunRole, load_run
from .errors import (
    BackendError,
    DatasetError,
    DriftwatchError,
    FixtureError,
    InputError,
)
from .overlap import NoOverlap, RectMask, overlap_mask
from .pairing import ImagePair, PairingConfig, pair_images
from .pipeline import (
    Evaluation,
    PipelineConfig,
    detect_images,
    detect_pair,
    evaluate,
    run_mission,
)
from .report import (
    AnomalyRegion,
    AnomalyReport,
    GroundTruth,
    PairReport,
    PairStatus,
    RegionSource,
)
from .segmentation import InstanceMask, SegmentVote, vote
from .synthgen import SceneSpec, generate_calibration_pairs, generate_mission, generate_scenario

__version__ = "0.1.0"

__all__ = [
    "AnomalyRegion",
    "AnomalyReport",
    "BackendConfig",
    "BackendError",
    "BackendKind",
    "CalibrationCurve",
    "CalibrationResult",
    "ClusterConfig",
    "Clustering",
    "DatasetError",
    "DescriptorKind",
    "DescriptorSet",
    "DriftwatchError",
    "Evaluation",
    "FeatureBackend",
    "FixtureError",
    "GroundTruth",
    "ImagePair",
    "InputError",
    "InstanceMask",
    "Keypoint",
    "KneeResult",
    "MatchResult",
    "NoOverlap",
    "PairReport",
    "PairStatus",
    "PairingConfig",
    "PipelineConfig",
    "RectMask",
    "RegionSource",
    "RunDataset",
    "RunRole",
    "SceneSpec",
    "SegmentVote",
    "calibrate",
    "calibrate_eps",
    "chord_knee_index",
    "create_backend",
    "dbscan",
    "detect_images",
    "detect_pair",
    "evaluate",
    "generate_calibration_pairs",
    "generate_mission",
    "generate_scenario",
    "knee",
    "load_run",
    "overlap_mask",
    "pair_cv",
    "pair_images",
    "run_mission",
    "sweep",
    "vote",
]
