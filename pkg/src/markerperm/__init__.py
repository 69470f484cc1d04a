"""Motion-capture marker labelling by learned permutations.

A frame of unlabelled 3D markers is normalized, passed through a residual
network that predicts a soft assignment, balanced by Sinkhorn iterations
into a doubly-stochastic matrix and decoded to a hard labelling with the
Hungarian method.  Labels are then made consistent over time by
confidence-weighted voting along marker trajectories.
"""

__version__ = "0.1.0"

from .assign import AssignmentResult, brute_force_decode, decode
from .core import (DataError, DegenerateFrameError, DimensionError, DomainError,
                   LabelledFrameResult, MarkerFrame, MarkerPermError, NumericError,
                   Permutation, apply_permutation, compose, invert_permutation,
                   label_matrix, matrix_to_permutation, permutation_to_matrix)
from .permnet import (CheckpointError, ModelCheckpoint, NetworkConfig, TrainConfig,
                      TrainingError, label_frame, label_frames, load_checkpoint,
                      save_checkpoint, train)
from .preprocess import NormalizationRecord, denormalize_frame, normalize_frame
from .sinkhorn import SinkhornConfig, dsm_residual, sinkhorn, sinkhorn_backward, sinkhorn_forward
from .trajlabel import (ScoringConfig, Trajectory, confidence, relabel_sequence,
                        relabel_trajectory, score_label, segment_trajectories)

__all__ = [
    "AssignmentResult", "CheckpointError", "DataError", "DegenerateFrameError",
    "DimensionError", "DomainError", "LabelledFrameResult", "MarkerFrame",
    "MarkerPermError", "ModelCheckpoint", "NetworkConfig", "NormalizationRecord",
    "NumericError", "Permutation", "ScoringConfig", "SinkhornConfig", "TrainConfig",
    "TrainingError", "Trajectory", "apply_permutation", "brute_force_decode", "compose",
    "confidence", "decode", "denormalize_frame", "dsm_residual", "invert_permutation",
    "label_frame", "label_frames", "label_matrix", "load_checkpoint", "matrix_to_permutation",
    "normalize_frame", "permutation_to_matrix", "relabel_sequence", "relabel_trajectory",
    "save_checkpoint", "score_label", "segment_trajectories", "sinkhorn", "sinkhorn_backward",
    "sinkhorn_forward", "train",
]
