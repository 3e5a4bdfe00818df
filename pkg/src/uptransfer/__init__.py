"""Upper-body motion transfer on desk-scale synthetic data.

Three stages: a conditional GAN maps facial action units and head pose to a
landmark image, keypoints are linearly normalized from a source person to a
target, and a temporal GAN turns stick-figure-plus-landmark images into
target video frames.
"""
from .data_model import AlignedClip, FaupVector, KeypointFrame, LandmarkSet, load_clip, save_clip
from .fixtures import blendshape_landmarks, gen_puppet_clip, make_identity
from .losses import LossReport, LossWeights
from .metrics import MetricsReport, evaluate
from .pose_norm import LinearTransform, PoseStats, apply_transform, compute_pose_stats, fit_normalization
from .raster import CanvasSpec, compose_ubkp_fl, render_faup_grid, render_landmarks, render_stick_figure
from .trainer import TrainConfig, build_window, train_landmark_stage, train_video_stage, transfer

__version__ = "0.1.0"
