"""Spatio-temporal Laplacian loss, temporal pose metrics and a small numpy
temporal convolution network for 2D-to-3D motion lifting."""
from .harness import AblationConfig, AblationResult, run_ablation, train
from .laplacian import (
    Graph3Dt,
    LaplacianVariant,
    SparseLaplacian,
    build_graph,
    build_laplacian,
    diff_coords,
    motion_laplacian,
)
from .losses import LossConfig, LossMode, LossValue, combined_loss, laplacian_loss, motion_loss, position_loss
from .metrics import MetricReport, acceleration, evaluate_pair, mpjacce, mpjpe_protocol1, mpjve, velocity
from .motion import MotionFormatError, MotionSequence, MotionSequence2D, Skeleton, load_motion, save_motion
from .report import compare_reports
from .synth import Projection, SynthConfig, generate, project_2d
from .tcn import NetworkSpec, NetworkState, forward, train_step

__version__ = "0.1.0"
