"""Key-frame motion in-betweening with a delta-interpolating transformer, built on numpy."""

from .autograd import Tensor, gradient_check, no_grad
from .baselines import BaselineKind, pos_lerp, run_baseline, slerp_interpolate, zero_velocity
from .errors import (ConfigError, ContractError, DataError, DegenerateRotationError,
                     DeltaInterpError, DimensionError, IngestionError, NumericError,
                     SamplingError, UnsupportedTaskError)
from .geometry import Skeleton, fk, rot6_to_matrix, slerp
from .metrics import MetricsReport, evaluate, l2p, l2q, npss
from .model import DeltaInterpolator, InputDelta, ModelConfig, OutputDelta
from .motion import (InbetweenTask, MotionSequence, NormStats, Poses, PositionSequence,
                     load_csv, load_csv_with_gaps, save_csv)
from .sampling import SamplerConfig, sample_task
from .training import LossBreakdown, TrainConfig, train

__version__ = "0.1.0"
