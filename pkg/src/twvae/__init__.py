"""Trajectory manifold learning with learned piecewise-linear time warping."""

from .alignment import AlignmentPath, aligned_rmse, dtw_align, dtw_average, uniform_time_average
from .data import (Dataset, LabeledTrajectory, PreprocessStats, TimingNoiseFn, Trajectory,
                   augment, fit_preprocess, glyph_curve, load_csv, load_dataset,
                   make_timing_noise, resample, save_csv, synth_dataset)
from .models import (LatentCode, ModelBundle, ModelConfig, VARIANTS, build_model, decode,
                     decode_latent, encode_spatial, encode_temporal, forward, reparameterize,
                     tiny_config)
from .nn import init_time_layer
from .optim import AdamState, adam_step
from .tensor import Tensor, backward, make_rng
from .timewarp import (PiecewiseLinearWarp, WarpCoefficients, basis_matrix,
                       coefficients_from_logits, invert_coefficients, segment_basis,
                       warp_eval, warp_inverse, warp_regularizer)
from .training import (EpochMetrics, EvalReport, LossBreakdown, TrainSettings, batch_loss,
                       evaluate, interpolate_latent, loss_kl, loss_reconstruction,
                       loss_warp_reg, pca_baseline, train)

__all__ = [name for name in dir() if not name.startswith("_")]
