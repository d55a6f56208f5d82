"""Debiasing-VAE face detection toolkit.

A binary face detector whose training set is adaptively resampled by learned
latent-feature rarity, next to a standard-classifier baseline and grouped
bias evaluation, on a minimal gradient-checked differentiable core.
"""

from .data import (ALL_GROUPS, Dataset, DatasetSpec, Example, GroupTag,
                   build_dataset, export_dataset, generate_face, generate_nonface,
                   load_image_dir)
from .evaluate import (BiasMetrics, GroupAccuracyTable, bias_metrics, compare,
                       evaluate)
from .losses import (LossBreakdown, class_loss, kl_loss, recon_loss,
                     reparameterize, total_loss)
from .models import (ArchId, DecoderParams, EncoderParams, LatentStats,
                     build_decoder, build_encoder, classifier_forward,
                     decoder_forward, encoder_forward)
from .optim import AdamState, adam_init, adam_step
from .resampler import (HistogramSet, SampleWeights, compute_weights,
                        estimate_histograms, inspect, resample_indices)
from .rng import RngStream
from .tape import ShapeError, Tensor, gradients, tensor
from .training import DebiasConfig, TrainConfig, TrainResult, train, train_classifier

__version__ = "0.1.0"
