"""Adversarial regression learning on precomputed feature vectors.

A regression network is trained in two stages: first on labeled training
features with a percentage-error loss, then adversarially against a domain
regressor (with feature reconstruction as a consistency term) so the learned
representation stops telling training data from test data apart. Everything
is numpy, bit-reproducible from a single seed.
"""

from .arlmodel import (
    ArlConfig,
    ArlModel,
    codes,
    discriminate,
    domain_labels,
    init_model,
    model_loss,
    phase_objective,
    predict_age,
    reconstruct,
    regression_loss,
)
from .autonet import (
    AdamState,
    DenseLayer,
    LayerCache,
    adam_init,
    adam_step,
    dense_backward,
    dense_forward,
    grad_check,
    grad_check_report,
    init_dense,
    sigmoid,
)
from .config import Paths, RunConfig, default_run_config, load_run_config, run_config_to_dict
from .data import (
    FeatureDataset,
    SynthConfig,
    batches,
    load_csv,
    save_csv,
    split,
    synth_generate,
)
from .errors import (
    ArlearnError,
    ConfigError,
    DomainError,
    ParseError,
    SerializationError,
    ShapeError,
    TrainingError,
    UsageError,
)
from .losses import (
    LossBreakdown,
    LossWeights,
    ar_loss,
    ar_loss_grad,
    bce_grad,
    bce_loss,
    bidirectional_ar,
    mae,
    mape,
    mape_grad,
    mean_disc,
    mean_disc_grad,
    mean_embed_dist,
    percentage_loss,
    percentage_loss_grad,
    recon_mse,
    recon_mse_grad,
    smooth_labels,
)
from .numcore import Rng, derive_key, dropout_mask, matmul, relu, relu_grad, rng_uniform
from .train import (
    ABLATION_VARIANTS,
    History,
    TrainConfig,
    TrainState,
    evaluate,
    load_checkpoint,
    run_ablation,
    save_checkpoint,
    shift_diagnostics,
    stage1_fit,
    stage2_adversarial,
    train_two_stage,
    variant_config,
)

__version__ = "0.1.0"
