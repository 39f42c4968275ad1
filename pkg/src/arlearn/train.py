"""Two-stage training: percentage-error regression, then the alternating
discriminator/mapper game with reconstruction, plus evaluation, shift
diagnostics, the ablation matrix, and checkpoint I/O.

Every random choice is a pure function of (seed, purpose, step), so runs are
bit-reproducible, stage 2 continues stage 1 exactly, and turning the
adversarial and reconstruction terms off makes stage 2 degenerate into more
stage-1 iterations on the same batch/dropout sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .arlmodel import ArlConfig, ArlModel, init_model, model_loss, predict_age, regression_loss
from .arlmodel import codes as model_codes
from .autonet import AdamState, adam_init, adam_step
from .data import FeatureDataset
from .errors import ConfigError, TrainingError, UsageError
from .losses import LossBreakdown, LossWeights, mae, mean_embed_dist
from .numcore import Rng, derive_key
from .serialize import dump_canonical, dump_jsonl, load, load_jsonl

CHECKPOINT_VERSION = 1

ABLATION_VARIANTS = (
    "-L_D-L_AR-L_Recon",
    "-L_M-L_AR-L_Recon",
    "-L_D-L_Recon",
    "-L_M-L_Recon",
    "-L_AR-L_Recon",
    "-L_AR",
    "-L_Recon",
    "full",
)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 128
    iters_stage1: int = 300
    iters_stage2: int = 300
    weights: LossWeights = field(default_factory=LossWeights)
    disc_steps_per_mapper_step: int = 1
    label_smoothing: float = 0.0
    literal_signs: bool = False
    mape_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.iters_stage1 < 0 or self.iters_stage2 < 0:
            raise ConfigError("iteration counts must be >= 0")
        if self.disc_steps_per_mapper_step < 1:
            raise ConfigError("disc_steps_per_mapper_step must be >= 1")
        if not 0.0 <= self.label_smoothing < 0.5:
            raise ConfigError(f"label_smoothing must lie in [0, 0.5), got {self.label_smoothing}")
        if not 0.0 <= self.mape_weight:
            raise ConfigError(f"mape_weight must be >= 0, got {self.mape_weight}")


@dataclass
class History:
    """Per-iteration records (one per optimizer iteration).

    Each record carries the loss breakdown of that iteration's update, the
    MAE on the current training batch, and during stage 2 the discriminator's
    objective, the batch-level code distance, and - when test labels exist -
    the MAE on the current test batch. Test labels feed reporting only; they
    never touch a gradient.
    """

    records: list[dict] = field(default_factory=list)

    def append(
        self,
        iteration: int,
        stage: int,
        breakdown: LossBreakdown,
        train_mae: float,
        disc_loss: float | None = None,
        test_mae: float | None = None,
        dist_code: float | None = None,
    ) -> None:
        self.records.append(
            {
                "iteration": iteration,
                "stage": stage,
                "l_m": breakdown.l_m,
                "l_d": breakdown.l_d,
                "l_p": breakdown.l_p,
                "l_ar_fwd": breakdown.l_ar_fwd,
                "l_ar_bwd": breakdown.l_ar_bwd,
                "l_recon": breakdown.l_recon,
                "l_total": breakdown.l_total,
                "train_mae": train_mae,
                "disc_loss": disc_loss,
                "test_mae": test_mae,
                "dist_code": dist_code,
            }
        )

    def extend(self, other: "History") -> "History":
        self.records.extend(other.records)
        return self

    def save(self, path) -> None:
        dump_jsonl(path, self.records)

    @classmethod
    def load(cls, path) -> "History":
        return cls(records=load_jsonl(path))


@dataclass
class TrainState:
    """Model plus everything needed to continue training exactly: optimizer
    moments, the master seed, and the step counters that index the
    deterministic batch/dropout streams."""

    model: ArlModel
    adam_mapper: AdamState
    adam_disc: AdamState
    seed: int
    global_step: int = 0  # train-path optimizer iterations across both stages
    stage1_iters: int = 0
    stage2_iters: int = 0

    @classmethod
    def create(cls, model: ArlModel, cfg: TrainConfig) -> "TrainState":
        return cls(
            model=model,
            adam_mapper=adam_init(model.mapper_params()),
            adam_disc=adam_init(model.disc_params()),
            seed=cfg.seed,
        )


def _as_state(model_or_state, cfg: TrainConfig) -> TrainState:
    if isinstance(model_or_state, TrainState):
        return model_or_state
    if isinstance(model_or_state, ArlModel):
        return TrainState.create(model_or_state, cfg)
    raise UsageError(f"expected ArlModel or TrainState, got {type(model_or_state).__name__}")


def _step_rng(seed: int, purpose: str, step: int) -> Rng:
    return Rng(derive_key(derive_key(seed, purpose), step))


def _batch_for_step(n: int, batch_size: int, seed: int, purpose: str, step: int) -> np.ndarray:
    """Indices of the batch a given optimizer step consumes.

    Batches partition a per-epoch shuffle; the shuffle for epoch e is a pure
    function of (seed, purpose, e), so no iterator state needs carrying.
    """
    batch_size = min(batch_size, n)
    per_epoch = math.ceil(n / batch_size)
    epoch, slot = divmod(step, per_epoch)
    perm = _step_rng(seed, purpose, epoch).permutation(n)
    return perm[slot * batch_size : (slot + 1) * batch_size]


def _check_dataset(model: ArlModel, ds: FeatureDataset, need_ages: bool, name: str) -> None:
    if ds.feat_dim != model.config.feat_dim:
        raise ConfigError(
            f"{name} has {ds.feat_dim} feature columns but the model expects {model.config.feat_dim}"
        )
    if model.config.use_gender and ds.gender is None:
        raise ConfigError(f"{name} lacks gender but the model uses it")
    if not model.config.use_gender and ds.gender is not None:
        raise ConfigError(f"{name} carries gender but the model ignores it; drop the column")
    if need_ages and ds.ages is None:
        raise UsageError(f"{name} needs ages for this operation")


def _gender(ds: FeatureDataset, idx) -> np.ndarray | None:
    return None if ds.gender is None else ds.gender[idx]


def stage1_fit(model_or_state, train_ds: FeatureDataset, cfg: TrainConfig):
    """Stage 1: minimize the percentage-error regression loss on labeled data.

    Returns (TrainState, History); pass the returned state into
    stage2_adversarial so stage 2 continues the optimizer and data streams.
    """
    state = _as_state(model_or_state, cfg)
    model = state.model
    _check_dataset(model, train_ds, need_ages=True, name="train dataset")
    history = History()
    for _ in range(cfg.iters_stage1):
        step = state.global_step
        idx = _batch_for_step(train_ds.n, cfg.batch_size, state.seed, "batches.train", step)
        rng_drop = _step_rng(state.seed, "dropout.train", step)
        breakdown, grads, y_hat = regression_loss(
            model,
            train_ds.features[idx],
            _gender(train_ds, idx),
            train_ds.ages[idx],
            cfg.weights,
            mape_weight=cfg.mape_weight,
            train_mode=True,
            rng=rng_drop,
        )
        if not np.isfinite(breakdown.l_total):
            raise TrainingError(
                f"non-finite loss at iteration {step}; last good iteration {step - 1}"
            )
        adam_step(model.mapper_params(), grads, state.adam_mapper, cfg.lr)
        history.append(step, 1, breakdown, train_mae=mae(train_ds.ages[idx], y_hat))
        state.global_step += 1
        state.stage1_iters += 1
    return state, history


def stage2_adversarial(model_or_state, train_ds: FeatureDataset, test_ds: FeatureDataset, cfg: TrainConfig):
    """Stage 2: alternate discriminator and mapper updates.

    Per iteration, one train and one test batch are drawn; the domain
    regressor takes ``disc_steps_per_mapper_step`` updates on them, then the
    trunk/head/decoder take one update against the combined objective. Test
    ages, when present, are used only for the history's test_mae field.
    """
    state = _as_state(model_or_state, cfg)
    model = state.model
    _check_dataset(model, train_ds, need_ages=True, name="train dataset")
    _check_dataset(model, test_ds, need_ages=False, name="test dataset")
    history = History()
    for _ in range(cfg.iters_stage2):
        step = state.global_step
        s2 = state.stage2_iters
        tr_idx = _batch_for_step(train_ds.n, cfg.batch_size, state.seed, "batches.train", step)
        te_idx = _batch_for_step(test_ds.n, cfg.batch_size, state.seed, "batches.test", s2)
        batch_tr = (train_ds.features[tr_idx], _gender(train_ds, tr_idx), train_ds.ages[tr_idx])
        batch_te = (test_ds.features[te_idx], _gender(test_ds, te_idx))

        disc_loss = None
        for k in range(cfg.disc_steps_per_mapper_step):
            bd_disc, grads_disc = model_loss(
                model,
                batch_tr,
                batch_te,
                cfg.weights,
                phase="discriminator",
                mape_weight=cfg.mape_weight,
                label_smoothing=cfg.label_smoothing,
                literal_signs=cfg.literal_signs,
                train_mode=True,
                rng_tr=_step_rng(state.seed, f"dropout.disc.train.{k}", s2),
                rng_te=_step_rng(state.seed, f"dropout.disc.test.{k}", s2),
            )
            adam_step(model.disc_params(), grads_disc, state.adam_disc, cfg.lr)
            disc_loss = bd_disc.l_ar_fwd

        breakdown, grads, aux = model_loss(
            model,
            batch_tr,
            batch_te,
            cfg.weights,
            phase="mapper",
            mape_weight=cfg.mape_weight,
            label_smoothing=cfg.label_smoothing,
            train_mode=True,
            rng_tr=_step_rng(state.seed, "dropout.train", step),
            rng_te=_step_rng(state.seed, "dropout.test", s2),
            return_aux=True,
        )
        if not np.isfinite(breakdown.l_total):
            raise TrainingError(
                f"non-finite loss at iteration {step}; last good iteration {step - 1}"
            )
        adam_step(model.mapper_params(), grads, state.adam_mapper, cfg.lr)

        test_mae = None
        if test_ds.ages is not None:
            test_mae = mae(test_ds.ages[te_idx], aux.ages_hat_te)
        history.append(
            step,
            2,
            breakdown,
            train_mae=mae(train_ds.ages[tr_idx], aux.ages_hat_tr),
            disc_loss=disc_loss,
            test_mae=test_mae,
            dist_code=mean_embed_dist(aux.code_tr, aux.code_te),
        )
        state.global_step += 1
        state.stage2_iters += 1
    return state, history


def train_two_stage(arl_cfg: ArlConfig, cfg: TrainConfig, train_ds: FeatureDataset, test_ds: FeatureDataset):
    """Fresh model through both stages; returns (state, history)."""
    model = init_model(arl_cfg, cfg.seed)
    state, hist = stage1_fit(model, train_ds, cfg)
    state, hist2 = stage2_adversarial(state, train_ds, test_ds, cfg)
    return state, hist.extend(hist2)


def evaluate(model: ArlModel, ds: FeatureDataset) -> tuple[float, np.ndarray]:
    """Inference-mode predictions and their MAE; never mutates the model."""
    _check_dataset(model, ds, need_ages=True, name="dataset")
    preds, _ = predict_age(model, ds.features, ds.gender)
    return mae(ds.ages, preds), preds


def shift_diagnostics(model: ArlModel, train_ds: FeatureDataset, test_ds: FeatureDataset) -> dict[str, float]:
    """Mean-embedding distances on raw features and on inference-mode codes."""
    _check_dataset(model, train_ds, need_ages=False, name="train dataset")
    _check_dataset(model, test_ds, need_ages=False, name="test dataset")
    dist_raw = mean_embed_dist(train_ds.features, test_ds.features)
    code_tr = model_codes(model, train_ds.features, train_ds.gender)
    code_te = model_codes(model, test_ds.features, test_ds.gender)
    return {"dist_raw": dist_raw, "dist_code": mean_embed_dist(code_tr, code_te)}


def variant_config(cfg: TrainConfig, variant: str) -> TrainConfig:
    """Training config for one ablation row.

    Dropping L_D zeroes alpha, dropping L_M zeroes the per-sample term's
    weight, dropping L_AR / L_Recon zeroes beta / gamma; the full row is the
    config untouched.
    """
    if variant not in ABLATION_VARIANTS:
        raise ConfigError(f"unknown ablation variant {variant!r}")
    w = cfg.weights
    mape_weight = cfg.mape_weight
    alpha, beta, gamma = w.alpha, w.beta, w.gamma
    if "-L_M" in variant:
        mape_weight = 0.0
    if "-L_D" in variant:
        alpha = 0.0
    if "-L_AR" in variant:
        beta = 0.0
    if "-L_Recon" in variant:
        gamma = 0.0
    return replace(
        cfg,
        mape_weight=mape_weight,
        weights=LossWeights(alpha=alpha, beta=beta, gamma=gamma, eps_div=w.eps_div),
    )


def run_ablation(
    arl_cfg: ArlConfig, cfg: TrainConfig, train_ds: FeatureDataset, test_ds: FeatureDataset
) -> list[dict]:
    """Eight from-scratch runs sharing one seed, one per loss-removal variant."""
    if test_ds.ages is None:
        raise UsageError("ablation reporting needs test ages")
    rows = []
    for variant in ABLATION_VARIANTS:
        state, _ = train_two_stage(arl_cfg, variant_config(cfg, variant), train_ds, test_ds)
        test_mae, _ = evaluate(state.model, test_ds)
        rows.append({"variant": variant, "test_mae": test_mae})
    return rows


def _config_to_dict(cfg: ArlConfig) -> dict:
    return {
        "feat_dim": cfg.feat_dim,
        "trunk_units": list(cfg.trunk_units),
        "shared_out_units": cfg.shared_out_units,
        "recon_units": list(cfg.recon_units),
        "dropout_rate": cfg.dropout_rate,
        "use_gender": cfg.use_gender,
        "recon_tap": cfg.recon_tap,
    }


def _adam_to_dict(state: AdamState) -> dict:
    return {
        "m": {k: v for k, v in state.m.items()},
        "v": {k: v for k, v in state.v.items()},
        "t": state.t,
    }


def _adam_from_dict(doc: dict) -> AdamState:
    return AdamState(
        m={k: np.asarray(v, dtype=np.float64) for k, v in doc["m"].items()},
        v={k: np.asarray(v, dtype=np.float64) for k, v in doc["v"].items()},
        t=int(doc["t"]),
    )


def save_checkpoint(path, state: TrainState) -> None:
    """Canonical single-document checkpoint; save -> load -> save is byte-identical."""
    doc = {
        "version": CHECKPOINT_VERSION,
        "config": _config_to_dict(state.model.config),
        "params": {k: v for k, v in state.model.params().items()},
        "adam": {"mapper": _adam_to_dict(state.adam_mapper), "disc": _adam_to_dict(state.adam_disc)},
        "rng": {"seed": state.seed},
        "counters": {
            "global_step": state.global_step,
            "stage1_iters": state.stage1_iters,
            "stage2_iters": state.stage2_iters,
        },
    }
    dump_canonical(path, doc)


def load_checkpoint(path) -> TrainState:
    doc = load(path)
    if not isinstance(doc, dict) or doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {doc.get('version')!r}")
    cfg = ArlConfig(**doc["config"])
    model = init_model(cfg, 0)
    params = model.params()
    loaded = doc["params"]
    if set(loaded) != set(params):
        raise ConfigError("checkpoint parameter names do not match the configured architecture")
    for name, arr in params.items():
        value = np.asarray(loaded[name], dtype=np.float64)
        if value.shape != arr.shape:
            raise ConfigError(f"checkpoint parameter {name} has shape {value.shape}, expected {arr.shape}")
        arr[...] = value
    counters = doc["counters"]
    return TrainState(
        model=model,
        adam_mapper=_adam_from_dict(doc["adam"]["mapper"]),
        adam_disc=_adam_from_dict(doc["adam"]["disc"]),
        seed=int(doc["rng"]["seed"]),
        global_step=int(counters["global_step"]),
        stage1_iters=int(counters["stage1_iters"]),
        stage2_iters=int(counters["stage2_iters"]),
    )
