"""Run configuration: one JSON document drives every command.

Schema (all sections optional; defaults shown by default_run_config):

    {
      "schema_version": 1,
      "model":  {feat_dim, trunk_units, shared_out_units, recon_units,
                 dropout_rate, use_gender, recon_tap},
      "train":  {lr, batch_size, iters_stage1, iters_stage2,
                 alpha, beta, gamma, eps_div,
                 disc_steps_per_mapper_step, label_smoothing,
                 literal_signs, mape_weight, seed},
      "synth":  {n_tr, n_te, d, k, shift, label_shift,
                 noise_feat, noise_age, seed},
      "paths":  {train_csv, test_csv, out_dir}
    }

Unknown keys anywhere are rejected so typos cannot silently fall back to
defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .arlmodel import ArlConfig
from .data import SynthConfig
from .errors import ConfigError
from .losses import LossWeights
from .train import TrainConfig

SCHEMA_VERSION = 1

_SECTIONS = ("schema_version", "model", "train", "synth", "paths")


@dataclass
class Paths:
    train_csv: str | None = None
    test_csv: str | None = None
    out_dir: str = "out"


@dataclass
class RunConfig:
    model: ArlConfig = field(default_factory=ArlConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    paths: Paths = field(default_factory=Paths)


def default_run_config() -> RunConfig:
    return RunConfig()


def _check_keys(section: str, doc: dict, allowed) -> None:
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(unknown)}")


def _want(section: str, key: str, value, kinds, kind_name: str):
    if isinstance(value, bool) and bool not in kinds:
        raise ConfigError(f"{section}.{key} must be {kind_name}, got a bool")
    if not isinstance(value, tuple(kinds)):
        raise ConfigError(f"{section}.{key} must be {kind_name}, got {type(value).__name__}")
    return value


def _get_int(section, doc, key, default) -> int:
    if key not in doc:
        return default
    return int(_want(section, key, doc[key], (int,), "an integer"))


def _get_float(section, doc, key, default) -> float:
    if key not in doc:
        return default
    return float(_want(section, key, doc[key], (int, float), "a number"))


def _get_bool(section, doc, key, default) -> bool:
    if key not in doc:
        return default
    return bool(_want(section, key, doc[key], (bool,), "a bool"))


def _get_str(section, doc, key, default, optional=False):
    if key not in doc:
        return default
    if optional and doc[key] is None:
        return None
    return str(_want(section, key, doc[key], (str,), "a string"))


def _get_int_pair(section, doc, key, default) -> tuple[int, int]:
    if key not in doc:
        return default
    value = _want(section, key, doc[key], (list,), "a list of two integers")
    if len(value) != 2 or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise ConfigError(f"{section}.{key} must be a list of two integers, got {value!r}")
    return (value[0], value[1])


def _model_from(doc: dict) -> ArlConfig:
    base = ArlConfig()
    _check_keys(
        "model",
        doc,
        ("feat_dim", "trunk_units", "shared_out_units", "recon_units", "dropout_rate", "use_gender", "recon_tap"),
    )
    return ArlConfig(
        feat_dim=_get_int("model", doc, "feat_dim", base.feat_dim),
        trunk_units=_get_int_pair("model", doc, "trunk_units", base.trunk_units),
        shared_out_units=_get_int("model", doc, "shared_out_units", base.shared_out_units),
        recon_units=_get_int_pair("model", doc, "recon_units", base.recon_units),
        dropout_rate=_get_float("model", doc, "dropout_rate", base.dropout_rate),
        use_gender=_get_bool("model", doc, "use_gender", base.use_gender),
        recon_tap=_get_str("model", doc, "recon_tap", base.recon_tap),
    )


def _train_from(doc: dict) -> TrainConfig:
    base = TrainConfig()
    _check_keys(
        "train",
        doc,
        (
            "lr",
            "batch_size",
            "iters_stage1",
            "iters_stage2",
            "alpha",
            "beta",
            "gamma",
            "eps_div",
            "disc_steps_per_mapper_step",
            "label_smoothing",
            "literal_signs",
            "mape_weight",
            "seed",
        ),
    )
    weights = LossWeights(
        alpha=_get_float("train", doc, "alpha", base.weights.alpha),
        beta=_get_float("train", doc, "beta", base.weights.beta),
        gamma=_get_float("train", doc, "gamma", base.weights.gamma),
        eps_div=_get_float("train", doc, "eps_div", base.weights.eps_div),
    )
    return TrainConfig(
        lr=_get_float("train", doc, "lr", base.lr),
        batch_size=_get_int("train", doc, "batch_size", base.batch_size),
        iters_stage1=_get_int("train", doc, "iters_stage1", base.iters_stage1),
        iters_stage2=_get_int("train", doc, "iters_stage2", base.iters_stage2),
        weights=weights,
        disc_steps_per_mapper_step=_get_int(
            "train", doc, "disc_steps_per_mapper_step", base.disc_steps_per_mapper_step
        ),
        label_smoothing=_get_float("train", doc, "label_smoothing", base.label_smoothing),
        literal_signs=_get_bool("train", doc, "literal_signs", base.literal_signs),
        mape_weight=_get_float("train", doc, "mape_weight", base.mape_weight),
        seed=_get_int("train", doc, "seed", base.seed),
    )


def _synth_from(doc: dict) -> SynthConfig:
    base = SynthConfig()
    _check_keys(
        "synth",
        doc,
        ("n_tr", "n_te", "d", "k", "shift", "label_shift", "noise_feat", "noise_age", "seed"),
    )
    return SynthConfig(
        n_tr=_get_int("synth", doc, "n_tr", base.n_tr),
        n_te=_get_int("synth", doc, "n_te", base.n_te),
        d=_get_int("synth", doc, "d", base.d),
        k=_get_int("synth", doc, "k", base.k),
        shift=_get_float("synth", doc, "shift", base.shift),
        label_shift=_get_float("synth", doc, "label_shift", base.label_shift),
        noise_feat=_get_float("synth", doc, "noise_feat", base.noise_feat),
        noise_age=_get_float("synth", doc, "noise_age", base.noise_age),
        seed=_get_int("synth", doc, "seed", base.seed),
    )


def _paths_from(doc: dict) -> Paths:
    base = Paths()
    _check_keys("paths", doc, ("train_csv", "test_csv", "out_dir"))
    return Paths(
        train_csv=_get_str("paths", doc, "train_csv", base.train_csv, optional=True),
        test_csv=_get_str("paths", doc, "test_csv", base.test_csv, optional=True),
        out_dir=_get_str("paths", doc, "out_dir", base.out_dir),
    )


def run_config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    _check_keys("config", doc, _SECTIONS)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"config must declare \"schema_version\": {SCHEMA_VERSION}, got {doc.get('schema_version')!r}"
        )
    for name in ("model", "train", "synth", "paths"):
        if name in doc and not isinstance(doc[name], dict):
            raise ConfigError(f"section {name!r} must be an object")
    return RunConfig(
        model=_model_from(doc.get("model", {})),
        train=_train_from(doc.get("train", {})),
        synth=_synth_from(doc.get("synth", {})),
        paths=_paths_from(doc.get("paths", {})),
    )


def load_run_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
    return run_config_from_dict(doc)


def run_config_to_dict(rc: RunConfig) -> dict:
    """Round-trippable document with every value explicit."""
    return {
        "schema_version": SCHEMA_VERSION,
        "model": {
            "feat_dim": rc.model.feat_dim,
            "trunk_units": list(rc.model.trunk_units),
            "shared_out_units": rc.model.shared_out_units,
            "recon_units": list(rc.model.recon_units),
            "dropout_rate": rc.model.dropout_rate,
            "use_gender": rc.model.use_gender,
            "recon_tap": rc.model.recon_tap,
        },
        "train": {
            "lr": rc.train.lr,
            "batch_size": rc.train.batch_size,
            "iters_stage1": rc.train.iters_stage1,
            "iters_stage2": rc.train.iters_stage2,
            "alpha": rc.train.weights.alpha,
            "beta": rc.train.weights.beta,
            "gamma": rc.train.weights.gamma,
            "eps_div": rc.train.weights.eps_div,
            "disc_steps_per_mapper_step": rc.train.disc_steps_per_mapper_step,
            "label_smoothing": rc.train.label_smoothing,
            "literal_signs": rc.train.literal_signs,
            "mape_weight": rc.train.mape_weight,
            "seed": rc.train.seed,
        },
        "synth": {
            "n_tr": rc.synth.n_tr,
            "n_te": rc.synth.n_te,
            "d": rc.synth.d,
            "k": rc.synth.k,
            "shift": rc.synth.shift,
            "label_shift": rc.synth.label_shift,
            "noise_feat": rc.synth.noise_feat,
            "noise_age": rc.synth.noise_age,
            "seed": rc.synth.seed,
        },
        "paths": {
            "train_csv": rc.paths.train_csv,
            "test_csv": rc.paths.test_csv,
            "out_dir": rc.paths.out_dir,
        },
    }
