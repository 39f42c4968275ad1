"""Command-line entry point.

Commands (config path positional, ``--seed`` the only override):

    arlearn generate CONFIG     write synthetic train.csv / test.csv
    arlearn train CONFIG        two-stage run -> checkpoint + metrics
    arlearn eval CKPT CSV       print MAE, write predictions.csv
    arlearn ablate CONFIG       loss-removal matrix -> ablation table
    arlearn gradcheck           finite-difference check of every gradient

Exit codes: 0 ok, 1 I/O error, 2 config/schema error, 3 training divergence,
4 gradient-check failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import losses
from .arlmodel import ArlConfig, init_model, model_loss, nudge_relu_biases, phase_objective
from .autonet import dense_backward, dense_forward, grad_check, init_dense
from .config import RunConfig, load_run_config
from .data import load_csv, save_csv, synth_generate
from .errors import ArlearnError, TrainingError
from .losses import LossWeights, mean_embed_dist
from .numcore import Rng
from .serialize import dump_canonical, format_float
from .train import load_checkpoint, run_ablation, save_checkpoint, train_two_stage, evaluate

GRADCHECK_TOL = 1e-6

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_GRADCHECK = 4


def _load_datasets(rc: RunConfig):
    from .errors import ConfigError

    if not rc.paths.train_csv or not rc.paths.test_csv:
        raise ConfigError("paths.train_csv and paths.test_csv are required for this command")
    train_ds = load_csv(rc.paths.train_csv, domain="train")
    if train_ds.ages is None:
        raise ConfigError(f"{rc.paths.train_csv} has no age column; training needs labels")
    test_ds = load_csv(rc.paths.test_csv, domain="test")
    return train_ds, test_ds


def cmd_generate(rc: RunConfig) -> int:
    out = Path(rc.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test = synth_generate(rc.synth)
    save_csv(out / "train.csv", train)
    save_csv(out / "test.csv", test)
    dist = mean_embed_dist(train.features, test.features)
    print(f"wrote {out / 'train.csv'} ({train.n} rows) and {out / 'test.csv'} ({test.n} rows)")
    print(f"mean_embed_dist(train, test) = {dist:.6f}")
    return EXIT_OK


def cmd_train(rc: RunConfig) -> int:
    train_ds, test_ds = _load_datasets(rc)
    state, history = train_two_stage(rc.model, rc.train, train_ds, test_ds)
    out = Path(rc.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint", state)
    history.save(out / "metrics")
    train_mae, _ = evaluate(state.model, train_ds)
    print(f"trained {state.stage1_iters}+{state.stage2_iters} iterations; train MAE {train_mae:.4f}")
    if test_ds.ages is not None:
        test_mae, _ = evaluate(state.model, test_ds)
        print(f"test MAE (evaluation only): {test_mae:.4f}")
    print(f"wrote {out / 'checkpoint'} and {out / 'metrics'}")
    return EXIT_OK


def cmd_eval(checkpoint_path: str, csv_path: str, out_dir: str | None) -> int:
    state = load_checkpoint(checkpoint_path)
    ds = load_csv(csv_path)
    mae_value, preds = evaluate(state.model, ds)
    out = Path(out_dir) if out_dir else Path(checkpoint_path).parent
    out.mkdir(parents=True, exist_ok=True)
    pred_path = out / "predictions.csv"
    with open(pred_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("index,age_true,age_pred\n")
        for i in range(ds.n):
            fh.write(f"{i},{format_float(ds.ages[i])},{format_float(preds[i])}\n")
    print(f"MAE: {mae_value:.4f}")
    print(f"wrote {pred_path}")
    return EXIT_OK


def cmd_ablate(rc: RunConfig) -> int:
    train_ds, test_ds = _load_datasets(rc)
    rows = run_ablation(rc.model, rc.train, train_ds, test_ds)
    out = Path(rc.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_canonical(out / "ablation", {"rows": rows})
    width = max(len(r["variant"]) for r in rows)
    for r in rows:
        print(f"{r['variant']:<{width}}  test MAE {r['test_mae']:.4f}")
    print(f"wrote {out / 'ablation'}")
    return EXIT_OK


GRADCHECK_LABEL_SMOOTHING = 0.1


def _toy_model_case():
    """feat_dim=10 model plus kink-safe batches for the model-level checks.

    Biases are nudged so every relu pre-activation clears the kink by a
    margin far wider than the finite-difference step, and the model-level
    checks use smoothed domain labels: with a hard 0 label the adversarial
    loss sits at ~1e8, where central differences cannot resolve the small
    gradient components in float64 at all (the hard-label gradient formula
    is verified analytically in the test suite instead).
    """
    cfg = ArlConfig(feat_dim=10, dropout_rate=0.5, use_gender=True)
    model = init_model(cfg, seed=5)
    rng = Rng(17)
    X_tr = rng.normal(3, 10) * 0.8
    X_te = rng.normal(2, 10) * 0.8 + 0.3
    gender_tr = np.array([0.0, 1.0, 1.0])
    gender_te = np.array([1.0, 0.0])
    ages = np.array([9.0, 12.5, 15.0])
    nudge_relu_biases(model, [(X_tr, gender_tr), (X_te, gender_te)])
    batch_tr = (X_tr, gender_tr, ages)
    batch_te = (X_te, gender_te)
    return model, batch_tr, batch_te, LossWeights()


def gradcheck_suite(corrupt: str | None = None, h: float = 1e-5) -> dict[str, float]:
    """Max relative finite-difference error for every gradient in the package.

    ``corrupt`` names a component whose analytic gradient gets deliberately
    damaged; the entry then reports the inflated error (test hook for the
    failure path).
    """
    results: dict[str, float] = {}

    def run(name, loss_fn, params, analytic):
        if corrupt == name:
            first = next(iter(analytic.values()))
            first.reshape(-1)[0] += 1e-3
        results[name] = grad_check(loss_fn, params, analytic, h=h)

    y = np.array([8.0, 12.0, 30.0])
    y_hat = np.array([10.5, 9.25, 27.5])
    run("mape", lambda: losses.mape(y, y_hat), {"y_hat": y_hat}, {"y_hat": losses.mape_grad(y, y_hat)})
    y_hat = np.array([10.5, 9.25, 27.5])
    run(
        "mean_disc",
        lambda: losses.mean_disc(y, y_hat),
        {"y_hat": y_hat},
        {"y_hat": losses.mean_disc_grad(y, y_hat)},
    )
    y_hat = np.array([10.5, 9.25, 27.5])
    run(
        "percentage_loss",
        lambda: losses.percentage_loss(y, y_hat, 10.0),
        {"y_hat": y_hat},
        {"y_hat": losses.percentage_loss_grad(y, y_hat, 10.0)},
    )

    # smoothed labels keep the loss at O(1); a hard 0 label parks it at ~1e8
    # where float64 central differences lose the small gradient components
    labels = np.array([0.1, 0.1, 0.9, 0.9])
    preds = np.array([0.2, 0.3, 0.6, 0.7])
    run(
        "ar_loss",
        lambda: losses.ar_loss(labels, preds),
        {"preds": preds},
        {"preds": losses.ar_loss_grad(labels, preds)},
    )
    preds = np.array([0.3, 0.7, 0.55, 0.2])
    bce_labels = np.array([0.0, 1.0, 1.0, 0.0])
    run(
        "bce_loss",
        lambda: losses.bce_loss(bce_labels, preds),
        {"preds": preds},
        {"preds": losses.bce_grad(bce_labels, preds)},
    )
    x = np.array([[1.0, -2.0, 0.5], [0.25, 3.0, -1.0]])
    x_hat = np.array([[0.5, -1.0, 1.5], [-0.75, 2.0, 0.5]])
    run(
        "recon_mse",
        lambda: losses.recon_mse(x, x_hat),
        {"x_hat": x_hat},
        {"x_hat": losses.recon_mse_grad(x, x_hat)},
    )

    layer = init_dense(Rng(3).split("gradcheck"), 4, 3, "relu")
    layer.b += 0.05  # keep pre-activations off the relu kink
    lx = Rng(4).normal(2, 4)
    v = Rng(6).normal(2, 3)
    _, cache = dense_forward(layer, lx)
    _, dW, db = dense_backward(layer, cache, v)
    run(
        "dense_layer",
        lambda: float(np.sum(dense_forward(layer, lx)[0] * v)),
        {"W": layer.W, "b": layer.b},
        {"W": dW, "b": db},
    )

    model, batch_tr, batch_te, weights = _toy_model_case()
    smoothing = GRADCHECK_LABEL_SMOOTHING
    _, disc_grads = model_loss(
        model, batch_tr, batch_te, weights, phase="discriminator", label_smoothing=smoothing
    )

    def disc_value():
        bd, _ = model_loss(
            model,
            batch_tr,
            batch_te,
            weights,
            phase="discriminator",
            label_smoothing=smoothing,
            want_grads=False,
        )
        return phase_objective(bd, weights, "discriminator")

    run("model_discriminator", disc_value, model.disc_params(), disc_grads)

    _, mapper_grads = model_loss(
        model, batch_tr, batch_te, weights, phase="mapper", label_smoothing=smoothing
    )

    def mapper_value():
        bd, _ = model_loss(
            model,
            batch_tr,
            batch_te,
            weights,
            phase="mapper",
            label_smoothing=smoothing,
            want_grads=False,
        )
        return phase_objective(bd, weights, "mapper")

    run("model_mapper", mapper_value, model.mapper_params(), mapper_grads)

    return results


def cmd_gradcheck(corrupt: str | None = None) -> int:
    results = gradcheck_suite(corrupt=corrupt)
    failures = []
    for name, err in results.items():
        status = "ok" if err < GRADCHECK_TOL else "FAIL"
        print(f"{name:<22} max relative error {err:.3e}  [{status}]")
        if not err < GRADCHECK_TOL:
            failures.append(name)
    if failures:
        print(f"gradient check failed for: {', '.join(failures)}")
        return EXIT_GRADCHECK
    print(f"all {len(results)} components below {GRADCHECK_TOL:g}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arlearn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("generate", "train", "ablate"):
        p = sub.add_parser(name)
        p.add_argument("config", help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override train/synth seeds")

    p = sub.add_parser("eval")
    p.add_argument("checkpoint", help="checkpoint written by `arlearn train`")
    p.add_argument("csv", help="labeled feature CSV to score")
    p.add_argument("--out-dir", default=None, help="where to write predictions.csv")

    sub.add_parser("gradcheck")
    return parser


def _config_with_seed(path: str, seed: int | None) -> RunConfig:
    rc = load_run_config(path)
    if seed is not None:
        rc.train = replace(rc.train, seed=seed)
        rc.synth = replace(rc.synth, seed=seed)
    return rc


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return cmd_generate(_config_with_seed(args.config, args.seed))
        if args.command == "train":
            return cmd_train(_config_with_seed(args.config, args.seed))
        if args.command == "eval":
            return cmd_eval(args.checkpoint, args.csv, args.out_dir)
        if args.command == "ablate":
            return cmd_ablate(_config_with_seed(args.config, args.seed))
        if args.command == "gradcheck":
            return cmd_gradcheck()
        raise AssertionError(f"unhandled command {args.command}")
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ArlearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
