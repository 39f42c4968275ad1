"""Loss functions and evaluation metrics, each with an analytic gradient.

Absolute-value terms use the subgradient convention sign(0) = 0; gradient
checks must therefore stay away from the kinks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError, UsageError

BCE_CLAMP = 1e-12


@dataclass
class LossWeights:
    """Scalar knobs of the combined objective.

    alpha scales the mean-discrepancy term inside the regression loss,
    beta the adversarial term, gamma the reconstruction term; eps_div
    guards the adversarial loss denominators against division by zero.
    """

    alpha: float = 10.0
    beta: float = 0.5
    gamma: float = 0.5
    eps_div: float = 1e-9

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            val = getattr(self, name)
            if not np.isfinite(val) or val < 0:
                raise DomainError(f"{name} must be finite and >= 0, got {val}")
        if not self.eps_div > 0:
            raise DomainError(f"eps_div must be > 0, got {self.eps_div}")


@dataclass
class LossBreakdown:
    """Per-term values of one objective evaluation.

    l_m is the (possibly ablation-weighted) per-sample percentage term that
    actually entered l_p, so l_p == l_m + alpha * l_d always holds; l_ar_fwd,
    l_ar_bwd and l_recon are raw, with beta/gamma applied only inside
    l_total = l_p + beta * (l_ar_fwd + l_ar_bwd) + gamma * l_recon.
    """

    l_m: float = 0.0
    l_d: float = 0.0
    l_p: float = 0.0
    l_ar_fwd: float = 0.0
    l_ar_bwd: float = 0.0
    l_recon: float = 0.0
    l_total: float = 0.0


def _as_vector(name: str, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {x.shape}")
    if x.size == 0:
        raise ShapeError(f"{name} must be nonempty")
    return x


def _paired(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = _as_vector("y", y)
    y_hat = _as_vector("y_hat", y_hat)
    if y.shape != y_hat.shape:
        raise ShapeError(f"length mismatch: y has {y.size} entries, y_hat has {y_hat.size}")
    return y, y_hat


def mape(y, y_hat) -> float:
    """Mean absolute percentage error; requires all targets positive."""
    y, y_hat = _paired(y, y_hat)
    if np.any(y <= 0):
        raise DomainError("mape requires all targets > 0")
    return float(np.mean(np.abs((y - y_hat) / y)))


def mape_grad(y, y_hat) -> np.ndarray:
    """d mape / d y_hat."""
    y, y_hat = _paired(y, y_hat)
    if np.any(y <= 0):
        raise DomainError("mape requires all targets > 0")
    return -np.sign(y - y_hat) / (y.size * y)


def mean_disc(y, y_hat) -> float:
    """Absolute discrepancy of the means, relative to the target mean."""
    y, y_hat = _paired(y, y_hat)
    my = float(np.mean(y))
    if my <= 0:
        raise DomainError("mean_disc requires mean(y) > 0")
    return float(abs((my - np.mean(y_hat)) / my))


def mean_disc_grad(y, y_hat) -> np.ndarray:
    """d mean_disc / d y_hat."""
    y, y_hat = _paired(y, y_hat)
    my = float(np.mean(y))
    if my <= 0:
        raise DomainError("mean_disc requires mean(y) > 0")
    s = np.sign(my - np.mean(y_hat))
    return np.full(y.size, -s / (y.size * my))


def percentage_loss(y, y_hat, alpha: float) -> float:
    """Per-sample percentage error plus alpha times the mean discrepancy."""
    return mape(y, y_hat) + alpha * mean_disc(y, y_hat)


def percentage_loss_grad(y, y_hat, alpha: float) -> np.ndarray:
    return mape_grad(y, y_hat) + alpha * mean_disc_grad(y, y_hat)


def ar_loss(labels, preds, eps_div: float = 1e-9) -> float:
    """Percentage-style domain-label regression loss.

    Mean over samples of |l - p| / (l + eps) plus |mean(l) - mean(p)| /
    (mean(l) + eps). With a hard 0 label the per-sample denominator is
    eps alone, so small errors blow up to ~error/eps; label smoothing
    (see smooth_labels) bounds the terms at the cost of literalness.
    """
    labels, preds = _paired(labels, preds)
    per_sample = np.mean(np.abs(labels - preds) / (labels + eps_div))
    ml = np.mean(labels)
    mean_term = abs(ml - np.mean(preds)) / (ml + eps_div)
    return float(per_sample + mean_term)


def ar_loss_grad(labels, preds, eps_div: float = 1e-9) -> np.ndarray:
    """d ar_loss / d preds."""
    labels, preds = _paired(labels, preds)
    n = labels.size
    g = -np.sign(labels - preds) / (n * (labels + eps_div))
    ml = np.mean(labels)
    g -= np.sign(ml - np.mean(preds)) / (n * (ml + eps_div))
    return g


def bidirectional_ar(labels_fwd, labels_bwd, preds_fwd, preds_bwd, eps_div: float = 1e-9) -> float:
    """Sum of the two directed adversarial losses; labels must be complementary."""
    lf = _as_vector("labels_fwd", labels_fwd)
    lb = _as_vector("labels_bwd", labels_bwd)
    if lf.shape != lb.shape or not np.allclose(lb, 1.0 - lf, rtol=0.0, atol=1e-12):
        raise UsageError("backward labels must equal 1 - forward labels")
    return ar_loss(lf, preds_fwd, eps_div) + ar_loss(lb, preds_bwd, eps_div)


def smooth_labels(labels, s: float) -> np.ndarray:
    """Map hard domain labels 0 -> s and 1 -> 1-s (s in [0, 0.5))."""
    if not 0.0 <= s < 0.5:
        raise DomainError(f"label smoothing must lie in [0, 0.5), got {s}")
    labels = np.asarray(labels, dtype=np.float64)
    return s + labels * (1.0 - 2.0 * s)


def recon_mse(x, x_hat) -> float:
    """Mean squared error over all matrix entries."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    return float(np.mean(np.square(x - x_hat)))


def recon_mse_grad(x, x_hat) -> np.ndarray:
    """d recon_mse / d x_hat."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    return 2.0 * (x_hat - x) / x.size


def bce_loss(labels, preds) -> float:
    """Binary cross-entropy with predictions clamped into (0, 1)."""
    labels, preds = _paired(labels, preds)
    p = np.clip(preds, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return float(-np.mean(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p)))


def bce_grad(labels, preds) -> np.ndarray:
    """d bce_loss / d preds (on the clamped values)."""
    labels, preds = _paired(labels, preds)
    p = np.clip(preds, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return (p - labels) / (labels.size * p * (1.0 - p))


def mae(y, y_hat) -> float:
    """Mean absolute error."""
    y, y_hat = _paired(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def mean_embed_dist(a, b) -> float:
    """Euclidean distance between the column means of two sample matrices."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"expected 2-D sample matrices, got {a.shape} and {b.shape}")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ShapeError("both sample matrices must be nonempty")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"column mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a.mean(axis=0) - b.mean(axis=0)))
