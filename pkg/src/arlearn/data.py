"""Feature-vector datasets: CSV ingestion, deterministic splits and batching,
and a synthetic covariate-shift generator.

CSV schema: UTF-8, comma separated, mandatory header
``f0,...,f{d-1}[,gender][,age]``. Values are numeric only ('.' decimal, no
quoting); gender cells are exactly ``0`` or ``1``; floats are written with 17
significant digits so a save/load round trip is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ParseError, ShapeError
from .numcore import Rng
from .serialize import format_float

DOMAINS = ("train", "validation", "test")

# age model constants of the synthetic generator: latent signal through a
# softplus, scaled into a months-like range and clamped at 1 month
AGE_SCALE = 6.0
AGE_OFFSET = 1.0
AGE_MIN = 1.0

# fraction of the shift direction aligned with the age-relevant feature
# direction; a purely random direction in high dimension is almost
# orthogonal to it and would leave a trained regressor unharmed, which is
# not the failure mode this benchmark exists to exercise
SHIFT_SIGNAL_MIX = 0.7


@dataclass
class FeatureDataset:
    """N x d feature matrix with optional gender and age columns."""

    features: np.ndarray
    gender: np.ndarray | None = None
    ages: np.ndarray | None = None
    domain: str = "train"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ShapeError(f"features must be a nonempty 2-D matrix, got {self.features.shape}")
        n = self.features.shape[0]
        if self.gender is not None:
            self.gender = np.asarray(self.gender, dtype=np.float64).reshape(-1)
            if self.gender.shape[0] != n:
                raise ShapeError(f"gender length {self.gender.shape[0]} != sample count {n}")
            if not np.all(np.isin(self.gender, (0.0, 1.0))):
                raise DomainError("gender entries must be 0 or 1")
        if self.ages is not None:
            self.ages = np.asarray(self.ages, dtype=np.float64).reshape(-1)
            if self.ages.shape[0] != n:
                raise ShapeError(f"ages length {self.ages.shape[0]} != sample count {n}")
            if np.any(self.ages <= 0):
                raise DomainError("ages must all be > 0")
        if self.domain not in DOMAINS:
            raise ConfigError(f"domain must be one of {DOMAINS}, got {self.domain!r}")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.features.shape[1]

    def take(self, indices) -> "FeatureDataset":
        """Row subset (copy), preserving the domain tag."""
        idx = np.asarray(indices)
        return FeatureDataset(
            features=self.features[idx].copy(),
            gender=None if self.gender is None else self.gender[idx].copy(),
            ages=None if self.ages is None else self.ages[idx].copy(),
            domain=self.domain,
        )

    def without_ages(self) -> "FeatureDataset":
        return FeatureDataset(
            features=self.features.copy(),
            gender=None if self.gender is None else self.gender.copy(),
            ages=None,
            domain=self.domain,
        )


def _expected_header(d: int, has_gender: bool, has_age: bool) -> str:
    cols = [f"f{i}" for i in range(d)]
    if has_gender:
        cols.append("gender")
    if has_age:
        cols.append("age")
    return ",".join(cols)


def load_csv(path, domain: str = "train") -> FeatureDataset:
    """Parse a feature CSV; a missing age column gives an unlabeled dataset."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", line=1)
    header = lines[0].split(",")
    n_feat = 0
    while n_feat < len(header) and header[n_feat] == f"f{n_feat}":
        n_feat += 1
    rest = header[n_feat:]
    has_gender = bool(rest) and rest[0] == "gender"
    if has_gender:
        rest = rest[1:]
    has_age = bool(rest) and rest[0] == "age"
    if has_age:
        rest = rest[1:]
    if n_feat == 0 or rest:
        raise ParseError(
            f"bad header {lines[0]!r}; expected like {_expected_header(max(n_feat, 1), True, True)!r}",
            line=1,
        )
    width = n_feat + has_gender + has_age
    feats = np.empty((len(lines) - 1, n_feat))
    gender = np.empty(len(lines) - 1) if has_gender else None
    ages = np.empty(len(lines) - 1) if has_age else None
    for i, row in enumerate(lines[1:]):
        lineno = i + 2
        cells = row.split(",")
        if len(cells) != width:
            raise ParseError(f"expected {width} columns, found {len(cells)}", line=lineno)
        try:
            feats[i] = [float(c) for c in cells[:n_feat]]
        except ValueError as exc:
            raise ParseError(f"bad numeric value ({exc})", line=lineno) from None
        if has_gender:
            cell = cells[n_feat]
            if cell not in ("0", "1"):
                raise ParseError(f"gender must be exactly '0' or '1', found {cell!r}", line=lineno)
            gender[i] = float(cell)
        if has_age:
            try:
                age = float(cells[-1])
            except ValueError as exc:
                raise ParseError(f"bad numeric value ({exc})", line=lineno) from None
            if age <= 0:
                raise DomainError(f"line {lineno}: age must be > 0, found {age}")
            ages[i] = age
    if feats.shape[0] == 0:
        raise ParseError("file has a header but no rows", line=2)
    return FeatureDataset(features=feats, gender=gender, ages=ages, domain=domain)


def save_csv(path, ds: FeatureDataset) -> None:
    """Write the dataset in the schema load_csv reads back exactly."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_expected_header(ds.feat_dim, ds.gender is not None, ds.ages is not None))
        fh.write("\n")
        for i in range(ds.n):
            cells = [format_float(v) for v in ds.features[i]]
            if ds.gender is not None:
                cells.append(str(int(ds.gender[i])))
            if ds.ages is not None:
                cells.append(format_float(ds.ages[i]))
            fh.write(",".join(cells))
            fh.write("\n")


@dataclass
class SynthConfig:
    """Knobs of the synthetic covariate-shift benchmark.

    Train and test samples share one linear latent feature map and one
    labeling function; ``shift`` displaces test features along a fixed
    direction, ``label_shift`` displaces the test latent mean along the
    first latent axis, so only distributions move, never the labels' rule.
    """

    n_tr: int = 2000
    n_te: int = 500
    d: int = 50
    k: int = 8
    shift: float = 2.0
    label_shift: float = -0.5
    noise_feat: float = 0.1
    noise_age: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.n_tr < 1 or self.n_te < 1:
            raise ConfigError("n_tr and n_te must be >= 1")
        if self.d < 1 or self.k < 1 or self.k > self.d:
            raise ConfigError(f"need 1 <= k <= d, got k={self.k}, d={self.d}")
        if self.shift < 0:
            raise ConfigError(f"shift must be >= 0, got {self.shift}")
        if self.noise_feat < 0 or self.noise_age < 0:
            raise ConfigError("noise levels must be >= 0")


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _synth_domain(rng: Rng, n: int, cfg: SynthConfig, A, u, w, latent_shift: float, feat_shift: float):
    z = rng.normal(n, cfg.k)
    z[:, 0] += latent_shift
    x = z @ A.T + feat_shift * u + cfg.noise_feat * rng.normal(n, cfg.d)
    signal = _softplus(z @ w + AGE_OFFSET)
    ages = np.maximum(AGE_MIN, AGE_SCALE * signal + cfg.noise_age * rng.normal(n, 1)[:, 0])
    gender = rng.bernoulli(n, 0.5)
    return x, gender, ages


def synth_generate(cfg: SynthConfig) -> tuple[FeatureDataset, FeatureDataset]:
    """Deterministic (train, test) pair under covariate shift.

    The structural draws (feature map A, shift direction u, label weights w)
    come from a stream independent of the sample draws, and shift /
    label_shift enter only as multipliers, so regenerating with the same seed
    and different shift values reuses identical draws everywhere.
    """
    root = Rng(cfg.seed)
    rs = root.split("structure")
    A = rs.normal(cfg.d, cfg.k) / np.sqrt(cfg.k)
    u_rand = rs.normal(cfg.d, 1)[:, 0]
    u_rand /= np.linalg.norm(u_rand)
    w = rs.normal(cfg.k, 1)[:, 0]
    w /= np.linalg.norm(w)
    if w[0] < 0:
        w = -w  # pin the sign so label_shift < 0 always means younger test samples
    u_signal = A @ w
    u_signal /= np.linalg.norm(u_signal)
    u = SHIFT_SIGNAL_MIX * u_signal + (1.0 - SHIFT_SIGNAL_MIX) * u_rand
    u /= np.linalg.norm(u)

    x_tr, g_tr, y_tr = _synth_domain(root.split("train"), cfg.n_tr, cfg, A, u, w, 0.0, 0.0)
    x_te, g_te, y_te = _synth_domain(
        root.split("test"), cfg.n_te, cfg, A, u, w, cfg.label_shift, cfg.shift
    )
    train = FeatureDataset(features=x_tr, gender=g_tr, ages=y_tr, domain="train")
    test = FeatureDataset(features=x_te, gender=g_te, ages=y_te, domain="test")
    return train, test


def split(ds: FeatureDataset, fractions, seed: int) -> list[FeatureDataset]:
    """Disjoint, exhaustive, deterministic permutation split."""
    fractions = [float(f) for f in fractions]
    if not fractions or any(f <= 0 for f in fractions):
        raise ConfigError(f"fractions must be positive, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got sum {sum(fractions)}")
    perm = Rng(seed).split("split").permutation(ds.n)
    bounds = [0]
    acc = 0.0
    for f in fractions:
        acc += f
        bounds.append(int(round(acc * ds.n)))
    bounds[-1] = ds.n
    return [ds.take(perm[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]


def batches(ds_or_n, batch_size: int, rng: Rng) -> list[np.ndarray]:
    """Shuffled partition of row indices into batches (last may be short)."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    n = ds_or_n if isinstance(ds_or_n, (int, np.integer)) else ds_or_n.n
    perm = rng.permutation(int(n))
    return [perm[i : i + batch_size] for i in range(0, int(n), batch_size)]
