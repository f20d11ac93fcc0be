"""CSV ingestion, standardization, stratified splitting, mini-batch sampling
and the PCA-space target used by every fitness objective.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .numerics import check_matrix, sym_eigen


class IngestionError(ValueError):
    """Unreadable, ragged or empty input data."""


@dataclass
class Dataset:
    features: np.ndarray                 # (n, p) float64
    labels: Optional[np.ndarray] = None  # (n,) int, values in [0, class_count)
    feature_names: Sequence[str] = ()
    class_count: int = 0

    def __post_init__(self):
        self.features = check_matrix(self.features, "features")
        n, p = self.features.shape
        if n < 2 or p < 1:
            raise IngestionError(f"dataset too small: n={n}, p={p}")
        if not self.feature_names:
            self.feature_names = [f"x{j}" for j in range(p)]
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.intp)
            if self.labels.shape != (n,):
                raise IngestionError("label vector length mismatch")
            if self.class_count == 0:
                self.class_count = int(self.labels.max()) + 1
            if self.labels.min() < 0 or self.labels.max() >= self.class_count:
                raise IngestionError("label values out of range")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


def _is_numeric_column(values: list[str]) -> bool:
    try:
        for v in values:
            float(v)
    except ValueError:
        return False
    return True


def load_csv(path, label_column=None, header: bool = True) -> Dataset:
    """Load a comma-separated dataset.

    Non-numeric columns other than the label column are dropped (only
    continuous attributes are kept). Labels are factorized to 0..c-1 in
    order of first appearance. ``label_column`` may be a header name or a
    column index.
    """
    try:
        with open(path, newline="") as f:
            rows = [r for r in csv.reader(f) if r]
    except OSError as e:
        raise IngestionError(f"cannot read {path}: {e}") from e
    if not rows:
        raise IngestionError(f"{path}: empty file")

    names = rows[0] if header else [f"c{j}" for j in range(len(rows[0]))]
    data_rows = rows[1:] if header else rows
    if not data_rows:
        raise IngestionError(f"{path}: no data rows")
    width = len(names)
    for i, r in enumerate(data_rows):
        if len(r) != width:
            raise IngestionError(
                f"{path}: ragged row {i + (2 if header else 1)} "
                f"({len(r)} cells, expected {width})"
            )

    label_idx = None
    if label_column is not None:
        if isinstance(label_column, int):
            label_idx = label_column
        else:
            try:
                label_idx = names.index(label_column)
            except ValueError:
                raise IngestionError(
                    f"{path}: no column named {label_column!r}"
                ) from None
        if not 0 <= label_idx < width:
            raise IngestionError(f"{path}: label column {label_idx} out of range")

    columns = [[r[j] for r in data_rows] for j in range(width)]
    feat_idx = [
        j for j in range(width)
        if j != label_idx and _is_numeric_column(columns[j])
    ]
    if not feat_idx:
        raise IngestionError(f"{path}: no numeric feature columns")

    features = np.array(
        [[float(r[j]) for j in feat_idx] for r in data_rows], dtype=np.float64
    )
    if not np.all(np.isfinite(features)):
        bad = np.argwhere(~np.isfinite(features))[0]
        raise IngestionError(
            f"{path}: non-finite value at row {bad[0]}, column {feat_idx[bad[1]]}"
        )

    labels = None
    class_count = 0
    if label_idx is not None:
        raw = columns[label_idx]
        seen: dict[str, int] = {}
        labels = np.array([seen.setdefault(v, len(seen)) for v in raw], dtype=np.intp)
        class_count = len(seen)

    return Dataset(
        features=features,
        labels=labels,
        feature_names=[names[j] for j in feat_idx],
        class_count=class_count,
    )


@dataclass(frozen=True)
class Standardizer:
    """Affine per-feature map fitted on one split, reusable on unseen rows.

    Constant features (std 0) are mapped to 0 and restored on inversion.
    """

    mean: np.ndarray
    std: np.ndarray       # population std; 0 where constant
    _safe_std: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        safe = np.where(self.std > 0, self.std, 1.0)
        object.__setattr__(self, "_safe_std", safe)

    def transform(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        z = (rows - self.mean) / self._safe_std
        return np.where(self.std > 0, z, 0.0)

    def inverse_transform(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        return rows * self._safe_std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(mean=np.array(d["mean"]), std=np.array(d["std"]))


def standardize(d: Dataset) -> tuple[Dataset, Standardizer]:
    """Z-score every feature (population std); constant features go to 0."""
    mean = d.features.mean(axis=0)
    std = d.features.std(axis=0)
    rec = Standardizer(mean=mean, std=std)
    out = Dataset(
        features=rec.transform(d.features),
        labels=d.labels,
        feature_names=list(d.feature_names),
        class_count=d.class_count,
    )
    return out, rec


@dataclass(frozen=True)
class SplitPlan:
    dr_train_indices: np.ndarray
    dr_heldout_indices: np.ndarray
    seed: int


def split(d: Dataset, dr_fraction: float, seed: int) -> SplitPlan:
    """Stratified shuffle split into DR-train and held-out index sets."""
    if not 0.0 < dr_fraction < 1.0:
        raise IngestionError(f"dr_fraction must be in (0, 1), got {dr_fraction}")
    rng = np.random.default_rng(seed)
    n = d.n
    train_parts, held_parts = [], []
    if d.labels is not None:
        for c in range(d.class_count):
            idx = np.flatnonzero(d.labels == c)
            rng.shuffle(idx)
            n_tr = int(round(dr_fraction * len(idx)))
            train_parts.append(idx[:n_tr])
            held_parts.append(idx[n_tr:])
        train = np.sort(np.concatenate(train_parts))
        held = np.sort(np.concatenate(held_parts))
    else:
        idx = rng.permutation(n)
        n_tr = int(round(dr_fraction * n))
        train = np.sort(idx[:n_tr])
        held = np.sort(idx[n_tr:])
    if len(train) == 0 or len(held) == 0:
        raise IngestionError(
            f"dr_fraction {dr_fraction} leaves an empty side for n={n}"
        )
    return SplitPlan(dr_train_indices=train, dr_heldout_indices=held, seed=seed)


@dataclass(frozen=True)
class PcaTarget:
    """Projection of the data onto the leading components holding at least
    ``variance_fraction`` of the variance. Keeps the fitted basis so unseen
    rows can be projected with the same map.
    """

    transformed: np.ndarray        # (n, p')
    components_retained: int
    variance_fraction: float
    mean: np.ndarray               # fitted column means
    components: np.ndarray         # (p, p'), orthonormal columns
    explained_ratios: np.ndarray   # per retained component, nonincreasing

    def project(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        return (rows - self.mean) @ self.components


def pca_target(d: Dataset, variance_fraction: float = 0.99) -> PcaTarget:
    X = d.features
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / X.shape[0]
    eig = sym_eigen(cov)
    lam = np.clip(eig.eigenvalues, 0.0, None)
    total = lam.sum()
    if total <= 0:
        raise IngestionError("degenerate dataset: zero total variance")
    ratios = lam / total
    cum = np.cumsum(ratios)
    p_prime = int(np.searchsorted(cum, variance_fraction - 1e-12) + 1)
    p_prime = min(p_prime, X.shape[1])
    comps = eig.eigenvectors[:, :p_prime]
    return PcaTarget(
        transformed=Xc @ comps,
        components_retained=p_prime,
        variance_fraction=variance_fraction,
        mean=mean,
        components=comps,
        explained_ratios=ratios[:p_prime],
    )


@dataclass
class BatchSampler:
    """Per-generation mini-batch index source. Single-owner mutable state."""

    batch_size: int
    seed: int
    generation: int = 0

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)

    def next_batch(self, source_size: int) -> np.ndarray:
        if source_size < 1:
            raise IngestionError("source_size must be >= 1")
        self.generation += 1
        if self.batch_size >= source_size:
            return np.arange(source_size)
        return np.sort(
            self._rng.choice(source_size, size=self.batch_size, replace=False)
        )
