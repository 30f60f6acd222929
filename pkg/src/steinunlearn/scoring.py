"""Per-sample unlearning-difficulty metrics and deterministic ranking.

Five scores: MKSD (kernel row sums), MSKSD (row sums of exponentiated
z-scored kernel values), SSN (parameter-gradient norms), EMSKSD (MSKSD
divided by predictive entropy), and the PC confidence baseline. Each metric
carries its own orientation so callers cannot silently invert a ranking.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, ConfigurationError, DataError
from .stein import ScoreTable, SteinKernelMatrix

HIGHER_IS_HARDER = "higher_is_harder"
HIGHER_IS_EASIER = "higher_is_easier"

METRICS = ("MKSD", "MSKSD", "SSN", "EMSKSD", "PC")

METRIC_ORIENTATION = {
    "MKSD": HIGHER_IS_HARDER,
    "MSKSD": HIGHER_IS_HARDER,
    "SSN": HIGHER_IS_EASIER,
    "EMSKSD": HIGHER_IS_HARDER,
    "PC": HIGHER_IS_HARDER,
}

DEFAULT_ENTROPY_FLOOR = 1e-6


@dataclass
class DifficultyRanking:
    """Scores plus the induced easiest-to-hardest ordering of sample ids."""

    metric: str
    scores: np.ndarray
    easy_to_hard: np.ndarray
    orientation: str
    sample_ids: np.ndarray

    def __post_init__(self) -> None:
        if sorted(self.easy_to_hard.tolist()) != sorted(self.sample_ids.tolist()):
            raise DataError("easy_to_hard must be a permutation of the sample ids")

    def easiest(self, k: int) -> np.ndarray:
        return self.easy_to_hard[:k]

    def hardest(self, k: int) -> np.ndarray:
        """The k most difficult ids, most difficult first."""
        return self.easy_to_hard[::-1][:k]


def mksd(m: SteinKernelMatrix) -> np.ndarray:
    """Row sums of the kernel matrix, diagonal included."""
    return m.values.sum(axis=1)


def standardize_row(row: np.ndarray) -> np.ndarray:
    """Z-score with population standard deviation."""
    row = np.asarray(row, dtype=np.float64)
    if row.size < 2:
        raise ArgumentError("standardization needs at least 2 values")
    std = float(row.std())
    if std == 0.0:
        raise DataError("row is constant; cannot standardize")
    return (row - row.mean()) / std


def msksd(m: SteinKernelMatrix, global_standardize: bool = False) -> np.ndarray:
    """Row sums of exponentiated standardized kernel values.

    Standardization is per row by default, so each sample's kernel-value
    distribution is brought to a common scale and the aggregate reacts to
    its skew rather than its magnitude. The global mode (one z-scoring over
    the whole matrix) exists for sensitivity runs.
    """
    values = m.values
    if global_standardize:
        std = float(values.std())
        if std == 0.0:
            raise DataError("kernel matrix is constant; cannot standardize")
        z = (values - values.mean()) / std
        return np.exp(z).sum(axis=1)
    out = np.empty(m.n)
    for i in range(m.n):
        try:
            z = standardize_row(values[i])
        except DataError as exc:
            raise DataError(
                f"sample {int(m.sample_ids[i])}: {exc}"
            ) from exc
        out[i] = np.exp(z).sum()
    return out


def ssn(table: ScoreTable) -> np.ndarray:
    """Parameter-space gradient norms; large values sit near the decision boundary."""
    return table.param_grad_norms.copy()


def entropy(probs_row: np.ndarray) -> float:
    """Shannon entropy in nats, with 0 * log(0) taken as 0."""
    p = np.asarray(probs_row, dtype=np.float64)
    if p.ndim != 1:
        raise ArgumentError(f"expected a probability vector, got shape {p.shape}")
    if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-8:
        raise ArgumentError("input is not a probability vector")
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def emsksd(
    msksd_scores: np.ndarray,
    table: ScoreTable,
    entropy_floor: float = DEFAULT_ENTROPY_FLOOR,
) -> np.ndarray:
    """MSKSD divided by predictive entropy, floored to survive one-hot outputs."""
    if entropy_floor <= 0:
        raise ConfigurationError(f"entropy floor must be positive, got {entropy_floor}")
    msksd_scores = np.asarray(msksd_scores, dtype=np.float64)
    if msksd_scores.shape[0] != table.n:
        raise ArgumentError(
            f"{msksd_scores.shape[0]} scores for {table.n} table rows"
        )
    ents = np.array([entropy(row) for row in table.probs])
    return msksd_scores / np.maximum(ents, entropy_floor)


def pc(table: ScoreTable, labels: np.ndarray) -> np.ndarray:
    """Predictive confidence at the true label, the baseline difficulty score."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != table.n:
        raise ArgumentError(f"{labels.shape[0]} labels for {table.n} table rows")
    return table.probs[np.arange(table.n), labels]


def rank(
    scores: np.ndarray,
    orientation: str,
    sample_ids: np.ndarray | None = None,
    metric: str = "",
) -> DifficultyRanking:
    """Deterministic easiest-to-hardest ordering with ties broken by ascending id."""
    scores = np.asarray(scores, dtype=np.float64)
    if sample_ids is None:
        sample_ids = np.arange(scores.shape[0])
    sample_ids = np.asarray(sample_ids, dtype=np.int64)
    if orientation not in (HIGHER_IS_HARDER, HIGHER_IS_EASIER):
        raise ArgumentError(f"unknown orientation {orientation!r}")
    bad = np.flatnonzero(~np.isfinite(scores))
    if bad.size:
        raise DataError(
            f"non-finite score for sample {int(sample_ids[bad[0]])}"
        )
    key = scores if orientation == HIGHER_IS_HARDER else -scores
    order = np.lexsort((sample_ids, key))
    return DifficultyRanking(
        metric=metric,
        scores=scores,
        easy_to_hard=sample_ids[order],
        orientation=orientation,
        sample_ids=sample_ids,
    )


def compute_metric(
    metric: str,
    table: ScoreTable,
    kernel: SteinKernelMatrix,
    labels: np.ndarray,
    entropy_floor: float = DEFAULT_ENTROPY_FLOOR,
    msksd_global: bool = False,
) -> DifficultyRanking:
    """Score-and-rank convenience wrapper used by the CLI pipelines."""
    if metric not in METRICS:
        raise ConfigurationError(f"unknown metric {metric!r}; choose from {METRICS}")
    if metric == "MKSD":
        scores = mksd(kernel)
    elif metric == "MSKSD":
        scores = msksd(kernel, global_standardize=msksd_global)
    elif metric == "SSN":
        scores = ssn(table)
    elif metric == "EMSKSD":
        scores = emsksd(msksd(kernel, global_standardize=msksd_global), table,
                        entropy_floor)
    else:
        scores = pc(table, labels)
    return rank(scores, METRIC_ORIENTATION[metric], table.sample_ids, metric)


def rankings_to_csv(rankings: list[DifficultyRanking], path: str | Path) -> None:
    """One row per (sample, metric): sample_id, metric, score, rank_easy_to_hard."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "metric", "score", "rank_easy_to_hard"])
        for ranking in rankings:
            position = {int(sid): r for r, sid in enumerate(ranking.easy_to_hard)}
            for sid, score in zip(ranking.sample_ids, ranking.scores):
                writer.writerow(
                    [int(sid), ranking.metric, repr(float(score)), position[int(sid)]]
                )
