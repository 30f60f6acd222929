"""Stein kernel and KSD machinery.

An RBF base kernel with median-heuristic bandwidth is lifted to a
model-parameterized Stein kernel over sample pairs; row/column indices are
training samples and the score entering the kernel is the input-space
gradient of the model's log-likelihood. A model-independent pathway takes
arbitrary score vectors so analytic densities can be checked directly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform

from . import diffnet
from .data import LabeledDataset, gather
from .errors import ArgumentError, ConfigurationError, DataError, ShapeError


@dataclass
class ScoreTable:
    """Per-sample input-space scores, parameter-gradient norms, and predicted probs."""

    input_scores: np.ndarray      # (n, d), row i = grad_x log p(y_i | x_i)
    param_grad_norms: np.ndarray  # (n,), L2 norm of the parameter-space gradient
    probs: np.ndarray             # (n, C)
    sample_ids: np.ndarray

    def __post_init__(self) -> None:
        self.input_scores = np.asarray(self.input_scores, dtype=np.float64)
        self.param_grad_norms = np.asarray(self.param_grad_norms, dtype=np.float64)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        n = self.input_scores.shape[0]
        if self.param_grad_norms.shape != (n,) or self.probs.shape[0] != n:
            raise ShapeError("score table fields disagree on sample count")
        for arr in (self.input_scores, self.param_grad_norms, self.probs):
            if not np.all(np.isfinite(arr)):
                raise DataError("score table contains non-finite entries")
        if np.any(self.param_grad_norms < 0):
            raise DataError("gradient norms must be nonnegative")
        if np.any(self.probs < 0) or np.any(
            np.abs(self.probs.sum(axis=1) - 1.0) > 1e-8
        ):
            raise DataError("probability rows must lie on the simplex")

    @property
    def n(self) -> int:
        return self.input_scores.shape[0]


@dataclass
class SteinKernelMatrix:
    """Symmetric matrix of Stein kernel values with its bandwidth."""

    values: np.ndarray
    bandwidth: float
    sample_ids: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        n = self.values.shape[0]
        if self.values.shape != (n, n) or self.sample_ids.shape != (n,):
            raise ShapeError(f"kernel matrix must be square, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("kernel matrix contains non-finite values")
        if np.abs(self.values - self.values.T).max(initial=0.0) > 1e-8:
            raise DataError("kernel matrix is not symmetric within 1e-8")
        if np.any(np.diag(self.values) <= 0):
            raise DataError("kernel matrix diagonal must be strictly positive")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def index_of(self, sample_id: int) -> int:
        hits = np.flatnonzero(self.sample_ids == sample_id)
        if hits.size != 1:
            raise ArgumentError(f"sample id {sample_id} not in kernel matrix")
        return int(hits[0])


def median_bandwidth(features: np.ndarray) -> float:
    """Median pairwise Euclidean distance; falls back to the smallest nonzero one."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[0] < 2:
        raise ArgumentError("median bandwidth needs at least 2 points")
    dists = pdist(features)
    h = float(np.median(dists))
    if h == 0.0:
        nonzero = dists[dists > 0]
        if nonzero.size == 0:
            raise DataError("all points identical; bandwidth is undefined")
        h = float(nonzero.min())
    return h


def rbf(a: np.ndarray, b: np.ndarray, h: float) -> float:
    """exp(-||a - b||^2 / (2 h^2))."""
    if h <= 0:
        raise ConfigurationError(f"bandwidth must be positive, got {h}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    delta = a - b
    return float(np.exp(-(delta @ delta) / (2.0 * h * h)))


def stein_kernel(
    a: np.ndarray, b: np.ndarray, s_a: np.ndarray, s_b: np.ndarray, h: float
) -> float:
    """Closed-form Stein kernel for the RBF base kernel.

    Combines the base-kernel cross-Hessian trace (raw feature similarity),
    the score inner product, and the two kernel-gradient/score cross terms
    into one scalar:

        k(a,b) * [ s_a.s_b + (s_a - s_b).(a - b)/h^2 + d/h^2 - ||a-b||^2/h^4 ]
    """
    if h <= 0:
        raise ConfigurationError(f"bandwidth must be positive, got {h}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    s_a = np.asarray(s_a, dtype=np.float64)
    s_b = np.asarray(s_b, dtype=np.float64)
    if not (a.shape == b.shape == s_a.shape == s_b.shape):
        raise ShapeError(
            f"shape mismatch: a{a.shape} b{b.shape} s_a{s_a.shape} s_b{s_b.shape}"
        )
    d = a.shape[0]
    delta = a - b
    r2 = float(delta @ delta)
    k = np.exp(-r2 / (2.0 * h * h))
    h2 = h * h
    cross = float((s_a - s_b) @ delta)
    return float(k * (float(s_a @ s_b) + cross / h2 + d / h2 - r2 / (h2 * h2)))


def score_table(
    model: diffnet.MlpModel, ds: LabeledDataset, ids: np.ndarray
) -> ScoreTable:
    """Scores, gradient norms, and predictions for the given sample ids."""
    ids = np.asarray(ids, dtype=np.int64)
    X, y = gather(ds, ids)
    return ScoreTable(
        input_scores=diffnet.input_scores(model, X, y),
        param_grad_norms=diffnet.per_sample_grad_norms(model, X, y),
        probs=diffnet.predict_probs(model, X),
        sample_ids=ids,
    )


def stein_kernel_matrix_from_scores(
    features: np.ndarray,
    scores: np.ndarray,
    h: float,
    sample_ids: np.ndarray | None = None,
) -> SteinKernelMatrix:
    """Pairwise Stein kernel matrix from raw feature rows and score rows.

    This is the model-independent pathway: scores may come from any density,
    not just a trained classifier. The upper triangle is computed and
    mirrored so symmetry is exact, and the diagonal uses its closed form
    ||s_i||^2 + d/h^2 directly.
    """
    if h <= 0:
        raise ConfigurationError(f"bandwidth must be positive, got {h}")
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    S = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    if X.shape != S.shape:
        raise ShapeError(f"features {X.shape} and scores {S.shape} must match")
    n, d = X.shape
    if sample_ids is None:
        sample_ids = np.arange(n)

    h2 = h * h
    if n == 1:
        vals = np.array([[float(S[0] @ S[0]) + d / h2]])
        return SteinKernelMatrix(vals, h, sample_ids)

    r2 = squareform(pdist(X, "sqeuclidean"))
    k = np.exp(-r2 / (2.0 * h2))
    ss = S @ S.T
    # cross[i,j] = (s_i - s_j) . (x_i - x_j), expanded into four Gram pieces
    sx = np.einsum("ij,ij->i", S, X)
    sxt = S @ X.T
    cross = sx[:, None] + sx[None, :] - sxt - sxt.T
    vals = k * (ss + cross / h2 + d / h2 - r2 / (h2 * h2))
    vals = np.triu(vals, 1)
    vals = vals + vals.T
    np.fill_diagonal(vals, np.einsum("ij,ij->i", S, S) + d / h2)
    return SteinKernelMatrix(vals, h, sample_ids)


def stein_kernel_matrix(
    ds: LabeledDataset, table: ScoreTable, h: float
) -> SteinKernelMatrix:
    """Kernel matrix over the table's samples using the model's input scores."""
    X, _ = gather(ds, table.sample_ids)
    return stein_kernel_matrix_from_scores(
        X, table.input_scores, h, table.sample_ids
    )


def ksd_statistic(m: SteinKernelMatrix, mode: str = "u_stat") -> float:
    """Kernel Stein discrepancy estimate from a kernel matrix.

    v_stat averages all entries; u_stat drops the diagonal, giving the
    unbiased estimator that is zero in expectation under a matched model.
    """
    if mode not in ("u_stat", "v_stat"):
        raise ArgumentError(f"mode must be 'u_stat' or 'v_stat', got {mode!r}")
    n = m.n
    total = float(m.values.sum())
    if mode == "v_stat":
        return total / (n * n)
    if n < 2:
        raise ArgumentError("u-statistic needs at least 2 samples")
    return (total - float(np.trace(m.values))) / (n * (n - 1))


def kernel_matrix_to_csv(m: SteinKernelMatrix, path: str | Path) -> None:
    """Row-major CSV dump with sample ids as header, for external plotting."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([str(int(i)) for i in m.sample_ids])
        for row in m.values:
            writer.writerow([repr(float(v)) for v in row])
