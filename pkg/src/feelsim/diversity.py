"""Dataset-diversity and model-diversity measures.

Dataset diversity is evaluated on the device from two ingredients: richness
(how many samples the device holds) and uncertainty (how mixed those samples
are).  Uncertainty is task specific:

* classification  - Shannon entropy or Gini-Simpson index of the label
  histogram,
* timeseries      - sample entropy (with approximate entropy available for
  comparison),
* clustering      - mean pairwise dissimilarity of the feature rows.

Model diversity compares a locally trained parameter vector against the
global model: a dissimilarity term (how far the local model moved) plus a
parameter-redundancy term (an L2,1 norm over pairwise differences of
parameter groups).  Only scalar indices ever leave the device.

All functions are pure and bit-reproducible given identical inputs and seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .domain import DatasetProfile, LocalDataset, ModelParams
from .errors import (
    EmptyDatasetError,
    NoTemplateMatchesError,
    SeriesTooShortError,
    ShapeMismatchError,
    UndefinedAngleError,
    ValidationError,
)

# --------------------------------------------------------------------------
# label-histogram uncertainty


def shannon_entropy(class_counts) -> float:
    """Shannon entropy of a label histogram, in nats.

    H = -sum_c p_c ln p_c with p_c = count_c / total and 0 ln 0 = 0.
    Maximal (ln k) for a balanced histogram over k classes, 0 when a single
    class holds every sample.
    """
    counts = np.asarray(class_counts, dtype=float)
    if counts.size and np.any(counts < 0):
        raise ValueError("class counts must be nonnegative")
    total = counts.sum()
    if counts.size == 0 or total <= 0:
        raise EmptyDatasetError("entropy of an empty histogram")
    p = counts[counts > 0] / total
    return float(-(p * np.log(p)).sum())


def gini_simpson(class_counts) -> float:
    """Gini-Simpson index 1 - sum_c p_c^2 (with-replacement form).

    The probability that two independently drawn samples belong to different
    classes.  0 for a single class, 1 - 1/k for a balanced k-class histogram.
    """
    counts = np.asarray(class_counts, dtype=float)
    if counts.size and np.any(counts < 0):
        raise ValueError("class counts must be nonnegative")
    total = counts.sum()
    if counts.size == 0 or total <= 0:
        raise EmptyDatasetError("gini-simpson of an empty histogram")
    p = counts / total
    return float(1.0 - (p * p).sum())


# --------------------------------------------------------------------------
# time-series irregularity


def _template_counts(x: np.ndarray, m: int, r: float) -> np.ndarray:
    """For each length-m template, how many templates lie within Chebyshev r.

    Counts include the self-match (distance zero).
    """
    templates = sliding_window_view(x, m)
    dist = np.abs(templates[:, None, :] - templates[None, :, :]).max(axis=2)
    return (dist <= r).sum(axis=1)


def approximate_entropy(series, m: int = 2, r: float = 0.2) -> float:
    """Approximate entropy: regularity with self-matches included.

    phi(m) = mean_i ln(C_i_m) where C_i_m is the fraction of length-m
    templates within Chebyshev tolerance r of template i (self included);
    the result is phi(m) - phi(m+1).  Low for regular series, higher for
    irregular ones; carries a known bias that shrinks with series length.
    """
    x = np.asarray(series, dtype=float).ravel()
    if m < 1:
        raise ValueError("embedding dimension m must be >= 1")
    if r <= 0:
        raise ValueError("tolerance r must be positive")
    if x.size <= m + 1:
        raise SeriesTooShortError(f"need length > {m + 1}, got {x.size}")

    def phi(mm: int) -> float:
        counts = _template_counts(x, mm, r)
        frac = counts / counts.size
        return float(np.mean(np.log(frac)))

    return phi(m) - phi(m + 1)


def sample_entropy(series, m: int = 2, r: float = 0.2) -> float:
    """Sample entropy: -ln(A/B) with self-matches excluded.

    B counts template pairs of length m within tolerance r, A the same pairs
    extended to length m+1; both range over the first N-m templates so the
    counts are comparable.  Largely free of the length bias of approximate
    entropy.  Raises ``no_template_matches`` when A or B is zero, since the
    ratio is undefined there; callers treating that case as maximal
    irregularity should catch the error.
    """
    x = np.asarray(series, dtype=float).ravel()
    if m < 1:
        raise ValueError("embedding dimension m must be >= 1")
    if r <= 0:
        raise ValueError("tolerance r must be positive")
    n = x.size
    if n <= m + 1:
        raise SeriesTooShortError(f"need length > {m + 1}, got {n}")

    tm = sliding_window_view(x, m)[: n - m]
    tm1 = sliding_window_view(x, m + 1)
    iu = np.triu_indices(n - m, k=1)

    dist_m = np.abs(tm[:, None, :] - tm[None, :, :]).max(axis=2)
    dist_m1 = np.abs(tm1[:, None, :] - tm1[None, :, :]).max(axis=2)
    b = int((dist_m[iu] <= r).sum())
    a = int((dist_m1[iu] <= r).sum())
    if a == 0 or b == 0:
        raise NoTemplateMatchesError(f"A={a}, B={b}")
    return float(-math.log(a / b))


# --------------------------------------------------------------------------
# pairwise dissimilarity

METRIC_KINDS = ("euclidean", "cosine", "heat_kernel")


@dataclass(frozen=True)
class DissimilarityMetric:
    """Pairwise dissimilarity: euclidean, cosine, or heat-kernel."""

    kind: str
    sigma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ValidationError("unknown_metric", self.kind)
        if self.kind == "heat_kernel":
            if self.sigma is None or self.sigma <= 0:
                raise ValidationError("sigma_required", "heat_kernel needs sigma > 0")
        elif self.sigma is not None:
            raise ValidationError("sigma_forbidden", f"{self.kind} takes no sigma")


def _pairwise(a: np.ndarray, b: np.ndarray, metric: DissimilarityMetric) -> np.ndarray:
    """Dissimilarity between row i of ``a`` and row i of ``b``."""
    if metric.kind == "euclidean":
        return np.linalg.norm(a - b, axis=1)
    if metric.kind == "heat_kernel":
        sq = ((a - b) ** 2).sum(axis=1)
        return 1.0 - np.exp(-sq / (2.0 * metric.sigma**2))
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise UndefinedAngleError("cosine dissimilarity of a zero vector")
    cos = np.clip((a * b).sum(axis=1) / (na * nb), -1.0, 1.0)
    return 1.0 - cos


def pair_dissimilarity(u, v, metric: DissimilarityMetric) -> float:
    """Dissimilarity between two vectors under ``metric``."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise ShapeMismatchError(f"{u.shape} vs {v.shape}")
    return float(_pairwise(u[None, :], v[None, :], metric)[0])


def mean_pairwise_dissimilarity(
    points, metric: DissimilarityMetric, sample_size: int = 64, seed: int = 0
) -> float:
    """Mean dissimilarity over all unordered pairs of (sampled) rows.

    When ``points`` has more rows than ``sample_size``, a uniform
    without-replacement subsample is drawn first; the draw is a pure function
    of ``seed``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need a 2-d array with at least two rows")
    if sample_size < 2:
        raise ValueError("sample_size must be >= 2")
    n = pts.shape[0]
    if n > sample_size:
        idx = np.sort(np.random.default_rng(seed).choice(n, size=sample_size, replace=False))
        pts = pts[idx]
        n = sample_size
    i, j = np.triu_indices(n, k=1)
    return float(_pairwise(pts[i], pts[j], metric).mean())


# --------------------------------------------------------------------------
# combined dataset diversity


@dataclass(frozen=True)
class DiversityConfig:
    """Knobs for both dataset-side and model-side diversity computation."""

    classification_measure: str = "shannon"  # or "gini_simpson"
    embedding_m: int = 2
    tolerance_scale: float = 0.2  # tolerance r as a multiple of the series std
    uncertainty_cap: float = 2.5  # normalizer for unbounded measures
    metric: DissimilarityMetric = DissimilarityMetric("euclidean")
    sample_size: int = 64
    model_dissimilarity_weight: float = 0.7
    model_redundancy_weight: float = 0.3
    redundancy_cap: float = 1.0
    outlier_percentile: float = 95.0

    def __post_init__(self):
        if self.classification_measure not in ("shannon", "gini_simpson"):
            raise ValidationError("unknown_measure", self.classification_measure)
        if self.uncertainty_cap <= 0 or self.redundancy_cap <= 0:
            raise ValidationError("nonpositive_cap")
        if not (0 < self.outlier_percentile <= 100):
            raise ValidationError("percentile_out_of_range")


def dataset_diversity_index(
    dataset: LocalDataset,
    cfg: DiversityConfig,
    n_classes: Optional[int] = None,
    seed: int = 0,
) -> DatasetProfile:
    """Combine richness and normalized uncertainty into one scalar.

    The normalized uncertainty u_hat lies in [0, 1]: entropy is divided by
    ln(k) over the global class count (so locally missing classes depress
    it), Gini-Simpson by 1 - 1/k, and the unbounded measures by the
    configured cap.  The index is u_hat * ln(1 + n_samples), so it grows
    with data volume but only as fast as the data is actually mixed.

    A time series in which no template pair matches is treated as maximally
    irregular (u_hat = 1).
    """
    n = dataset.n_samples
    if n == 0:
        raise EmptyDatasetError("diversity of an empty dataset")
    if dataset.task_kind == "classification":
        k = n_classes if n_classes is not None else int(dataset.labels.max()) + 1
        counts = dataset.class_counts(k)
        if cfg.classification_measure == "shannon":
            uncertainty = shannon_entropy(counts)
            cap = math.log(k) if k > 1 else 0.0
        else:
            uncertainty = gini_simpson(counts)
            cap = 1.0 - 1.0 / k if k > 1 else 0.0
        u_hat = uncertainty / cap if cap > 0 else 0.0
    elif dataset.task_kind == "timeseries":
        series = dataset.features.ravel()
        r = cfg.tolerance_scale * float(series.std())
        if r <= 0:
            r = 1e-12
        try:
            uncertainty = sample_entropy(series, cfg.embedding_m, r)
            u_hat = uncertainty / cfg.uncertainty_cap
        except NoTemplateMatchesError:
            uncertainty = math.inf
            u_hat = 1.0
    else:  # clustering
        uncertainty = mean_pairwise_dissimilarity(dataset.features, cfg.metric, cfg.sample_size, seed)
        u_hat = uncertainty / cfg.uncertainty_cap
    u_hat = min(max(u_hat, 0.0), 1.0)
    return DatasetProfile(
        richness=n,
        uncertainty=float(uncertainty),
        diversity_index=u_hat * math.log1p(n),
    )


# --------------------------------------------------------------------------
# model diversity


def model_global_dissimilarity(
    local: ModelParams, global_model: ModelParams, metric: DissimilarityMetric
) -> float:
    """Dissimilarity between a local and the global flat parameter vector."""
    if local.weights.shape != global_model.weights.shape:
        raise ShapeMismatchError(f"{local.weights.shape} vs {global_model.weights.shape}")
    return pair_dissimilarity(local.weights, global_model.weights, metric)


def parameter_redundancy(params: ModelParams, grouping: tuple) -> float:
    """L2,1 norm of pairwise group differences, per pair.

    The flat vector is viewed as ``group_count`` rows of ``group_size``; for
    every unordered pair of rows the difference vector is one row of a
    matrix D, and the result is sum of row euclidean norms of D divided by
    the number of rows.  Zero when all groups are identical; grows as groups
    spread apart.
    """
    group_count, group_size = grouping
    if group_count < 1 or group_size < 1 or group_count * group_size != params.weights.size:
        raise ShapeMismatchError(
            f"grouping {grouping} does not tile a vector of length {params.weights.size}"
        )
    if group_count == 1:
        return 0.0
    groups = params.weights.reshape(group_count, group_size)
    i, j = np.triu_indices(group_count, k=1)
    diffs = groups[i] - groups[j]
    return float(np.linalg.norm(diffs, axis=1).sum() / diffs.shape[0])


def model_diversity_index(
    local: ModelParams,
    global_model: ModelParams,
    grouping: tuple,
    weights: tuple = (0.7, 0.3),
    redundancy_cap: float = 1.0,
    ceiling: Optional[float] = None,
) -> float:
    """Weighted blend of model movement and internal redundancy.

    index = w_div * cosine dissimilarity(local, global)
          + w_red * clamp(parameter_redundancy / redundancy_cap, 0, 1)

    ``ceiling``, when given, caps the result; the round loop derives it from
    the distribution of indices reported in the same round so single outliers
    cannot monopolize selection.
    """
    w_div, w_red = weights
    if w_div < 0 or w_red < 0 or abs(w_div + w_red - 1.0) > 1e-9:
        raise ValidationError("weights_not_simplex", f"{weights}")
    if redundancy_cap <= 0:
        raise ValidationError("nonpositive_cap")
    dissim = model_global_dissimilarity(local, global_model, DissimilarityMetric("cosine"))
    red = parameter_redundancy(local, grouping)
    index = w_div * dissim + w_red * min(red / redundancy_cap, 1.0)
    if ceiling is not None:
        index = min(index, ceiling)
    return float(index)


def outlier_ceiling(values: Sequence[float], percentile: float = 95.0) -> float:
    """Ceiling below which reported indices are kept as-is: a percentile."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise ValueError("cannot take a percentile of no values")
    return float(np.percentile(arr, percentile))
