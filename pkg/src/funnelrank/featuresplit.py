"""Split features into country / region-dependent / region-invariant groups.

Country columns are designated by hand. Every other column is scored by the
mean pairwise distance between its per-region empirical distributions; a
column is dependent when that mean exceeds the threshold. The default
distance is the two-sample Kolmogorov-Smirnov statistic (scale-free, no
binning); 1-Wasserstein is available as an alternative.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import FeatureLayout, QueryGroup

MIN_REGION_SAMPLES = 30


def ks_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(stats.ks_2samp(a, b).statistic)


def wasserstein(a: np.ndarray, b: np.ndarray) -> float:
    return float(stats.wasserstein_distance(a, b))

_METRICS: dict[str, Callable[[np.ndarray, np.ndarray], float]] = {
    "ks": ks_distance,
    "wasserstein": wasserstein,
}


@dataclass(frozen=True)
class FeatureSplit:
    """Partition of the assembled feature range into three index groups."""

    country_idx: tuple[int, ...]
    dependent_idx: tuple[int, ...]
    invariant_idx: tuple[int, ...]
    threshold: float
    # Mean pairwise cross-region distance per column; NaN on country columns.
    mean_distance: np.ndarray

    def __post_init__(self):
        all_idx = sorted(self.country_idx + self.dependent_idx + self.invariant_idx)
        if all_idx != list(range(len(all_idx))):
            raise ValueError("country/dependent/invariant sets must partition the columns")

    @property
    def width(self) -> int:
        return len(self.country_idx) + len(self.dependent_idx) + len(self.invariant_idx)

    def views(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(country, dependent, invariant) column views of a feature matrix."""
        return (x[:, list(self.country_idx)],
                x[:, list(self.dependent_idx)],
                x[:, list(self.invariant_idx)])

    def to_json(self) -> dict:
        return {
            "country_idx": list(self.country_idx),
            "dependent_idx": list(self.dependent_idx),
            "invariant_idx": list(self.invariant_idx),
            "threshold": self.threshold,
            "mean_distance": [None if np.isnan(v) else float(v) for v in self.mean_distance],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureSplit":
        dist = np.array([np.nan if v is None else float(v) for v in obj["mean_distance"]])
        return cls(country_idx=tuple(obj["country_idx"]),
                   dependent_idx=tuple(obj["dependent_idx"]),
                   invariant_idx=tuple(obj["invariant_idx"]),
                   threshold=float(obj["threshold"]),
                   mean_distance=dist)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "FeatureSplit":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def trivial_split(layout: FeatureLayout) -> FeatureSplit:
    """All non-country columns invariant; used when no shift detection ran."""
    country = set(layout.country_idx)
    inv = tuple(j for j in range(layout.width) if j not in country)
    return FeatureSplit(country_idx=layout.country_idx, dependent_idx=(),
                        invariant_idx=inv, threshold=float("inf"),
                        mean_distance=np.full(layout.width, np.nan))


def _resolve_metric(metric) -> Callable[[np.ndarray, np.ndarray], float]:
    if callable(metric):
        return metric
    try:
        return _METRICS[metric]
    except KeyError:
        raise ValueError(f"unknown distance metric {metric!r}; "
                         f"choose from {sorted(_METRICS)} or pass a callable") from None


def _usable_regions(regions: np.ndarray, min_region_samples: int) -> list:
    usable = []
    for r in np.unique(regions):
        n = int((regions == r).sum())
        if n < min_region_samples:
            warnings.warn(
                f"region {r} has {n} samples (< {min_region_samples}); "
                f"excluded from distance estimation", UserWarning)
        else:
            usable.append(r)
    if len(usable) < 2:
        raise ValueError("need at least 2 regions with enough samples to compare distributions")
    return usable


def _assemble_split(width: int, country: tuple[int, ...], threshold: float,
                    mean_distance: np.ndarray) -> FeatureSplit:
    dependent, invariant = [], []
    for j in range(width):
        if j in country:
            continue
        (dependent if mean_distance[j] > threshold else invariant).append(j)
    return FeatureSplit(country_idx=country, dependent_idx=tuple(dependent),
                        invariant_idx=tuple(invariant), threshold=threshold,
                        mean_distance=mean_distance)


def split_matrix(x: np.ndarray, regions: np.ndarray, country_idx: Sequence[int],
                 threshold: float = 0.1, metric="ks",
                 min_region_samples: int = MIN_REGION_SAMPLES) -> FeatureSplit:
    """Classify the columns of an assembled feature matrix."""
    dist_fn = _resolve_metric(metric)
    x = np.asarray(x, dtype=np.float64)
    regions = np.asarray(regions)
    country = tuple(sorted(int(j) for j in country_idx))
    if any(j < 0 or j >= x.shape[1] for j in country):
        raise ValueError("country_idx outside the feature range")

    usable = _usable_regions(regions, min_region_samples)
    by_region = {r: x[regions == r] for r in usable}
    mean_distance = np.full(x.shape[1], np.nan)
    for j in range(x.shape[1]):
        if j in country:
            continue
        dists = [dist_fn(by_region[a][:, j], by_region[b][:, j])
                 for a, b in combinations(usable, 2)]
        mean_distance[j] = float(np.mean(dists))
    return _assemble_split(x.shape[1], country, threshold, mean_distance)


def split_features(data: Sequence[QueryGroup], country_idx: Sequence[int],
                   threshold: float = 0.1, metric="ks", *,
                   layout: FeatureLayout | None = None,
                   min_region_samples: int = MIN_REGION_SAMPLES) -> FeatureSplit:
    """Split the assembled features of query groups by regional shift.

    ``layout`` defaults to the one implied by the first record plus the
    region count encoded in ``country_idx``.
    """
    groups = list(data)
    if not groups:
        raise ValueError("no data to split")
    if layout is None:
        first = groups[0].records[0]
        layout = FeatureLayout(user_dim=len(first.x_user), regions=len(tuple(country_idx)),
                               listing_dim=len(first.x_listing))
    if tuple(sorted(country_idx)) != layout.country_idx:
        raise ValueError("country_idx must be the layout's one-hot region block")
    dist_fn = _resolve_metric(metric)
    country = layout.country_idx

    # User/query columns repeat across a group's candidates; one sample per
    # group keeps their effective sample size honest. Listing columns vary
    # per record and use every row.
    x_rec = layout.matrix(groups)
    reg_rec = np.array([g.region for g in groups for _ in g.records])
    x_grp = np.stack([layout.assemble(g.records[0]) for g in groups])
    reg_grp = np.array([g.region for g in groups])

    usable = _usable_regions(reg_grp, min_region_samples)
    rec_by_region = {r: x_rec[reg_rec == r] for r in usable}
    grp_by_region = {r: x_grp[reg_grp == r] for r in usable}

    mean_distance = np.full(layout.width, np.nan)
    for j in range(layout.width):
        if j in country:
            continue
        source = grp_by_region if j < layout.user_dim else rec_by_region
        dists = [dist_fn(source[a][:, j], source[b][:, j])
                 for a, b in combinations(usable, 2)]
        mean_distance[j] = float(np.mean(dists))
    return _assemble_split(layout.width, country, threshold, mean_distance)


class FeatureShiftSplitter(BaseEstimator, TransformerMixin):
    """Detect region-dependent columns; transform to [invariant | dependent].

    Fits on an assembled feature matrix ``X`` with per-row region ids ``y``.
    ``transform`` drops the country block and reorders the remaining columns
    so the invariant group comes first, which is the input convention of the
    region-mask adaptor.
    """

    def __init__(self, country_idx=(), threshold: float = 0.1, metric="ks",
                 min_region_samples: int = MIN_REGION_SAMPLES):
        self.country_idx = country_idx
        self.threshold = threshold
        self.metric = metric
        self.min_region_samples = min_region_samples

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y)
        if y.shape[0] != X.shape[0]:
            raise ValueError("region labels must align with rows of X")
        self.split_ = split_matrix(X, y, self.country_idx, self.threshold,
                                   self.metric, min_region_samples=self.min_region_samples)
        self.dependent_idx_ = self.split_.dependent_idx
        self.invariant_idx_ = self.split_.invariant_idx
        self.mean_distance_ = self.split_.mean_distance
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "split_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        cols = list(self.invariant_idx_) + list(self.dependent_idx_)
        return X[:, cols]
