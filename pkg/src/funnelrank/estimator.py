"""Scikit-learn style front end for the ranking models.

``FunnelRanker`` follows the estimator protocol (constructor stores params
verbatim, ``fit`` returns self, ``get_params``/``set_params``/``clone``
work, unfitted use raises ``NotFittedError``) so the models compose with
the wider ecosystem, while training itself runs on the package's own
engine. Inputs are query groups rather than flat arrays because the unit
of ranking is the impression, not the row.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import FeatureLayout, QueryGroup
from .evaluation import mean_ndcg_for_task
from .featuresplit import split_features
from .models import make_model
from .training import TrainConfig, train


def _check_groups(groups) -> list[QueryGroup]:
    groups = list(groups)
    if not groups:
        raise ValueError("no query groups provided")
    if not all(isinstance(g, QueryGroup) for g in groups):
        raise TypeError("expected a sequence of QueryGroup")
    return groups


def _infer_layout(groups: Sequence[QueryGroup], regions: int | None) -> FeatureLayout:
    first = groups[0].records[0]
    n_regions = regions if regions is not None else max(g.region for g in groups) + 1
    return FeatureLayout(user_dim=len(first.x_user), regions=n_regions,
                         listing_dim=len(first.x_listing))


class FunnelRanker(BaseEstimator):
    """Multi-task funnel ranker with a fit/predict interface.

    Parameters mirror the CLI: ``architecture`` picks the model family,
    ``md`` the region-adaptor placement, and ``tasks`` the funnel depth
    (2 = click/purchase, 3 = click/cart/purchase).
    """

    def __init__(self, architecture: str = "seq", tasks: int = 3, md: str = "none",
                 hidden: int = 32, regularizer: bool = True, threshold: float = 0.1,
                 epochs: int = 10, batch_size: int = 256, learning_rate: float = 1e-2,
                 optimizer: str = "adam", patience: int = 3, seed: int = 0,
                 depth: int = 48, regions: int | None = None):
        self.architecture = architecture
        self.tasks = tasks
        self.md = md
        self.hidden = hidden
        self.regularizer = regularizer
        self.threshold = threshold
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.patience = patience
        self.seed = seed
        self.depth = depth
        self.regions = regions

    def fit(self, X, y=None):
        groups = _check_groups(X)
        layout = _infer_layout(groups, self.regions)
        split = None
        if self.md != "none":
            split = split_features(groups, layout.country_idx,
                                   threshold=self.threshold, layout=layout)
        overrides = {}
        if self.architecture == "seq":
            overrides = {"hidden": self.hidden, "regularizer": self.regularizer}
        model = make_model(self.architecture, tasks=self.tasks,
                           input_dim=layout.width, seed=self.seed,
                           md_mode=self.md, split=split, **overrides)
        cfg = TrainConfig(seed=self.seed, epochs=self.epochs,
                          batch_size=self.batch_size,
                          learning_rate=self.learning_rate,
                          optimizer=self.optimizer, patience=self.patience,
                          ndcg_depth=self.depth)
        self.report_ = train(model, groups, cfg, layout)
        self.model_ = model
        self.layout_ = layout
        self.split_ = split
        self.task_names_ = list(model.task_names)
        return self

    def predict_proba(self, X) -> list[np.ndarray]:
        """Per-group (n_candidates, n_tasks) probability matrices."""
        check_is_fitted(self, "model_")
        groups = _check_groups(X)
        mats = []
        for g in groups:
            probs = self.model_.forward(self.layout_.matrix([g])).prob_matrix()
            mats.append(probs)
        return mats

    def predict(self, X) -> list[np.ndarray]:
        """Per-group candidate ranking (indices, best first) by purchase score."""
        col = -1
        return [np.argsort(-p[:, col], kind="stable") for p in self.predict_proba(X)]

    def score(self, X, y=None) -> float:
        """Mean purchase NDCG over the given groups."""
        check_is_fitted(self, "model_")
        groups = _check_groups(X)
        probs = self.model_.forward(self.layout_.matrix(groups)).prob_matrix()
        return mean_ndcg_for_task(groups, probs[:, -1], "purchase", self.depth)
