"""Synthetic multi-region funnel interactions and their JSONL persistence.

Each record is one <user, query, listing> row with a click / add-to-cart /
purchase label chain. Labels are sampled through the funnel: a cart is only
drawn for clicked rows and a purchase only for carted rows, so funnel
monotonicity holds by construction. Regional structure enters three ways:

* designated "dependent" feature columns get region-specific means,
* a per-region multiplicative mask rescales how those columns drive labels,
* a per-region domestic-preference bonus raises the purchase logit when the
  listing's seller region matches the buyer's region.

Stage intercepts are calibrated by Gauss-Hermite quadrature against the
known feature distributions, so the marginal rate of each funnel stage
matches the configured base rate in expectation. Each query group draws
from its own RNG stream (root seed + query index), which makes generation
order-independent and reproducible byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

PLATFORMS = ("web", "app")
TASKS = ("click", "cart", "purchase")

_HERM_POINTS, _HERM_WEIGHTS = np.polynomial.hermite.hermgauss(96)


class DataError(ValueError):
    """Malformed data file or a record violating an invariant."""


@dataclass(frozen=True)
class InteractionRecord:
    """One candidate listing inside a query impression."""

    query_id: str
    region: int
    platform: str
    listing_region: int
    x_user: np.ndarray
    x_listing: np.ndarray
    click: int
    cart: int
    purchase: int

    def validate(self) -> None:
        if not (self.purchase <= self.cart <= self.click):
            raise DataError(
                f"funnel violation on query {self.query_id!r}: "
                f"click={self.click} cart={self.cart} purchase={self.purchase}")
        if self.platform not in PLATFORMS:
            raise DataError(f"unknown platform {self.platform!r}")
        if not (np.isfinite(self.x_user).all() and np.isfinite(self.x_listing).all()):
            raise DataError(f"non-finite feature on query {self.query_id!r}")

    def label(self, task: str) -> int:
        return {"click": self.click, "cart": self.cart, "purchase": self.purchase}[task]


@dataclass(frozen=True)
class QueryGroup:
    """The candidate listings competing inside one (user, query) impression."""

    query_id: str
    region: int
    platform: str
    records: tuple[InteractionRecord, ...]

    def __post_init__(self):
        if len(self.records) < 2:
            raise DataError(f"group {self.query_id!r} needs >= 2 candidates")
        for r in self.records:
            if (r.query_id, r.region, r.platform) != (self.query_id, self.region, self.platform):
                raise DataError(f"group {self.query_id!r} mixes query/region/platform")

    def labels(self, task: str) -> np.ndarray:
        return np.array([r.label(task) for r in self.records], dtype=np.int64)


@dataclass(frozen=True)
class FeatureLayout:
    """Column layout of the assembled model input.

    The vector is [x_user (m) | region one-hot (R) | x_listing (p)]; the
    one-hot block is the manually designated country-feature range.
    """

    user_dim: int
    regions: int
    listing_dim: int

    @property
    def width(self) -> int:
        return self.user_dim + self.regions + self.listing_dim

    @property
    def country_idx(self) -> tuple[int, ...]:
        return tuple(range(self.user_dim, self.user_dim + self.regions))

    def assemble(self, record: InteractionRecord) -> np.ndarray:
        onehot = np.zeros(self.regions)
        onehot[record.region] = 1.0
        return np.concatenate([record.x_user, onehot, record.x_listing])

    def matrix(self, groups: Sequence[QueryGroup]) -> np.ndarray:
        rows = [self.assemble(r) for g in groups for r in g.records]
        return np.array(rows, dtype=np.float64).reshape(-1, self.width)

    def to_header(self) -> dict:
        return {"m": self.user_dim, "p": self.listing_dim, "R": self.regions}

    @classmethod
    def from_header(cls, header: dict) -> "FeatureLayout":
        return cls(user_dim=int(header["m"]), regions=int(header["R"]),
                   listing_dim=int(header["p"]))


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    regions: int = 4
    region_weights: tuple[float, ...] = (0.4, 0.3, 0.2, 0.1)
    user_dim: int = 6
    listing_dim: int = 6
    n_queries: int = 1000
    candidates_per_query: int = 8
    # Indices into the assembled vector that receive region-specific means.
    dependent_idx: tuple[int, ...] = (0, 1, 2, 3, 4)
    # Scalar, or one multiplier per region, scaling the planted mean shifts.
    shift_strength: float | tuple[float, ...] = 2.0
    # (p_click, p_cart | click, p_purchase | cart).
    base_rates: tuple[float, float, float] = (0.35, 0.40, 0.45)
    # Per-region additive purchase-logit bonus for domestic listings.
    domestic_preference: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0)
    platform_weights: tuple[float, float] = (0.6, 0.4)
    # Per-region multiplicative masks on dependent columns draw from
    # uniform(1 - spread, 1 + spread); 0 removes regional re-weighting.
    region_mask_spread: float = 0.75
    # Scale of the latent quality index eta = w . x driving all three stages.
    signal_scale: float = 1.5

    @property
    def layout(self) -> FeatureLayout:
        return FeatureLayout(self.user_dim, self.regions, self.listing_dim)

    @property
    def domestic_col(self) -> int:
        """Assembled index of the domestic-listing indicator (last listing column)."""
        return self.layout.width - 1

    def validate(self) -> None:
        if self.regions < 1:
            raise ValueError("degenerate config: zero regions")
        if self.candidates_per_query < 2:
            raise ValueError("degenerate config: need >= 2 candidates per query")
        if self.n_queries < 1:
            raise ValueError("degenerate config: zero queries")
        if self.user_dim < 1 or self.listing_dim < 1:
            raise ValueError("feature dims must be positive")
        if len(self.region_weights) != self.regions:
            raise ValueError("region_weights length must equal region count")
        if abs(sum(self.region_weights) - 1.0) > 1e-9 or min(self.region_weights) <= 0:
            raise ValueError("region_weights must be positive and sum to 1")
        if abs(sum(self.platform_weights) - 1.0) > 1e-9 or min(self.platform_weights) <= 0:
            raise ValueError("platform_weights must be positive and sum to 1")
        if len(self.domestic_preference) != self.regions:
            raise ValueError("domestic_preference length must equal region count")
        if not all(0.0 < r < 1.0 for r in self.base_rates):
            raise ValueError("base rates must lie in (0, 1)")
        strengths = self.shift_per_region()
        if len(strengths) != self.regions:
            raise ValueError("shift_strength must be scalar or one value per region")
        layout = self.layout
        country = set(layout.country_idx)
        for j in self.dependent_idx:
            if not (0 <= j < layout.width) or j in country:
                raise ValueError(f"dependent index {j} outside feature range or in country block")
        if self.domestic_col in self.dependent_idx:
            raise ValueError("domestic indicator column cannot carry a planted shift")

    def shift_per_region(self) -> tuple[float, ...]:
        if isinstance(self.shift_strength, (int, float)):
            return tuple(float(self.shift_strength) for _ in range(self.regions))
        return tuple(float(s) for s in self.shift_strength)


def _dataset_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 0xD5]))


def _group_rng(seed: int, query_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 0x9, query_index]))


@dataclass(frozen=True)
class _LabelModel:
    """Frozen label mechanism: latent index weights, masks, intercepts."""

    weights: np.ndarray            # per assembled column, 0 on country + domestic cols
    masks: np.ndarray              # (R, width) multiplicative, 1 outside dependent cols
    dep_means: np.ndarray          # (R, width) per-region means, 0 outside dependent cols
    intercepts: np.ndarray         # (R, 3) per-region stage intercepts

    def eta(self, x: np.ndarray, region: int) -> np.ndarray:
        return x @ (self.masks[region] * self.weights)


def _region_eta_moments(cfg: GeneratorConfig, model_w: np.ndarray, masks: np.ndarray,
                        dep_means: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    eff = masks * model_w                      # (R, width)
    means = (eff * dep_means).sum(axis=1)
    variances = (eff ** 2).sum(axis=1)         # unit-variance gaussian columns
    return means, np.sqrt(variances)


def _stage_intercepts(cfg: GeneratorConfig, means: np.ndarray, sds: np.ndarray) -> np.ndarray:
    """Per-region stage intercepts hitting the base rates in expectation.

    Calibrating each region separately keeps marginal click/cart/purchase
    rates equal across regions, so region composition cannot masquerade as
    a domestic-preference effect.
    """
    pts, wts = _HERM_POINTS, _HERM_WEIGHTS
    qw = wts / np.sqrt(np.pi)
    p_click, p_cart, p_buy = cfg.base_rates
    pref = np.asarray(cfg.domestic_preference)
    # P(listing domestic | buyer region r) equals that region's supply share.
    delta = np.asarray(cfg.region_weights)

    out = np.empty((cfg.regions, 3))
    for r in range(cfg.regions):
        grid = means[r] + np.sqrt(2.0) * sds[r] * pts

        def stage_mean(values):
            return float(values @ qw)

        a_c = brentq(lambda a: stage_mean(expit(a + grid)) - p_click,
                     -60.0, 60.0, xtol=1e-12)
        tilt_c = expit(a_c + grid)
        denom_c = stage_mean(tilt_c)
        a_k = brentq(lambda a: stage_mean(expit(a + grid) * tilt_c) / denom_c - p_cart,
                     -60.0, 60.0, xtol=1e-12)
        tilt_ck = tilt_c * expit(a_k + grid)
        denom_ck = stage_mean(tilt_ck)

        def buy_rate(a):
            foreign = stage_mean(expit(a + grid) * tilt_ck)
            domestic = stage_mean(expit(a + grid + pref[r]) * tilt_ck)
            return ((1.0 - delta[r]) * foreign + delta[r] * domestic) / denom_ck - p_buy

        a_b = brentq(buy_rate, -60.0, 60.0, xtol=1e-12)
        out[r] = (a_c, a_k, a_b)
    return out


def _build_label_model(cfg: GeneratorConfig) -> _LabelModel:
    layout = cfg.layout
    rng = _dataset_rng(cfg.seed)
    width = layout.width

    gaussian_cols = np.ones(width, dtype=bool)
    gaussian_cols[list(layout.country_idx)] = False
    gaussian_cols[cfg.domestic_col] = False

    weights = np.zeros(width)
    n_active = int(gaussian_cols.sum())
    weights[gaussian_cols] = rng.normal(size=n_active) * (cfg.signal_scale / np.sqrt(n_active))

    dep = list(cfg.dependent_idx)
    masks = np.ones((cfg.regions, width))
    if dep and cfg.region_mask_spread > 0:
        masks[:, dep] = rng.uniform(1.0 - cfg.region_mask_spread,
                                    1.0 + cfg.region_mask_spread,
                                    size=(cfg.regions, len(dep)))

    dep_means = np.zeros((cfg.regions, width))
    if dep:
        directions = rng.choice([-1.0, 1.0], size=len(dep))
        if cfg.regions > 1:
            offsets = np.linspace(-0.5, 0.5, cfg.regions)
        else:
            offsets = np.zeros(1)
        strengths = np.asarray(cfg.shift_per_region())
        dep_means[:, dep] = (strengths * offsets)[:, None] * directions[None, :]

    means, sds = _region_eta_moments(cfg, weights, masks, dep_means)
    intercepts = _stage_intercepts(cfg, means, sds)
    return _LabelModel(weights=weights, masks=masks, dep_means=dep_means,
                       intercepts=intercepts)


def generate(config: GeneratorConfig) -> list[QueryGroup]:
    """Generate seeded query groups; a pure function of the config."""
    config.validate()
    layout = config.layout
    model = _build_label_model(config)
    pref = np.asarray(config.domestic_preference)
    region_w = np.asarray(config.region_weights)
    platform_w = np.asarray(config.platform_weights)
    n_cand = config.candidates_per_query
    width = layout.width
    user_cols = np.arange(config.user_dim)
    listing_cols = np.arange(config.user_dim + config.regions, width)

    groups: list[QueryGroup] = []
    for q in range(config.n_queries):
        rng = _group_rng(config.seed, q)
        region = int(rng.choice(config.regions, p=region_w))
        platform = PLATFORMS[int(rng.choice(2, p=platform_w))]
        listing_regions = rng.choice(config.regions, size=n_cand, p=region_w)

        x = rng.standard_normal((n_cand, width))
        x += model.dep_means[region][None, :]
        x[:, list(layout.country_idx)] = 0.0
        x[:, layout.country_idx[0] + region] = 1.0
        x[:, config.domestic_col] = (listing_regions == region).astype(np.float64)
        # user/query features are shared across the group's candidates
        x[:, user_cols] = x[0, user_cols]

        eta = model.eta(x, region)
        a_c, a_k, a_b = model.intercepts[region]
        domestic = listing_regions == region
        u = rng.random((n_cand, 3))
        click = (u[:, 0] < expit(a_c + eta)).astype(np.int64)
        cart = click * (u[:, 1] < expit(a_k + eta)).astype(np.int64)
        buy_logit = a_b + eta + np.where(domestic, pref[region], 0.0)
        purchase = cart * (u[:, 2] < expit(buy_logit)).astype(np.int64)

        qid = f"q{q:07d}"
        records = tuple(
            InteractionRecord(
                query_id=qid, region=region, platform=platform,
                listing_region=int(listing_regions[i]),
                x_user=x[i, user_cols].copy(),
                x_listing=x[i, listing_cols].copy(),
                click=int(click[i]), cart=int(cart[i]), purchase=int(purchase[i]))
            for i in range(n_cand))
        groups.append(QueryGroup(query_id=qid, region=region, platform=platform,
                                 records=records))
    return groups


def _record_to_json(r: InteractionRecord) -> dict:
    return {
        "listing_region": r.listing_region,
        "x_user": [float(v) for v in r.x_user],
        "x_listing": [float(v) for v in r.x_listing],
        "click": r.click, "cart": r.cart, "purchase": r.purchase,
    }


def write_jsonl(groups: Sequence[QueryGroup], path, layout: FeatureLayout) -> None:
    """Write groups as JSON Lines with a sidecar header as line 1.

    Floats serialize via repr (shortest round-trip form), so reading the
    file back reproduces every f64 bit pattern.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(layout.to_header(), separators=(",", ":")) + "\n")
        for g in groups:
            obj = {
                "query_id": g.query_id,
                "region": g.region,
                "platform": g.platform,
                "candidates": [_record_to_json(r) for r in g.records],
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_jsonl(path) -> tuple[FeatureLayout, list[QueryGroup]]:
    groups: list[QueryGroup] = []
    layout: FeatureLayout | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: malformed JSON on line {lineno}: {exc}") from exc
            if lineno == 1:
                if not {"m", "p", "R"} <= obj.keys():
                    raise DataError(f"{path}: line 1 must be the m/p/R header")
                layout = FeatureLayout.from_header(obj)
                continue
            try:
                records = tuple(
                    InteractionRecord(
                        query_id=obj["query_id"], region=int(obj["region"]),
                        platform=obj["platform"],
                        listing_region=int(c["listing_region"]),
                        x_user=np.array(c["x_user"], dtype=np.float64),
                        x_listing=np.array(c["x_listing"], dtype=np.float64),
                        click=int(c["click"]), cart=int(c["cart"]),
                        purchase=int(c["purchase"]))
                    for c in obj["candidates"])
            except (KeyError, TypeError) as exc:
                raise DataError(f"{path}: line {lineno}: missing field {exc}") from exc
            for r in records:
                if len(r.x_user) != layout.user_dim or len(r.x_listing) != layout.listing_dim:
                    raise DataError(f"{path}: line {lineno}: feature width differs from header")
                try:
                    r.validate()
                except DataError as exc:
                    raise DataError(f"{path}: line {lineno}: {exc}") from exc
            groups.append(QueryGroup(query_id=obj["query_id"], region=int(obj["region"]),
                                     platform=obj["platform"], records=records))
    if layout is None:
        raise DataError(f"{path}: empty file, expected a header line")
    return layout, groups


def records_of(groups: Iterable[QueryGroup]) -> list[InteractionRecord]:
    return [r for g in groups for r in g.records]


def label_matrix(groups: Sequence[QueryGroup], tasks: Sequence[str]) -> np.ndarray:
    rows = [[r.label(t) for t in tasks] for g in groups for r in g.records]
    return np.array(rows, dtype=np.float64).reshape(-1, len(tasks))
