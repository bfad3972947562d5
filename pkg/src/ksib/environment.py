"""Reward environments and ground-truth regret accounting.

``SyntheticEnv`` draws standard normal contexts and rewards from per-arm
single-index links; the default pair is a mirrored tanh ramp,
``g1(z) = mu1 + a*tanh(k z)`` and ``g2(z) = mu2 - a*tanh(k z)`` with
``(mu1, mu2, a, k) = (0.6, 0.4, 0.4, 1.0)``.  ``ReplayEnv`` replays a
binary-label CSV as a two-arm classification bandit: arm i predicts class
i and earns reward 1 on a correct prediction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, LoadError
from .numerics import Rng

DEFAULT_LINK_PARAMS = (0.6, 0.4, 0.4, 1.0)


def link_pair(z, params=DEFAULT_LINK_PARAMS):
    """Evaluate both default links at ``z``; returns ``(g1(z), g2(z))``."""
    mu1, mu2, a, k = params
    bump = a * np.tanh(k * np.asarray(z, dtype=float))
    return mu1 + bump, mu2 - bump


def sample_canonical_betas(d: int, n_arms: int, rng: Rng) -> np.ndarray:
    """Unit index vectors with positive first coordinate, one per arm."""
    betas = np.empty((n_arms, d))
    for i in range(n_arms):
        b = rng.normal(d)
        b[0] = abs(b[0])
        betas[i] = b / np.linalg.norm(b)
    return betas


class SyntheticEnv:
    """Single-index reward generator with known ground truth."""

    def __init__(self, betas, sigma: float, rng: Rng, links=None,
                 link_params=DEFAULT_LINK_PARAMS):
        self.betas = np.atleast_2d(np.asarray(betas, dtype=float))
        if sigma < 0:
            raise DomainError("sigma must be nonnegative")
        self.sigma = sigma
        self.rng = rng
        if links is None:
            mu1, mu2, a, k = link_params
            links = (lambda z: mu1 + a * np.tanh(k * z),
                     lambda z: mu2 - a * np.tanh(k * z))
        if len(links) != self.betas.shape[0]:
            raise DomainError("one link per arm required")
        self.links = links

    @property
    def n_arms(self) -> int:
        return self.betas.shape[0]

    @property
    def dim(self) -> int:
        return self.betas.shape[1]

    def true_means(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([g(float(x @ b)) for g, b in zip(self.links, self.betas)])

    def draw_round(self):
        """Returns ``(context, per-arm means, noise)`` for one round."""
        x = self.rng.normal(self.dim)
        means = self.true_means(x)
        noise = float(self.rng.normal()) * self.sigma if self.sigma > 0 else 0.0
        return x, means, noise


class RegretLedger:
    """Cumulative gap between the best arm's mean and the pulled arm's mean."""

    def __init__(self):
        self.total = 0.0
        self.path = []

    def update(self, pulled_mean: float, all_means) -> None:
        gap = float(np.max(all_means)) - float(pulled_mean)
        self.total += gap
        self.path.append(self.total)

    def average(self, t: int | None = None) -> float:
        if not self.path:
            return 0.0
        if t is None:
            t = len(self.path)
        return self.path[t - 1] / t


@dataclass
class ReplayTable:
    """Parsed CSV: raw (unstandardized) features plus binary labels."""

    features: np.ndarray
    labels: np.ndarray
    feature_names: list = field(default_factory=list)


class ReplayEnv:
    """One seeded pass over a sampled, standardized subset of a table."""

    def __init__(self, table: ReplayTable, seed: int, horizon: int):
        if table.features.shape[0] < horizon:
            raise LoadError(
                f"need at least {horizon} rows, have {table.features.shape[0]}")
        rng = Rng(seed)
        order = rng.permutation(table.features.shape[0])[:horizon]
        feats = table.features[order].astype(float)
        mean = feats.mean(axis=0)
        sd = feats.std(axis=0)
        self.constant_columns = np.flatnonzero(sd == 0)
        sd = np.where(sd == 0, 1.0, sd)
        self.features = (feats - mean) / sd
        self.labels = table.labels[order]
        self.order = order
        self.cursor = 0
        self.horizon = horizon

    def draw_round(self):
        """Returns ``(context, per-arm rewards)``; each row consumed once."""
        if self.cursor >= self.horizon:
            raise DomainError("trajectory exhausted")
        x = self.features[self.cursor]
        label = int(self.labels[self.cursor])
        self.cursor += 1
        rewards = np.array([1.0 if label == i else 0.0 for i in (0, 1)])
        return x, rewards


def load_csv(path, label_column, feature_columns=None,
             label_map=None) -> ReplayTable:
    """Parse a headered CSV into a replay table.

    ``label_column``/``feature_columns`` may be header names or integer
    positions; ``feature_columns=None`` takes every non-label column.
    ``label_map`` maps raw label strings to 0/1 (binary labels required).
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise LoadError(f"{path}: need a header row plus data rows")
    header = [h.strip() for h in rows[0]]

    def col_index(selector):
        if isinstance(selector, int):
            if not (0 <= selector < len(header)):
                raise LoadError(f"column index {selector} out of range")
            return selector
        if selector not in header:
            raise LoadError(f"column {selector!r} not in header {header}")
        return header.index(selector)

    label_idx = col_index(label_column)
    if feature_columns is None:
        feat_idx = [i for i in range(len(header)) if i != label_idx]
    else:
        feat_idx = [col_index(c) for c in feature_columns]

    feats, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise LoadError(f"{path}:{lineno}: expected {len(header)} fields")
        try:
            feats.append([float(row[i]) for i in feat_idx])
        except ValueError as exc:
            raise LoadError(f"{path}:{lineno}: non-numeric feature: {exc}") from exc
        raw = row[label_idx].strip()
        if label_map is not None:
            if raw not in label_map:
                raise LoadError(f"{path}:{lineno}: unmapped label {raw!r}")
            labels.append(int(label_map[raw]))
        else:
            try:
                labels.append(int(float(raw)))
            except ValueError as exc:
                raise LoadError(
                    f"{path}:{lineno}: label {raw!r} is not numeric; "
                    "pass a label map") from exc
    labels_arr = np.asarray(labels)
    uniq = set(labels_arr.tolist())
    if not uniq <= {0, 1} or len(uniq) < 2:
        raise LoadError(f"labels must be binary 0/1 after mapping, got {sorted(uniq)}")
    return ReplayTable(np.asarray(feats, dtype=float), labels_arr,
                       [header[i] for i in feat_idx])
