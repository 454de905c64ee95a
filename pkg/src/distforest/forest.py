"""Distributional forests: subsampled ensembles of distributional trees.

Predictions are adaptive local likelihood fits: the family is refitted on
the full learning sample with nearest-neighbour weights that count, per
tree, how often a training row shares the query's leaf (normalized by the
leaf size) and average over trees.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import mle
from .data import Dataset
from .exceptions import DegenerateSampleError, SchemaError
from .families import CensoredFamily, ParamVector, Predictive
from .tree import DistTree, TreeConfig, grow

__all__ = ["ForestConfig", "DistForest", "grow_forest", "forest_weights", "predict"]

MAX_RETRIES = 3
CHUNK = 256


@dataclass(frozen=True)
class ForestConfig:
    """Forest controls; defaults follow the precipitation case study.

    ``mtry=None`` resolves to ``ceil(m / 3)``.  ``subsample_fraction`` is the
    share of rows drawn without replacement for every tree.
    """

    ntree: int = 100
    mtry: int | None = None
    subsample_fraction: float = 0.632
    minsplit: int = 50
    minbucket: int = 20
    alpha: float = 1.0
    statistic: str = "quad"
    split_objective: str = "max"
    max_candidates: int = 50
    max_depth: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.ntree < 1:
            raise ValueError("ntree must be positive")
        if not 0 < self.subsample_fraction <= 1:
            raise ValueError("subsample_fraction must lie in (0, 1]")
        # delegate the remaining checks
        self.tree_config(max(self.mtry or 1, 1))

    def resolved_mtry(self, m: int) -> int:
        mtry = math.ceil(m / 3) if self.mtry is None else self.mtry
        return max(1, min(mtry, m))

    def tree_config(self, m: int) -> TreeConfig:
        return TreeConfig(minsplit=self.minsplit, minbucket=self.minbucket, alpha=self.alpha,
                          mtry=self.resolved_mtry(m) if m else None, statistic=self.statistic,
                          split_objective=self.split_objective,
                          max_candidates=self.max_candidates, max_depth=self.max_depth)

    def to_dict(self) -> dict:
        return asdict(self)


class DistForest:
    """A fitted distributional forest.

    Attributes
    ----------
    trees : list of DistTree
        Each tree indexes its own subsample; ``subsample_rows[t]`` maps those
        local row numbers back to the learning sample.
    y, weights : learning-sample responses and case weights used for refits.
    n_failed : trees skipped after exhausting their retries.
    """

    def __init__(self, trees, subsample_rows, family: CensoredFamily, config: ForestConfig,
                 schema: dict, y, weights, seed: int, n_failed: int = 0):
        self.trees = list(trees)
        self.subsample_rows = [np.asarray(r, dtype=int) for r in subsample_rows]
        self.family = family
        self.config = config
        self.schema = schema
        self.y = np.asarray(y, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.seed = seed
        self.n_failed = n_failed

    @property
    def n_train(self) -> int:
        return self.y.size

    def _check(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.schema["names"]):
            raise SchemaError(f"expected {len(self.schema['names'])} covariates, got {X.shape[1]}")
        return X

    def weights_matrix(self, X) -> np.ndarray:
        """Forest weights for every query row, shape ``(len(X), n_train)``."""
        X = self._check(X)
        W = np.zeros((X.shape[0], self.n_train))
        for tree, rows in zip(self.trees, self.subsample_rows):
            leaf_q = tree.apply(X)
            leaf_t = tree.train_leaf
            wt = self.weights[rows]
            size = np.bincount(leaf_t, weights=wt, minlength=len(tree.nodes))
            share = wt / size[leaf_t]
            W[:, rows] += (leaf_q[:, None] == leaf_t[None, :]) * share[None, :]
        W /= len(self.trees)
        return W

    def predict(self, X) -> ParamVector:
        """Adaptive local likelihood estimates for every row of ``X``."""
        X = self._check(X)
        mus, sigmas = [], []
        for start in range(0, X.shape[0], CHUNK):
            W = self.weights_matrix(X[start:start + CHUNK])
            try:
                theta = mle.fit_batch(self.family, self.y, W)
            except DegenerateSampleError as exc:
                rows = start + np.asarray(exc.rows)
                raise DegenerateSampleError(
                    f"forest weights put all mass on censored responses for query rows {rows.tolist()}",
                    rows=rows) from None
            mus.append(np.atleast_1d(theta.mu))
            sigmas.append(np.atleast_1d(theta.sigma))
        if not mus:
            return ParamVector(np.empty(0), np.empty(0))
        return ParamVector(np.concatenate(mus), np.concatenate(sigmas))

    def predict_distribution(self, X) -> Predictive:
        return Predictive(self.family, self.predict(X))

    def tree_sizes(self):
        return [len(t.leaves) for t in self.trees], [t.depth for t in self.trees]


def _tree_seed(seed: int, t: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(t,))


def _grow_one(dataset: Dataset, family, tconf: TreeConfig, fraction: float, seed: int, t: int):
    rng = np.random.default_rng(_tree_seed(seed, t))
    n = dataset.n
    size = max(1, int(round(fraction * n)))
    for _ in range(1 + MAX_RETRIES):
        if size >= n:
            rows = np.arange(n)
        else:
            rows = np.sort(rng.choice(n, size=size, replace=False))
        try:
            return rows, grow(dataset.subset(rows), family, tconf, rng)
        except DegenerateSampleError:
            continue
    return None


def grow_forest(dataset: Dataset, family: CensoredFamily, config: ForestConfig | None = None,
                n_jobs: int = 1) -> DistForest:
    """Grow ``config.ntree`` trees on independent subsamples.

    Tree ``t`` draws its subsample and per-node variable subsets from a
    stream spawned from ``(seed, t)``, so the forest does not depend on
    ``n_jobs`` or on the order in which trees are built.
    """
    config = config or ForestConfig()
    seed = config.seed
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (2**63))
    tconf = config.tree_config(dataset.m)
    args = [(dataset, family, tconf, config.subsample_fraction, seed, t) for t in range(config.ntree)]
    if n_jobs == 1:
        results = [_grow_one(*a) for a in args]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(_grow_one)(*a) for a in args)
    grown = [r for r in results if r is not None]
    n_failed = len(results) - len(grown)
    if not grown:
        raise DegenerateSampleError("every tree failed: no subsample admits a likelihood fit")
    if n_failed:
        warnings.warn(f"{n_failed} of {config.ntree} trees skipped after {MAX_RETRIES} retries",
                      RuntimeWarning, stacklevel=2)
    rows, trees = zip(*grown)
    return DistForest(trees, rows, family, config, dataset.schema_signature(), dataset.y,
                      dataset.weights, seed, n_failed)


def forest_weights(forest: DistForest, z) -> np.ndarray:
    """Nearest-neighbour weights of the learning sample for one query row."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise SchemaError("forest_weights expects a single covariate row")
    return forest.weights_matrix(z[None, :])[0]


def predict(forest: DistForest, z) -> ParamVector:
    """Parameters for a single query row."""
    theta = forest.predict(np.asarray(z, dtype=float)[None, :])
    return ParamVector(float(theta.mu[0]), float(theta.sigma[0]))
