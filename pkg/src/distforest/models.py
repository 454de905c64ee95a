"""Run configuration and a uniform way to fit any of the supported models."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .baselines import fit_emos, fit_intercept
from .data import Dataset
from .families import get_family
from .forest import ForestConfig, grow_forest
from .tree import TreeConfig, grow

__all__ = ["RunConfig", "MODELS", "fit_model", "factory"]

MODELS = ("forest", "tree", "emos", "intercept")


@dataclass
class RunConfig:
    """Everything needed to fit one model.

    Forest defaults: 100 trees, ``mtry = ceil(m / 3)``, ``minsplit = 50``,
    ``minbucket = 20`` and ``alpha = 1`` (no pre-pruning).  A standalone
    tree uses every covariate in each node and ``tree_alpha``.
    """

    model: str = "forest"
    family: str = "censored_normal"
    threshold: float = 0.0
    ntree: int = 100
    mtry: int | None = None
    subsample_fraction: float = 0.632
    minsplit: int = 50
    minbucket: int = 20
    alpha: float = 1.0
    tree_alpha: float = 0.05
    statistic: str = "quad"
    seed: int | None = None
    loc_column: str | None = None
    scale_column: str | None = None
    scale_transform: str = "log"
    workers: int = 1

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.model == "emos" and not (self.loc_column and self.scale_column):
            raise ValueError("emos needs loc_column and scale_column")
        get_family(self.family)
        self.forest_config()
        self.tree_config()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def forest_config(self) -> ForestConfig:
        return ForestConfig(ntree=self.ntree, mtry=self.mtry,
                            subsample_fraction=self.subsample_fraction, minsplit=self.minsplit,
                            minbucket=self.minbucket, alpha=self.alpha, statistic=self.statistic,
                            seed=self.seed)

    def tree_config(self) -> TreeConfig:
        return TreeConfig(minsplit=self.minsplit, minbucket=self.minbucket, alpha=self.tree_alpha,
                          statistic=self.statistic)


def fit_model(config: RunConfig, dataset: Dataset):
    family = get_family(config.family, config.threshold)
    if config.model == "forest":
        return grow_forest(dataset, family, config.forest_config(), n_jobs=config.workers)
    if config.model == "tree":
        return grow(dataset, family, config.tree_config(), config.seed)
    if config.model == "emos":
        return fit_emos(dataset, family, config.loc_column, config.scale_column,
                        config.scale_transform)
    return fit_intercept(dataset, family)


def factory(config: RunConfig):
    """Training-set -> fitted-model callable for cross-validation."""
    def build(train: Dataset):
        return fit_model(config, train)
    return build
