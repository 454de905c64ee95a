"""Probabilistic forecast evaluation: CRPS, skill scores, importance, calibration, CV.

Models are evaluated through a small duck-typed interface: a fitted model
has a ``family`` attribute and a ``predict(X)`` method returning a
:class:`~distforest.families.ParamVector` per row.  Cross-validation takes
*factories*, callables that map a training :class:`Dataset` to such a
fitted model.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .data import Dataset
from .exceptions import DistForestError
from .families import CensoredFamily, ParamVector

__all__ = [
    "EvalReport",
    "QuantileResiduals",
    "CvPlan",
    "CvResult",
    "mean_crps",
    "crpss",
    "evaluate",
    "variable_importance",
    "quantile_residuals",
    "make_cv_plan",
    "cross_validate",
]

log = logging.getLogger(__name__)

PIT_CLAMP = 1e-12


@dataclass
class EvalReport:
    per_obs_crps: np.ndarray
    mean_crps: float
    crpss_vs_reference: float | None = None
    pit: np.ndarray | None = None
    residuals: np.ndarray | None = None
    importance: dict | None = None


def mean_crps(family: CensoredFamily, predictions: ParamVector, observations) -> float:
    y = np.asarray(observations, dtype=float)
    if len(predictions) != y.size:
        raise ValueError("predictions and observations differ in length")
    return float(np.mean(family.crps(predictions, y)))


def crpss(method_crps: float, reference_crps: float) -> float:
    """Skill score ``1 - method / reference``; positive means better than the reference."""
    if reference_crps == 0:
        raise ZeroDivisionError("reference mean CRPS is zero")
    return 1.0 - method_crps / reference_crps


def evaluate(model, dataset: Dataset, reference=None, rng=None, n_draws: int = 0) -> EvalReport:
    """Out-of-sample CRPS of ``model`` on ``dataset``.

    With a fitted ``reference`` model the skill score is included; with
    ``n_draws > 0`` randomized PIT values and quantile residuals as well.
    """
    theta = model.predict(dataset.X)
    per_obs = np.asarray(model.family.crps(theta, dataset.y), dtype=float)
    report = EvalReport(per_obs, float(per_obs.mean()))
    if reference is not None:
        ref = mean_crps(reference.family, reference.predict(dataset.X), dataset.y)
        report.crpss_vs_reference = crpss(report.mean_crps, ref)
    if n_draws:
        qr = quantile_residuals(model.family, theta, dataset.y, rng, n_draws)
        report.pit, report.residuals = qr.pit, qr.residuals
    return report


def variable_importance(model, dataset: Dataset, rng=None, n_permutations: int = 5) -> dict:
    """Permutation importance: mean CRPS increase when a test column is shuffled.

    Returns ``{column name: delta CRPS}`` in column order; every column gets
    ``n_permutations`` independent permutations whose deltas are averaged.
    """
    rng = np.random.default_rng(rng)
    base = mean_crps(model.family, model.predict(dataset.X), dataset.y)
    out = {}
    for j, name in enumerate(dataset.names):
        deltas = []
        for _ in range(n_permutations):
            perm = rng.permutation(dataset.n)
            shuffled = dataset.with_column(j, dataset.X[perm, j])
            deltas.append(mean_crps(model.family, model.predict(shuffled.X), dataset.y) - base)
        out[name] = float(np.mean(deltas))
    return out


@dataclass
class QuantileResiduals:
    pit: np.ndarray        # (n, n_draws)
    residuals: np.ndarray  # (n, n_draws)
    clamped: np.ndarray    # (n, n_draws) bool


def quantile_residuals(family: CensoredFamily, predictions: ParamVector, observations,
                       rng=None, n_draws: int = 100) -> QuantileResiduals:
    """Randomized PIT values and normal quantile residuals.

    Uncensored observations get ``F(y)`` in every draw; censored ones a
    uniform draw on ``(0, F(c)]``.  PIT values are clamped to
    ``[1e-12, 1 - 1e-12]`` before the normal quantile transform and the
    clamped entries are flagged.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be at least 1")
    rng = np.random.default_rng(rng)
    y = np.asarray(observations, dtype=float)
    F = np.asarray(family.cdf(predictions, y), dtype=float)
    atom = np.asarray(family.prob_atom(predictions), dtype=float) * np.ones_like(y)
    cens = family.is_censored(y)
    u = 1.0 - rng.uniform(size=(y.size, n_draws))      # (0, 1]
    pit = np.where(cens[:, None], u * atom[:, None], F[:, None] * np.ones((1, n_draws)))
    clamped = (pit < PIT_CLAMP) | (pit > 1 - PIT_CLAMP)
    if clamped.any():
        log.warning("%d PIT values clamped to [%g, 1 - %g]", clamped.sum(), PIT_CLAMP, PIT_CLAMP)
    residuals = special.ndtri(np.clip(pit, PIT_CLAMP, 1 - PIT_CLAMP))
    return QuantileResiduals(pit, residuals, clamped)


# -- cross-validation ------------------------------------------------------------

@dataclass
class CvPlan:
    """Grouped repeated K-fold plan.

    ``assignment[r, g]`` is the fold of group ``groups[g]`` in repetition ``r``.
    """

    repetitions: int
    folds: int
    groups: np.ndarray
    assignment: np.ndarray
    seed: int | None = None

    def test_rows(self, keys, r: int, k: int) -> np.ndarray:
        fold_of = dict(zip(self.groups.tolist(), self.assignment[r].tolist()))
        return np.flatnonzero(np.array([fold_of[g] == k for g in np.asarray(keys).tolist()]))


def make_cv_plan(keys, repetitions: int = 10, folds: int = 7, seed=None) -> CvPlan:
    """Assign the distinct group keys to ``folds`` near-equal folds per repetition."""
    groups = np.unique(np.asarray(keys))
    if folds < 2 or folds > groups.size:
        raise ValueError(f"need 2 <= folds <= number of groups ({groups.size})")
    rng = np.random.default_rng(seed)
    assignment = np.empty((repetitions, groups.size), dtype=int)
    for r in range(repetitions):
        perm = rng.permutation(groups.size)
        for k, part in enumerate(np.array_split(perm, folds)):
            assignment[r, part] = k
    return CvPlan(repetitions, folds, groups, assignment, seed)


@dataclass
class CvResult:
    """Per-repetition mean CRPS and skill scores.

    ``crps[name]`` and ``crpss[name]`` are arrays over repetitions; a NaN marks
    a repetition in which the model failed to fit on some fold.
    """

    models: list
    reference: str
    crps: dict
    crpss: dict
    failures: list = field(default_factory=list)

    def rows(self):
        """Long-format table rows ``(repetition, model, mean_crps, crpss)``."""
        for r in range(len(self.crps[self.reference])):
            for name in self.models:
                yield r, name, float(self.crps[name][r]), float(self.crpss[name][r])


def cross_validate(dataset: Dataset, factories: dict, plan: CvPlan, reference: str,
                   keys=None) -> CvResult:
    """Repeated grouped cross-validation of several model factories.

    In each repetition every model is fitted on the complement of each fold
    and scored on the fold; per-repetition mean CRPS is taken over all
    observations, and CRPSS is computed against the ``reference`` model.
    """
    if reference not in factories:
        raise ValueError(f"reference {reference!r} is not one of the models")
    keys = dataset.groups if keys is None else np.asarray(keys)
    if keys is None:
        raise ValueError("dataset has no group key")
    names = list(factories)
    crps = {name: np.full(plan.repetitions, np.nan) for name in names}
    failures = []
    for r in range(plan.repetitions):
        per_obs = {name: np.full(dataset.n, np.nan) for name in names}
        failed = set()
        for k in range(plan.folds):
            test = plan.test_rows(keys, r, k)
            if test.size == 0:
                raise ValueError(f"fold {k} of repetition {r} is empty")
            train = np.setdiff1d(np.arange(dataset.n), test)
            tr, te = dataset.subset(train), dataset.subset(test)
            for name in names:
                if name in failed:
                    continue
                try:
                    model = factories[name](tr)
                    per_obs[name][test] = model.family.crps(model.predict(te.X), te.y)
                except DistForestError as exc:
                    log.warning("model %s failed in repetition %d fold %d: %s", name, r, k, exc)
                    failures.append((r, k, name, str(exc)))
                    failed.add(name)
        for name in names:
            if name not in failed:
                crps[name][r] = per_obs[name].mean()
    skill = {}
    for name in names:
        with np.errstate(divide="ignore", invalid="ignore"):
            skill[name] = 1.0 - crps[name] / crps[reference]
    return CvResult(names, reference, crps, skill, failures)
