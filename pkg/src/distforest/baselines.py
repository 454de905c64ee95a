"""Reference models: EMOS (nonhomogeneous censored regression) and intercept-only.

EMOS links the location to an ensemble-mean-like covariate and the log
scale to a (log-transformed) ensemble-spread covariate::

    mu    = b0 + b1 * x_loc
    log s = g0 + g1 * t(x_scale),   t = log or identity

and fits all four coefficients by censored maximum likelihood.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mle
from .data import NUMERIC, Dataset
from .exceptions import ConvergenceError, DataError, DegenerateSampleError, SchemaError
from .families import CensoredFamily, ParamVector, Predictive

__all__ = ["EmosModel", "fit_emos", "predict_emos", "fit_intercept", "SPREAD_FLOOR"]

SPREAD_FLOOR = 1e-6


@dataclass
class EmosModel:
    family: CensoredFamily
    beta: tuple
    gamma: tuple
    loc_column: str | None
    scale_column: str | None
    scale_transform: str = "log"
    names: tuple = ()
    loglik_value: float = float("nan")

    def _column(self, X, name):
        if name is None:
            return np.zeros(X.shape[0])
        try:
            j = self.names.index(name)
        except ValueError:
            raise SchemaError(f"column {name!r} not in the model schema") from None
        v = X[:, j]
        if np.any(np.isnan(v)):
            raise DataError(f"missing values in EMOS input column {name!r}")
        return v

    def _scale_input(self, v):
        if self.scale_transform == "log":
            return np.log(np.maximum(v, SPREAD_FLOOR))
        return v

    def predict(self, X) -> ParamVector:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.names):
            raise SchemaError(f"expected {len(self.names)} covariates, got {X.shape[1]}")
        xl = self._column(X, self.loc_column)
        xs = np.zeros(X.shape[0])
        if self.scale_column is not None:
            xs = self._scale_input(self._column(X, self.scale_column))
        mu = self.beta[0] + self.beta[1] * xl
        sigma = np.exp(self.gamma[0] + self.gamma[1] * xs)
        return ParamVector(mu, sigma)

    def predict_distribution(self, X) -> Predictive:
        return Predictive(self.family, self.predict(X))


def _design(dataset: Dataset, name, transform=None):
    if name is None:
        return None
    if name not in dataset.names:
        raise SchemaError(f"unknown column {name!r}")
    j = dataset.names.index(name)
    if dataset.kinds[j] != NUMERIC:
        raise SchemaError(f"EMOS column {name!r} must be numeric")
    v = dataset.X[:, j]
    if np.any(np.isnan(v)):
        raise DataError(f"EMOS column {name!r} has missing values")
    if transform == "log":
        v = np.log(np.maximum(v, SPREAD_FLOOR))
    if not np.ptp(v) > 0:
        raise DataError(f"EMOS column {name!r} has zero variance")
    return v


def fit_emos(dataset: Dataset, family: CensoredFamily, loc_column: str | None,
             scale_column: str | None, scale_transform: str = "log",
             tol: float = 1e-8, maxiter: int = mle.MAXITER) -> EmosModel:
    """Censored maximum-likelihood EMOS fit.

    Passing ``None`` for a column drops its slope (fixes it at zero), so
    ``fit_emos(ds, fam, None, None)`` is the intercept-only model.
    """
    if scale_transform not in ("log", "identity"):
        raise ValueError("scale_transform must be 'log' or 'identity'")
    y = family._response(dataset.y)
    w = dataset.weights
    xl = _design(dataset, loc_column)
    xs = _design(dataset, scale_column, scale_transform)
    if np.any(mle.is_degenerate(family, y, w[None, :])):
        raise DegenerateSampleError("no uncensored variation in the response")
    ones = np.ones_like(y)
    A = np.column_stack([ones, xl if xl is not None else np.zeros_like(y)])
    B = np.column_stack([ones, xs if xs is not None else np.zeros_like(y)])
    free = np.array([True, xl is not None, True, xs is not None])

    def unpack(x):
        full = np.zeros((x.shape[0], 4))
        full[:, free] = x
        mu = full[:, :2] @ A.T
        logs = full[:, 2:] @ B.T
        return mu, logs

    def objective(x, rows):
        mu, logs = unpack(x)
        with np.errstate(over="ignore"):
            ll = family._loglik_raw(mu, np.exp(logs), y[None, :])
        return (ll * w[None, :]).sum(axis=1)

    def gradient(x, rows):
        mu, logs = unpack(x)
        sigma = np.exp(logs)
        s_mu, s_sigma = family._score_parts(mu, sigma, y[None, :])
        gm = (s_mu * w) @ A
        gs = (s_sigma * sigma * w) @ B
        return np.column_stack([gm, gs])[:, free]

    start = mle.fit(family, mle.WeightedSample(y, w)).theta
    x0 = np.array([start.mu, 0.0, np.log(start.sigma), 0.0])[free][None, :]
    x, f, g, its, conv = _newton_checked(objective, gradient, x0, tol * w.sum(), maxiter)
    coef = np.zeros(4)
    coef[free] = x[0]
    return EmosModel(family, (float(coef[0]), float(coef[1])), (float(coef[2]), float(coef[3])),
                     loc_column, scale_column, scale_transform, dataset.names, float(f[0]))


def _newton_checked(objective, gradient, x0, tol, maxiter):
    x, f, g, its, conv = mle.newton_ascent(objective, gradient, x0, tol, maxiter=maxiter)
    if not conv[0] and np.max(np.abs(g[0])) > 1e2 * tol:
        raise ConvergenceError("EMOS optimizer did not converge", best=x[0])
    return x, f, g, its, conv


def fit_intercept(dataset: Dataset, family: CensoredFamily) -> EmosModel:
    """Constant predictive distribution: the global maximum-likelihood fit."""
    theta = mle.fit(family, mle.WeightedSample(dataset.y, dataset.weights)).theta
    return EmosModel(family, (float(theta.mu), 0.0), (float(np.log(theta.sigma)), 0.0),
                     None, None, "log", dataset.names)


def predict_emos(model: EmosModel, row) -> ParamVector:
    """Parameters for a single covariate row."""
    theta = model.predict(np.asarray(row, dtype=float)[None, :])
    return ParamVector(float(theta.mu[0]), float(theta.sigma[0]))
