"""Left-censored location-scale families.

A family describes a latent location-scale variable ``Y* = mu + sigma * Z``
that is observed as ``Y = max(c, Y*)``; everything below ``c`` collapses
into a point mass at the censoring threshold ``c`` (0 by default, i.e. dry
days recorded as exact zeros).

Each concrete family only supplies the standardized building blocks of
``Z`` (log-density, log-CDF, quantile, uncensored CRPS, ...).  Likelihood,
score, CDF, quantile, sampling and CRPS of the censored response are
assembled generically in :class:`CensoredFamily`.

All methods are vectorized: ``theta`` may hold scalars or arrays, which
broadcast against ``y``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from scipy import special

from .exceptions import DomainError, InvalidParameterError

__all__ = [
    "ParamVector",
    "CensoredFamily",
    "CensoredNormal",
    "CensoredLogistic",
    "get_family",
    "Predictive",
]

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
_INV_SQRT_PI = 1.0 / np.sqrt(np.pi)


@dataclass(frozen=True)
class ParamVector:
    """Location/scale parameters in natural coordinates.

    ``mu`` and ``sigma`` may be scalars or equally shaped arrays (one
    parameter vector per row).  The internal, unconstrained coordinates
    used by the optimizers are ``(mu, log sigma)``.
    """

    mu: float | np.ndarray
    sigma: float | np.ndarray

    k: ClassVar[int] = 2

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise InvalidParameterError("parameters must be finite")
        if np.any(sigma <= 0):
            raise InvalidParameterError("sigma must be strictly positive")

    @property
    def internal(self) -> np.ndarray:
        """Unconstrained coordinates, last axis ``(mu, log sigma)``."""
        return np.stack([np.asarray(self.mu, float), np.log(self.sigma)], axis=-1)

    @classmethod
    def from_internal(cls, eta) -> "ParamVector":
        eta = np.asarray(eta, dtype=float)
        mu, logsigma = eta[..., 0], eta[..., 1]
        if eta.ndim == 1:
            mu, logsigma = float(mu), float(logsigma)
        return cls(mu, np.exp(logsigma))

    def as_array(self) -> np.ndarray:
        """Natural coordinates stacked on the last axis."""
        return np.stack(np.broadcast_arrays(np.asarray(self.mu, float),
                                            np.asarray(self.sigma, float)), axis=-1)

    def __len__(self):
        return np.size(self.mu)

    def __getitem__(self, idx) -> "ParamVector":
        mu, sigma = np.broadcast_arrays(np.asarray(self.mu, float),
                                        np.asarray(self.sigma, float))
        return ParamVector(mu[idx], sigma[idx])


class CensoredFamily:
    """Generic left-censored location-scale family.

    Parameters
    ----------
    threshold : float
        Censoring point ``c``.  Observations equal to ``c`` are treated as
        censored; observations below ``c`` are outside the support.
    """

    name: ClassVar[str] = "censored"
    k: ClassVar[int] = 2

    def __init__(self, threshold: float = 0.0):
        self.threshold = float(threshold)

    def __repr__(self):
        return f"{type(self).__name__}(threshold={self.threshold!r})"

    def __eq__(self, other):
        return type(self) is type(other) and self.threshold == other.threshold

    def __hash__(self):
        return hash((type(self).__name__, self.threshold))

    # -- standardized distribution of Z, overridden by subclasses -------------

    def _logpdf(self, z):
        raise NotImplementedError

    def _logcdf(self, z):
        raise NotImplementedError

    def _cdf(self, z):
        raise NotImplementedError

    def _ppf(self, p):
        raise NotImplementedError

    def _dlogpdf(self, z):
        """Derivative of the standardized log-density."""
        raise NotImplementedError

    def _crps_std(self, z):
        """CRPS of the uncensored standard distribution at ``z``."""
        raise NotImplementedError

    def _int_cdf_sq(self, a):
        """Integral of ``F(t)**2`` over ``(-inf, a]``."""
        raise NotImplementedError

    def _rvs(self, rng, size):
        raise NotImplementedError

    # -- helpers ---------------------------------------------------------------

    @staticmethod
    def _params(theta: ParamVector):
        mu = np.asarray(theta.mu, dtype=float)
        sigma = np.asarray(theta.sigma, dtype=float)
        # ParamVector validates on construction; re-check cheaply in case the
        # arrays were mutated afterwards.
        if np.any(~(sigma > 0)) or not np.all(np.isfinite(mu)):
            raise InvalidParameterError("sigma must be positive and parameters finite")
        return mu, sigma

    def _response(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(~(y >= self.threshold)):
            raise DomainError(f"response must be >= {self.threshold} and not NaN")
        return y

    def is_censored(self, y):
        return np.asarray(y, dtype=float) <= self.threshold

    # -- public API ------------------------------------------------------------

    def loglik(self, theta: ParamVector, y):
        """Per-observation censored log-likelihood."""
        mu, sigma = self._params(theta)
        out = self._loglik_raw(mu, sigma, self._response(y))
        return out[()] if out.ndim == 0 else out

    def _loglik_raw(self, mu, sigma, y):
        cens = y <= self.threshold
        z = (y - mu) / sigma
        low = (self.threshold - mu) / sigma
        return np.where(cens, self._logcdf(low), self._logpdf(z) - np.log(sigma))

    def score(self, theta: ParamVector, y):
        """Gradient of :meth:`loglik` w.r.t. ``(mu, sigma)``; shape ``(..., 2)``."""
        mu, sigma = self._params(theta)
        y = self._response(y)
        return np.stack(self._score_parts(mu, sigma, y), axis=-1)

    def _score_parts(self, mu, sigma, y):
        cens = y <= self.threshold
        z = (y - mu) / sigma
        low = (self.threshold - mu) / sigma
        g = self._dlogpdf(z)
        # inverse Mills ratio f(low)/F(low), evaluated on the log scale so it
        # stays finite deep in the lower tail
        lam = np.exp(self._logpdf(low) - self._logcdf(low))
        s_mu = np.where(cens, -lam / sigma, -g / sigma)
        s_sigma = np.where(cens, -lam * low / sigma, (-g * z - 1.0) / sigma)
        return s_mu, s_sigma

    def density(self, theta: ParamVector, y):
        """Density of the continuous part (``y > threshold``)."""
        mu, sigma = self._params(theta)
        y = np.asarray(y, dtype=float)
        out = np.where(y > self.threshold, np.exp(self._logpdf((y - mu) / sigma)) / sigma, 0.0)
        return out[()] if out.ndim == 0 else out

    def prob_atom(self, theta: ParamVector):
        """Probability mass of the censoring atom, ``F(threshold)``."""
        mu, sigma = self._params(theta)
        out = np.asarray(self._cdf((self.threshold - mu) / sigma))
        return out[()] if out.ndim == 0 else out

    def cdf(self, theta: ParamVector, y):
        mu, sigma = self._params(theta)
        y = np.asarray(y, dtype=float)
        with np.errstate(invalid="ignore"):
            out = np.where(y < self.threshold, 0.0, self._cdf((y - mu) / sigma))
        return out[()] if out.ndim == 0 else out

    def quantile(self, theta: ParamVector, p):
        """Generalized inverse of :meth:`cdf`; atom probabilities map to the threshold."""
        mu, sigma = self._params(theta)
        p = np.asarray(p, dtype=float)
        if np.any(~((p > 0) & (p < 1))):
            raise DomainError("probabilities must lie in (0, 1)")
        out = np.maximum(self.threshold, mu + sigma * self._ppf(p))
        return out[()] if out.ndim == 0 else out

    def sample(self, theta: ParamVector, rng: np.random.Generator, size=None):
        mu, sigma = self._params(theta)
        if size is None:
            size = np.broadcast(mu, sigma).shape
        out = np.maximum(self.threshold, mu + sigma * self._rvs(rng, size))
        return out[()] if out.ndim == 0 else out

    def crps(self, theta: ParamVector, y):
        """Closed-form CRPS of the censored predictive distribution.

        For ``y >= c`` the integrand vanishes below ``c``, so the score is the
        uncensored CRPS minus the latent mass ``int_{-inf}^c F(t)^2 dt``.
        """
        mu, sigma = self._params(theta)
        y = self._response(y)
        z = (y - mu) / sigma
        low = (self.threshold - mu) / sigma
        out = sigma * (self._crps_std(z) - self._int_cdf_sq(low))
        out = np.maximum(out, 0.0)
        return out[()] if out.ndim == 0 else out


class CensoredNormal(CensoredFamily):
    """Zero-censored Gaussian (Tobit-type) family."""

    name = "censored_normal"

    def _logpdf(self, z):
        return -0.5 * np.square(z) - _LOG_SQRT_2PI

    def _logcdf(self, z):
        return special.log_ndtr(z)

    def _cdf(self, z):
        return special.ndtr(z)

    def _ppf(self, p):
        return special.ndtri(p)

    def _dlogpdf(self, z):
        return -z

    def _crps_std(self, z):
        pdf = np.exp(self._logpdf(z))
        return z * (2.0 * special.ndtr(z) - 1.0) + 2.0 * pdf - _INV_SQRT_PI

    def _int_cdf_sq(self, a):
        cdf = special.ndtr(a)
        pdf = np.exp(self._logpdf(a))
        return a * cdf * cdf + 2.0 * pdf * cdf - special.ndtr(np.sqrt(2.0) * a) * _INV_SQRT_PI

    def _rvs(self, rng, size):
        return rng.standard_normal(size)


class CensoredLogistic(CensoredFamily):
    """Zero-censored logistic family."""

    name = "censored_logistic"

    def _logpdf(self, z):
        az = np.abs(z)
        return -az - 2.0 * np.log1p(np.exp(-az))

    def _logcdf(self, z):
        return -np.logaddexp(0.0, -z)

    def _cdf(self, z):
        return special.expit(z)

    def _ppf(self, p):
        return special.logit(p)

    def _dlogpdf(self, z):
        return -np.tanh(0.5 * z)

    def _crps_std(self, z):
        return z - 2.0 * self._logcdf(z) - 1.0

    def _int_cdf_sq(self, a):
        # F^2 = F - f, so the integral is softplus(a) - F(a)
        return np.logaddexp(0.0, a) - special.expit(a)

    def _rvs(self, rng, size):
        return rng.logistic(size=size)


_FAMILIES = {
    "censored_normal": CensoredNormal,
    "cnorm": CensoredNormal,
    "censored_logistic": CensoredLogistic,
    "clogis": CensoredLogistic,
}


def get_family(name: str | CensoredFamily, threshold: float = 0.0) -> CensoredFamily:
    """Resolve a family by name (instances pass through)."""
    if isinstance(name, CensoredFamily):
        return name
    try:
        return _FAMILIES[name](threshold)
    except KeyError:
        raise ValueError(f"unknown family {name!r}; choose from {sorted(_FAMILIES)}") from None


@dataclass(frozen=True)
class Predictive:
    """Predictive distributions of a family at (possibly many) parameter vectors."""

    family: CensoredFamily
    theta: ParamVector

    @property
    def mu(self):
        return self.theta.mu

    @property
    def sigma(self):
        return self.theta.sigma

    def prob_zero(self):
        """Point mass at the censoring threshold."""
        return self.family.prob_atom(self.theta)

    def cdf(self, y):
        return self.family.cdf(self.theta, y)

    def quantile(self, p):
        return self.family.quantile(self.theta, p)

    def crps(self, y):
        return self.family.crps(self.theta, y)

    def loglik(self, y):
        return self.family.loglik(self.theta, y)

    def sample(self, rng, size=None):
        return self.family.sample(self.theta, rng, size)
