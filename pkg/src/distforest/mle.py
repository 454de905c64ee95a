"""Weighted maximum-likelihood estimation for censored families.

The optimizer is a damped Newton method in unconstrained coordinates
``(mu, log sigma)``: analytic gradient from the family score, a central
finite-difference Hessian, Armijo backtracking and a Levenberg-style shift
whenever the Hessian is not negative definite.  It is written for a batch
of independent problems at once (one weight vector per row), which is what
forest prediction needs; single fits are batches of size one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConvergenceError, DegenerateSampleError, DomainError
from .families import CensoredFamily, ParamVector

__all__ = [
    "WeightedSample",
    "FitResult",
    "newton_ascent",
    "fit",
    "fit_from_weights",
    "fit_batch",
    "initial_params",
    "is_degenerate",
]

TOL = 1e-8
MAXITER = 100
# iterate past the reported tolerance so fits from different starting points
# agree to ~1e-12 (Newton is quadratic, this rarely costs an extra step)
POLISH = 1e-3


@dataclass(frozen=True)
class WeightedSample:
    y: np.ndarray
    w: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        w = np.ones_like(y) if self.w is None else np.asarray(self.w, dtype=float).ravel()
        if y.shape != w.shape:
            raise ValueError("y and w must have equal length")
        if np.any(~np.isfinite(y)):
            raise DomainError("responses must be finite")
        if np.any(~(w >= 0)) or not w.sum() > 0:
            raise ValueError("weights must be non-negative with positive sum")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)


@dataclass
class FitResult:
    theta: ParamVector
    loglik_value: float
    iterations: int
    converged: bool
    gradient_norm: float


def newton_ascent(objective, gradient, x0, tol, maxiter=MAXITER, fd_step=1e-5, max_step=10.0):
    """Maximize a batch of smooth objectives.

    Parameters
    ----------
    objective : callable
        ``objective(x, rows) -> (len(rows),)`` values for the parameter rows
        ``x`` of the problems indexed by ``rows``.
    gradient : callable
        Same signature, returning ``(len(rows), p)``.
    x0 : ndarray, shape (Q, p)
    tol : float or ndarray, shape (Q,)
        Convergence threshold on the sup-norm of the gradient.

    Returns
    -------
    x, f, g, iterations, converged
    """
    x = np.array(x0, dtype=float, copy=True)
    if x.ndim == 1:
        x = x[None, :]
    Q, p = x.shape
    tol = np.broadcast_to(np.asarray(tol, dtype=float), (Q,))
    allrows = np.arange(Q)
    f = objective(x, allrows)
    g = gradient(x, allrows)
    iterations = np.zeros(Q, dtype=int)
    converged = np.max(np.abs(g), axis=1) <= tol
    stalled = np.zeros(Q, dtype=bool)
    eye = np.eye(p)

    for _ in range(maxiter):
        act = np.flatnonzero(~converged & ~stalled)
        if act.size == 0:
            break
        xa, fa, ga = x[act], f[act], g[act]

        # central-difference Hessian of the analytic gradient
        H = np.empty((act.size, p, p))
        h = fd_step * np.maximum(1.0, np.abs(xa))
        for j in range(p):
            step = np.zeros_like(xa)
            step[:, j] = h[:, j]
            H[:, :, j] = (gradient(xa + step, act) - gradient(xa - step, act)) / (2.0 * h[:, j:j + 1])
        H = 0.5 * (H + np.swapaxes(H, 1, 2))

        # ascent direction from -H, shifted to positive definiteness if needed
        negH = -H
        lam = np.linalg.eigvalsh(negH)
        lam_min, lam_max = lam[:, 0], np.maximum(np.abs(lam[:, -1]), 1e-300)
        shift = np.where(lam_min > 1e-10 * lam_max, 0.0, -lam_min + 1e-3 * lam_max + 1e-12)
        A = negH + shift[:, None, None] * eye
        d = np.linalg.solve(A, ga[:, :, None])[:, :, 0]
        big = np.max(np.abs(d), axis=1)
        d *= np.minimum(1.0, max_step / np.maximum(big, 1e-300))[:, None]
        slope = np.sum(ga * d, axis=1)

        t = np.ones(act.size)
        pending = np.ones(act.size, dtype=bool)
        xn, fn = xa.copy(), fa.copy()
        gnorm = np.max(np.abs(ga), axis=1)
        for _ls in range(50):
            idx = np.flatnonzero(pending)
            if idx.size == 0:
                break
            cand = xa[idx] + t[idx, None] * d[idx]
            fc = objective(cand, act[idx])
            ok = np.isfinite(fc) & (fc >= fa[idx] + 1e-4 * t[idx] * slope[idx])
            # near the optimum the Armijo test drowns in rounding noise; accept a
            # full step that does not lose more than rounding and shrinks the gradient
            near = ~ok & np.isfinite(fc) & (t[idx] == 1.0) & \
                (fc >= fa[idx] - 1e-13 * (1.0 + np.abs(fa[idx])))
            if np.any(near):
                gc = gradient(cand[near], act[idx[near]])
                shrink = np.max(np.abs(gc), axis=1) < gnorm[idx[near]]
                ok[np.flatnonzero(near)[shrink]] = True
            acc = idx[ok]
            xn[acc] = cand[ok]
            fn[acc] = fc[ok]
            pending[acc] = False
            t[idx[~ok]] *= 0.5

        moved = ~pending
        stalled[act[pending]] = True
        upd = act[moved]
        x[upd] = xn[moved]
        f[upd] = fn[moved]
        if upd.size:
            g[upd] = gradient(x[upd], upd)
        iterations[act] += 1
        converged = np.max(np.abs(g), axis=1) <= tol

    return x, f, g, iterations, converged


def is_degenerate(family: CensoredFamily, y, W) -> np.ndarray:
    """Flag weight rows whose likelihood has no interior maximum.

    That happens when no positive weight sits on an uncensored response, or
    when there is no censored mass and all weighted uncensored responses are
    identical (the scale collapses to zero).
    """
    y = np.asarray(y, dtype=float)
    W = np.atleast_2d(W)
    cens = family.is_censored(y)
    pos = W > 0
    unc_mass = W[:, ~cens].sum(axis=1)
    cens_mass = W[:, cens].sum(axis=1)
    live = pos & ~cens
    spread = (np.max(np.where(live, y, -np.inf), axis=1, initial=-np.inf)
              - np.min(np.where(live, y, np.inf), axis=1, initial=np.inf))
    return (unc_mass <= 0) | ((cens_mass <= 0) & ~(spread > 0))


def initial_params(y, W) -> np.ndarray:
    """Moment start ``(mu0, log sigma0)`` per weight row."""
    W = np.atleast_2d(W)
    sw = W.sum(axis=1)
    m = W @ y / sw
    var = (W * np.square(y[None, :] - m[:, None])).sum(axis=1) / sw
    s = np.maximum.reduce([np.sqrt(var), 0.1 * m + 1e-6, np.full_like(m, 1e-3)])
    return np.column_stack([m, np.log(s)])


def _problem(family: CensoredFamily, y, W):
    y = np.asarray(y, dtype=float)

    def objective(eta, rows):
        ll = family._loglik_raw(eta[:, 0:1], np.exp(eta[:, 1:2]), y[None, :])
        return np.sum(W[rows] * ll, axis=1)

    def gradient(eta, rows):
        mu, sigma = eta[:, 0:1], np.exp(eta[:, 1:2])
        s_mu, s_sigma = family._score_parts(mu, sigma, y[None, :])
        Wr = W[rows]
        # chain rule for the log-scale coordinate
        return np.column_stack([np.sum(Wr * s_mu, axis=1), np.sum(Wr * s_sigma, axis=1) * sigma[:, 0]])

    return objective, gradient


def fit_batch(family: CensoredFamily, y, W, init=None, tol=TOL, maxiter=MAXITER,
              full_output=False):
    """Fit one parameter vector per row of the weight matrix ``W``.

    Returns a :class:`ParamVector` of arrays (or, with ``full_output``, the
    raw optimizer output as well).  Raises :class:`DegenerateSampleError`
    listing the degenerate rows, and :class:`ConvergenceError` if any row
    fails to converge within ``maxiter`` iterations.
    """
    y = family._response(np.asarray(y, dtype=float).ravel())
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[1] != y.size:
        raise ValueError("weight rows must match the sample size")
    bad = is_degenerate(family, y, W)
    if np.any(bad):
        raise DegenerateSampleError(
            "weighted sample has no interior likelihood maximum "
            "(all mass censored or no spread)", rows=np.flatnonzero(bad))
    sw = W.sum(axis=1)
    x0 = initial_params(y, W) if init is None else np.atleast_2d(
        init.internal if isinstance(init, ParamVector) else init)
    x0 = np.broadcast_to(x0, (W.shape[0], 2))
    objective, gradient = _problem(family, y, W)
    x, f, g, its, _ = newton_ascent(objective, gradient, x0, POLISH * tol * sw, maxiter=maxiter)
    theta = ParamVector(x[:, 0], np.exp(x[:, 1]))
    conv = np.max(np.abs(g), axis=1) <= tol * sw
    if not np.all(conv):
        # rows that stalled in the line search at a numerically flat optimum
        # are accepted when the gradient is within rounding of the target
        loose = np.max(np.abs(g), axis=1) <= 1e3 * tol * sw
        if not np.all(loose):
            raise ConvergenceError(
                f"Newton iterations did not converge for {np.sum(~loose)} problem(s)",
                best=theta)
    if full_output:
        return theta, f, g, its, conv
    return theta


def fit(family: CensoredFamily, sample: WeightedSample, init: ParamVector | None = None,
        tol=TOL, maxiter=MAXITER) -> FitResult:
    """Weighted MLE of ``(mu, sigma)`` for a single weighted sample."""
    keep = sample.w > 0
    y, w = sample.y[keep], sample.w[keep]
    theta, f, g, its, conv = fit_batch(family, y, w[None, :], init=init, tol=tol,
                                       maxiter=maxiter, full_output=True)
    return FitResult(
        theta=ParamVector(float(theta.mu[0]), float(theta.sigma[0])),
        loglik_value=float(f[0]),
        iterations=int(its[0]),
        converged=bool(conv[0]),
        gradient_norm=float(np.max(np.abs(g[0]))),
    )


def fit_from_weights(family: CensoredFamily, y, weights, init=None) -> ParamVector:
    """Weighted MLE over the full sample with a weight vector (zeros allowed)."""
    return fit(family, WeightedSample(y, weights), init=init).theta
