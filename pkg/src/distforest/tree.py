"""Distributional trees grown by score-based permutation tests.

In every node the family is fitted by maximum likelihood, the per-row
scores are tested for independence from each candidate covariate with a
conditional-inference linear statistic, the most significant variable
(after Bonferroni adjustment) is split where the two child groups differ
most in their score sums, and the procedure recurses.

Permutation moments
-------------------
For a transformation ``g_i`` of the covariate (the value itself for numeric
columns, a level indicator vector for categorical columns), scores ``h_i``
and case weights ``w_i`` with total ``n``, the linear statistic
``t = vec(sum_i w_i g_i h_i^T)`` (row-major vec) has, under permutation,

    E[t]   = vec(G h_bar^T)                     with G = sum_i w_i g_i
    Cov[t] = n/(n-1) (sum_i w_i g_i g_i^T) kron V - 1/(n-1) (G G^T) kron V

where ``h_bar`` and ``V`` are the weighted mean and (1/n) covariance of
the scores.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import mle
from .data import CATEGORICAL, NUMERIC, CovariateColumn, Dataset
from .exceptions import (
    DegenerateSampleError,
    NoAdmissibleSplitError,
    SchemaError,
)
from .families import CensoredFamily, ParamVector

__all__ = [
    "AssociationTest",
    "SplitRecord",
    "Node",
    "TreeConfig",
    "DistTree",
    "permutation_moments",
    "test_association",
    "select_variable",
    "select_split",
    "grow",
    "tree_weights",
]

EIG_TOL = 1e-10
MAX_EXHAUSTIVE_LEVELS = 10


@dataclass
class AssociationTest:
    statistic: float
    p_value: float
    df: int
    linear_statistic: np.ndarray
    expectation: np.ndarray
    covariance: np.ndarray
    log_p_value: float = 0.0

    @property
    def degenerate(self) -> bool:
        return self.df == 0


@dataclass
class SplitRecord:
    variable: int
    kind: str
    threshold: float | None = None
    left_levels: tuple = ()
    missing_left: bool = True
    statistic: float = float("nan")
    p_value: float = float("nan")
    seen_levels: tuple | None = None

    def goes_left(self, values: np.ndarray) -> np.ndarray:
        """Routing for a covariate column; missing values follow the majority."""
        miss = np.isnan(values)
        if self.kind == NUMERIC:
            with np.errstate(invalid="ignore"):
                left = values <= self.threshold
        else:
            left = np.isin(values, self.left_levels)
            if self.seen_levels is not None:
                miss = miss | ~np.isin(values, self.seen_levels)
        return np.where(miss, self.missing_left, left)


@dataclass
class Node:
    id: int
    depth: int
    theta: ParamVector
    n: float
    split: SplitRecord | None = None
    left: int | None = None
    right: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.split is None


@dataclass(frozen=True)
class TreeConfig:
    """Stopping and splitting controls.

    ``mtry=None`` tests every covariate in every node.  ``statistic`` is
    ``"quad"`` (quadratic form, chi-squared p-values) or ``"max"`` (largest
    absolute standardized entry, normal p-values).  ``split_objective``
    selects the split point maximizing the standardized two-sample score
    statistic (``"max"``) or, read literally, minimizing it (``"min"``).
    """

    minsplit: int = 50
    minbucket: int = 20
    alpha: float = 0.05
    mtry: int | None = None
    statistic: str = "quad"
    split_objective: str = "max"
    max_candidates: int = 50
    max_depth: int | None = None

    def __post_init__(self):
        if self.minbucket < 1 or self.minsplit < 2 * self.minbucket:
            raise ValueError("need minbucket >= 1 and minsplit >= 2 * minbucket")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.statistic not in ("quad", "max"):
            raise ValueError("statistic must be 'quad' or 'max'")
        if self.split_objective not in ("max", "min"):
            raise ValueError("split_objective must be 'max' or 'min'")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be positive")


# -- permutation test ---------------------------------------------------------

def _pinv_sym(S, ref=0.0):
    """Moore-Penrose inverse and rank of a symmetric PSD matrix.

    Eigenvalues below ``EIG_TOL`` times the largest eigenvalue (or times
    ``ref``, a magnitude guarding against pure rounding noise) count as zero.
    """
    lam, U = np.linalg.eigh(S)
    top = max(lam.max(initial=0.0), ref)
    keep = lam > EIG_TOL * top if top > 0 else np.zeros_like(lam, dtype=bool)
    inv = (U[:, keep] / lam[keep]) @ U[:, keep].T
    return inv, int(keep.sum())


def _score_moments(h, w):
    n = w.sum()
    hbar = w @ h / n
    hc = h - hbar
    V = (hc * w[:, None]).T @ hc / n
    return n, hbar, V


def permutation_moments(g, h, w=None):
    """Linear statistic and its conditional expectation/covariance.

    Parameters
    ----------
    g : (n, p) transformed covariate
    h : (n, k) scores
    w : (n,) case weights (default ones)

    Returns
    -------
    t, mu, Sigma : flattened ``p*k`` vectors and ``(p*k, p*k)`` matrix
    """
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    w = np.ones(g.shape[0]) if w is None else np.asarray(w, dtype=float)
    n, hbar, V = _score_moments(h, w)
    gw = g * w[:, None]
    t = (gw.T @ h).ravel()
    G = gw.sum(axis=0)
    mu = np.outer(G, hbar).ravel()
    Sigma = (n / (n - 1.0)) * np.kron(gw.T @ g, V) - (1.0 / (n - 1.0)) * np.kron(np.outer(G, G), V)
    return t, mu, Sigma


def _transform(column: CovariateColumn, values):
    if column.kind == NUMERIC:
        return values[:, None]
    codes = values.astype(int)
    present = np.unique(codes)
    return (codes[:, None] == present[None, :]).astype(float)


def _maxtype_pvalue(c, corr):
    d = corr.shape[0]
    if d == 1:
        return float(min(1.0, 2.0 * stats.norm.sf(c)))
    try:
        mvn = stats.multivariate_normal(np.zeros(d), corr, allow_singular=True, seed=0)
        prob = mvn.cdf(np.full(d, c), lower_limit=np.full(d, -c))
        return float(np.clip(1.0 - prob, 0.0, 1.0))
    except (ValueError, np.linalg.LinAlgError):
        return float(min(1.0, d * 2.0 * stats.norm.sf(c)))


def _degenerate_test(t, mu, Sigma):
    return AssociationTest(0.0, 1.0, 0, t, mu, Sigma, 0.0)


def test_association(scores, column: CovariateColumn, weights=None, statistic="quad") -> AssociationTest:
    """Permutation test of independence between ``scores`` and ``column``.

    Rows with a missing covariate value are dropped before any sum is formed.
    Constant columns or constant scores give a degenerate result with
    ``p_value = 1`` and ``df = 0``.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 1:
        scores = scores[:, None]
    values = np.asarray(column.values, dtype=float)
    w = np.ones(values.size) if weights is None else np.asarray(weights, dtype=float)
    keep = ~np.isnan(values) & (w > 0)
    if keep.sum() < 2:
        k = scores.shape[1]
        return _degenerate_test(np.zeros(k), np.zeros(k), np.zeros((k, k)))
    g = _transform(column, values[keep])
    t, mu, Sigma = permutation_moments(g, scores[keep], w[keep])
    d = t - mu
    wk = w[keep]
    # scale of the uncentered covariance term; a constant column cancels to noise
    ref = (wk @ np.square(g)).max() * np.max(np.var(scores[keep], axis=0))
    if statistic == "quad":
        inv, rank = _pinv_sym(Sigma, ref)
        if rank == 0:
            return _degenerate_test(t, mu, Sigma)
        c = max(float(d @ inv @ d), 0.0)
        logp = float(stats.chi2.logsf(c, rank))
        return AssociationTest(c, float(np.exp(logp)), rank, t, mu, Sigma, logp)
    var = np.diag(Sigma)
    top = max(var.max(initial=0.0), ref)
    ok = var > EIG_TOL * top if top > 0 else np.zeros_like(var, dtype=bool)
    if not ok.any():
        return _degenerate_test(t, mu, Sigma)
    sd = np.sqrt(var[ok])
    c = float(np.max(np.abs(d[ok]) / sd))
    corr = Sigma[np.ix_(ok, ok)] / np.outer(sd, sd)
    p = _maxtype_pvalue(c, corr)
    _, rank = _pinv_sym(Sigma, ref)
    logp = float(np.log(p)) if p > 0 else float(stats.norm.logsf(c) + np.log(2 * ok.sum()))
    return AssociationTest(c, p, rank, t, mu, Sigma, logp)


def _numeric_quad_tests(scores, Z, w):
    """Quadratic-form tests of several complete numeric columns at once.

    Same statistic as :func:`test_association`; with a scalar transformation
    the covariance factorizes as ``s_z * V``, so one eigendecomposition of
    the score covariance serves every column.
    """
    keep = w > 0
    h, Z, w = scores[keep], Z[keep], w[keep]
    n, hbar, V = _score_moments(h, w)
    lam, U = np.linalg.eigh(V)
    Gz = w @ Z
    Gzz = w @ np.square(Z)
    sz = (n / (n - 1.0)) * Gzz - np.square(Gz) / (n - 1.0)
    t = (Z * w[:, None]).T @ h                      # (p, k)
    d = t - Gz[:, None] * hbar[None, :]
    ref = Gzz * np.max(np.var(h, axis=0))
    top = np.maximum(sz * lam.max(initial=0.0), ref)
    keep_eig = (sz[:, None] * lam[None, :]) > EIG_TOL * top[:, None]
    rank = keep_eig.sum(axis=1)
    proj = d @ U                                     # (p, k) in the eigenbasis
    with np.errstate(divide="ignore", invalid="ignore"):
        contrib = np.where(keep_eig, np.square(proj) / (sz[:, None] * lam[None, :]), 0.0)
    c = np.maximum(contrib.sum(axis=1), 0.0)
    logp = np.where(rank > 0, stats.chi2.logsf(c, np.maximum(rank, 1)), 0.0)
    out = []
    for j in range(Z.shape[1]):
        if rank[j] == 0:
            out.append(AssociationTest(0.0, 1.0, 0, t[j], Gz[j] * hbar, sz[j] * V, 0.0))
        else:
            out.append(AssociationTest(float(c[j]), float(np.exp(logp[j])), int(rank[j]),
                                       t[j], Gz[j] * hbar, sz[j] * V, float(logp[j])))
    return out


def select_variable(tests, alpha: float) -> int | None:
    """Index of the variable to split on, or ``None`` to stop.

    p-values are Bonferroni adjusted by the number of tests.  The winner is
    the smallest adjusted p-value; ties (including ties produced by clipping
    the adjusted value at 1) are broken by the unadjusted p-value on the log
    scale, then by the lowest index.  With ``alpha >= 1`` a variable is
    returned unless every test is degenerate.
    """
    order = ranked_variables(tests, alpha)
    return order[0] if order else None


def ranked_variables(tests, alpha: float) -> list:
    """Significant, non-degenerate variables, most significant first."""
    m = len(tests)
    if m == 0:
        return []
    logp = np.array([t.log_p_value for t in tests])
    live = np.array([not t.degenerate for t in tests])
    adjusted = np.minimum(1.0, m * np.exp(logp))
    if alpha >= 1:
        significant = live
    else:
        significant = live & (adjusted < alpha)
    idx = np.flatnonzero(significant)
    # lexsort keys: last is primary
    order = idx[np.lexsort((idx, logp[idx]))]
    return [int(j) for j in order]


# -- split search ---------------------------------------------------------------

def _split_statistics(S_left, n_left, n, hbar, Vinv, V, statistic):
    """Standardized statistic of the left-group score sums for many candidates."""
    mu = n_left[:, None] * hbar[None, :]
    scale = n_left * (n - n_left) / (n - 1.0)
    d = S_left - mu
    if statistic == "quad":
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.einsum("ij,jk,ik->i", d, Vinv, d) / scale
    else:
        sd = np.sqrt(np.maximum(np.diag(V), 0.0))
        live = sd > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.abs(d[:, live]) / (np.sqrt(scale)[:, None] * sd[None, live])
        c = z.max(axis=1) if live.any() else np.zeros(len(n_left))
    return np.where(scale > 0, c, np.nan)


def _child_feasible(y_sorted, cens_sorted, w_sorted):
    """Per boundary position (left = first j+1 rows): both children admit an MLE."""
    live = (w_sorted > 0) & ~cens_sorted
    yl = np.where(live, y_sorted, np.inf)
    yh = np.where(live, y_sorted, -np.inf)
    lmin, lmax = np.minimum.accumulate(yl), np.maximum.accumulate(yh)
    rmin = np.minimum.accumulate(yl[::-1])[::-1]
    rmax = np.maximum.accumulate(yh[::-1])[::-1]
    cm = np.cumsum(np.where(cens_sorted, w_sorted, 0.0))
    ctot = cm[-1]
    lcens, rcens = cm[:-1], ctot - cm[:-1]
    left_ok = (lmin[:-1] < np.inf) & ((lcens > 0) | (lmax[:-1] > lmin[:-1]))
    right_ok = (rmin[1:] < np.inf) & ((rcens > 0) | (rmax[1:] > rmin[1:]))
    return left_ok & right_ok


def _pick(c, objective):
    ok = np.isfinite(c)
    if not ok.any():
        return None
    cc = np.where(ok, c, -np.inf if objective == "max" else np.inf)
    return int(np.argmax(cc) if objective == "max" else np.argmin(cc))


def select_split(scores, column: CovariateColumn, minbucket: int, y=None, family=None,
                 weights=None, statistic="quad", split_objective="max",
                 max_candidates=50, variable: int = 0) -> SplitRecord:
    """Best binary split of ``column`` for the given node scores.

    Each candidate partition is scored by the standardized statistic of the
    score sum in the left group (a two-level indicator transformation of the
    covariate), using the same permutation moments as the variable test.

    When ``y`` and ``family`` are given, candidates whose children would
    have no interior likelihood maximum are excluded as well.
    """
    scores = np.asarray(scores, dtype=float)
    values = np.asarray(column.values, dtype=float)
    w = np.ones(values.size) if weights is None else np.asarray(weights, dtype=float)
    miss = np.isnan(values)
    keep = ~miss & (w > 0)
    w_missing = w[miss].sum()
    h, z, wk = scores[keep], values[keep], w[keep]
    if wk.size < 2:
        raise NoAdmissibleSplitError("fewer than two non-missing observations")
    n, hbar, V = _score_moments(h, wk)
    Vinv, _ = _pinv_sym(V)
    cens = family.is_censored(y[keep]) if (y is not None and family is not None) else None

    if column.kind == NUMERIC:
        order = np.argsort(z, kind="stable")
        zs, hs, ws = z[order], h[order], wk[order]
        bounds = np.flatnonzero(zs[1:] > zs[:-1])  # left = rows 0..j
        if bounds.size == 0:
            raise NoAdmissibleSplitError("constant covariate")
        cw = np.cumsum(ws)
        if bounds.size > max_candidates:
            targets = n * np.arange(1, max_candidates + 1) / (max_candidates + 1)
            pos = np.searchsorted(cw[bounds], targets)
            pos = np.unique(np.clip(pos, 0, bounds.size - 1))
            bounds = bounds[pos]
        n_left = cw[bounds]
        S_left = np.cumsum(hs * ws[:, None], axis=0)[bounds]
        feasible = np.ones(bounds.size, dtype=bool)
        if cens is not None:
            feasible = _child_feasible(y[keep][order], cens[order], ws)[bounds]
        thresholds = 0.5 * (zs[bounds] + zs[bounds + 1])
        groups = None
    else:
        codes = z.astype(int)
        present = np.unique(codes)
        L = present.size
        if L < 2:
            raise NoAdmissibleSplitError("fewer than two observed levels")
        onehot = codes[:, None] == present[None, :]
        n_lev = wk @ onehot
        S_lev = (onehot * wk[:, None]).T @ h
        if L <= MAX_EXHAUSTIVE_LEVELS:
            # every partition with the last level on the right
            masks = np.array([[(b >> i) & 1 for i in range(L)] for b in range(1, 2 ** (L - 1))],
                             dtype=float)
        else:
            ranking = np.argsort(S_lev[:, 0] / np.maximum(n_lev, 1e-300), kind="stable")
            masks = np.zeros((L - 1, L))
            for r in range(L - 1):
                masks[r, ranking[: r + 1]] = 1.0
        n_left = masks @ n_lev
        S_left = masks @ S_lev
        feasible = np.ones(len(masks), dtype=bool)
        if cens is not None:
            yk = y[keep]
            for r, mask in enumerate(masks):
                sel = mask[np.searchsorted(present, codes)].astype(bool)
                W2 = np.vstack([np.where(sel, wk, 0.0), np.where(sel, 0.0, wk)])
                feasible[r] = not np.any(mle.is_degenerate(family, yk, W2))
        thresholds = None
        groups = [tuple(int(v) for v in present[mask.astype(bool)]) for mask in masks]

    n_right = n - n_left
    missing_left = n_left >= n_right
    left_total = n_left + np.where(missing_left, w_missing, 0.0)
    right_total = n_right + np.where(missing_left, 0.0, w_missing)
    admissible = feasible & (left_total >= minbucket) & (right_total >= minbucket)
    if not admissible.any():
        raise NoAdmissibleSplitError(f"no split leaves {minbucket} observations per child")
    c = _split_statistics(S_left, n_left, n, hbar, Vinv, V, statistic)
    c = np.where(admissible, c, np.nan)
    best = _pick(c, split_objective)
    if best is None:
        raise NoAdmissibleSplitError("no finite split statistic")
    if column.kind == NUMERIC:
        return SplitRecord(variable, NUMERIC, threshold=float(thresholds[best]),
                           missing_left=bool(missing_left[best]), statistic=float(c[best]))
    return SplitRecord(variable, CATEGORICAL, left_levels=groups[best],
                       missing_left=bool(missing_left[best]), statistic=float(c[best]),
                       seen_levels=tuple(int(v) for v in present))


# -- tree -------------------------------------------------------------------------

class DistTree:
    """A fitted distributional tree.

    ``nodes[0]`` is the root; every node keeps the parameters fitted on its
    rows, leaves use them for prediction.  ``train_leaf`` holds the leaf id
    of every training row, so leaf membership is available without the
    training covariates.
    """

    def __init__(self, nodes, family: CensoredFamily, config: TreeConfig, schema: dict,
                 train_leaf, train_y, train_w):
        self.nodes = nodes
        self.family = family
        self.config = config
        self.schema = schema
        self.train_leaf = np.asarray(train_leaf, dtype=int)
        self.train_y = np.asarray(train_y, dtype=float)
        self.train_w = np.asarray(train_w, dtype=float)

    @property
    def n_train(self) -> int:
        return self.train_leaf.size

    @property
    def leaves(self) -> list:
        return [nd.id for nd in self.nodes if nd.is_leaf]

    @property
    def depth(self) -> int:
        return max(nd.depth for nd in self.nodes)

    def leaf_members(self, leaf: int) -> np.ndarray:
        return np.flatnonzero(self.train_leaf == leaf)

    def apply(self, X) -> np.ndarray:
        """Leaf id reached by every row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.schema["names"]):
            raise SchemaError(f"expected {len(self.schema['names'])} covariates, got {X.shape[1]}")
        out = np.empty(X.shape[0], dtype=int)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            nid, rows = stack.pop()
            node = self.nodes[nid]
            if node.is_leaf:
                out[rows] = nid
                continue
            left = node.split.goes_left(X[rows, node.split.variable])
            stack.append((node.right, rows[~left]))
            stack.append((node.left, rows[left]))
        return out

    def predict(self, X) -> ParamVector:
        leaf = self.apply(X)
        mu = np.array([self.nodes[i].theta.mu for i in leaf], dtype=float)
        sigma = np.array([self.nodes[i].theta.sigma for i in leaf], dtype=float)
        return ParamVector(mu, sigma)

    def weights(self, X) -> np.ndarray:
        """Co-membership indicators with the training rows, one row per query."""
        leaf = self.apply(X)
        return (leaf[:, None] == self.train_leaf[None, :]).astype(float)


def tree_weights(tree: DistTree, z) -> np.ndarray:
    """Indicator of training rows sharing the leaf of the single query row ``z``."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise SchemaError("tree_weights expects a single covariate row")
    return tree.weights(z[None, :])[0]


def _fit_node(family, y, w, init=None):
    return mle.fit(family, mle.WeightedSample(y, w), init=init).theta


def grow(dataset: Dataset, family: CensoredFamily, config: TreeConfig | None = None,
         rng: np.random.Generator | int | None = None) -> DistTree:
    """Grow a distributional tree on ``dataset``.

    Nodes are processed depth first (left child before right child); the
    random covariate subset of size ``mtry`` is drawn per node from ``rng``
    in that order, so a given generator state fully determines the tree.
    """
    config = config or TreeConfig()
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    y, X, w = dataset.y, dataset.X, dataset.weights
    m = dataset.m
    mtry = m if config.mtry is None else min(config.mtry, m)
    columns = [dataset.column(j) for j in range(m)]

    root_rows = np.flatnonzero(np.ones(dataset.n, dtype=bool))
    nodes = [Node(0, 0, _fit_node(family, y, w), float(w.sum()))]
    train_leaf = np.zeros(dataset.n, dtype=int)
    stack = [(0, root_rows)]
    while stack:
        nid, rows = stack.pop()
        node = nodes[nid]
        split = _find_split(node, rows, y, w, columns, family, config, mtry, m, rng)
        if split is None:
            train_leaf[rows] = nid
            continue
        left = split.goes_left(X[rows, split.variable])
        children = []
        for part in (rows[left], rows[~left]):
            try:
                theta = _fit_node(family, y[part], w[part], init=node.theta)
            except DegenerateSampleError:
                children = None
                break
            children.append((part, theta))
        if children is None:
            train_leaf[rows] = nid
            continue
        node.split = split
        ids = []
        for part, theta in children:
            cid = len(nodes)
            nodes.append(Node(cid, node.depth + 1, theta, float(w[part].sum())))
            ids.append(cid)
        node.left, node.right = ids
        stack.append((ids[1], children[1][0]))
        stack.append((ids[0], children[0][0]))
    return DistTree(nodes, family, config, dataset.schema_signature(), train_leaf, y, w)


def _find_split(node, rows, y, w, columns, family, config, mtry, m, rng):
    if node.n < config.minsplit or m == 0:
        return None
    if config.max_depth is not None and node.depth >= config.max_depth:
        return None
    variables = np.arange(m) if mtry >= m else np.sort(rng.choice(m, size=mtry, replace=False))
    yr, wr = y[rows], w[rows]
    scores = family.score(node.theta, yr)
    tests = [None] * len(variables)
    fast = []
    for pos, j in enumerate(variables):
        col = columns[j]
        values = col.values[rows]
        if config.statistic == "quad" and col.kind == NUMERIC and not np.isnan(values).any():
            fast.append(pos)
            continue
        sub = CovariateColumn(col.kind, values, col.n_levels)
        tests[pos] = test_association(scores, sub, wr, config.statistic)
    if fast:
        Z = np.column_stack([columns[variables[pos]].values[rows] for pos in fast])
        for pos, test in zip(fast, _numeric_quad_tests(scores, Z, wr)):
            tests[pos] = test
    for pos in ranked_variables(tests, config.alpha):
        j = int(variables[pos])
        col = columns[j]
        sub = CovariateColumn(col.kind, col.values[rows], col.n_levels)
        try:
            rec = select_split(scores, sub, config.minbucket, y=yr, family=family, weights=wr,
                               statistic=config.statistic, split_objective=config.split_objective,
                               max_candidates=config.max_candidates, variable=j)
        except NoAdmissibleSplitError:
            continue
        rec.p_value = tests[pos].p_value
        return rec
    return None
