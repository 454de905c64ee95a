"""Datasets: typed covariates, delimited-text I/O, power transform, synthetic scenarios.

Covariates are held in a float matrix; categorical columns store integer
level codes (``0 .. H-1``) and missing values are NaN in either kind.

File format
-----------
UTF-8 delimited text with a header row.  The delimiter defaults to ``,``
and the missing-value token to ``NA``.  Numeric values are written with
``repr`` so that ``load(save(ds))`` reproduces every float bit-exactly.

Scenario files
--------------
Synthetic scenarios can be described in a small key-value file::

    # comment
    kind = step-location
    n = 400
    m_noise = 5
    seed = 1
    jump = 3.0

One ``key = value`` pair per line; blank lines and ``#`` comments are
ignored; values are parsed as int, then float, else kept as strings.
Keys other than ``kind``, ``n``, ``m_noise`` and ``seed`` are passed to
the generator as parameters.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import special

from .exceptions import DataError, SchemaError
from .families import ParamVector

__all__ = [
    "NUMERIC",
    "CATEGORICAL",
    "CovariateColumn",
    "Dataset",
    "Schema",
    "power_transform",
    "load",
    "save",
    "SyntheticScenario",
    "read_scenario",
    "generate",
    "DEFAULT_EXPONENT",
]

NUMERIC = "numeric"
CATEGORICAL = "categorical"
DEFAULT_EXPONENT = 1 / 1.6


@dataclass(frozen=True)
class CovariateColumn:
    """One partitioning variable: numeric values or categorical codes."""

    kind: str
    values: np.ndarray
    n_levels: int = 0

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Response vector plus typed covariate matrix.

    Parameters
    ----------
    y : (n,) array
    X : (n, m) float array, NaN marks missing values
    names, kinds : per-column name and kind (``"numeric"``/``"categorical"``)
    levels : per-column tuple of category labels (``None`` for numeric)
    weights : (n,) non-negative case weights, default ones
    groups : optional (n,) group key used for grouped cross-validation
    """

    y: np.ndarray
    X: np.ndarray
    names: tuple = ()
    kinds: tuple = ()
    levels: tuple = ()
    weights: np.ndarray | None = None
    groups: np.ndarray | None = None
    response: str = "y"

    def __post_init__(self):
        y = np.array(self.y, dtype=float).ravel()
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != y.size:
            raise SchemaError("X and y must have the same number of rows")
        m = X.shape[1]
        names = tuple(self.names) or tuple(f"x{j + 1}" for j in range(m))
        kinds = tuple(self.kinds) or (NUMERIC,) * m
        levels = tuple(self.levels) or (None,) * m
        if not (len(names) == len(kinds) == len(levels) == m):
            raise SchemaError("names/kinds/levels must have one entry per column")
        if self.response in names:
            raise SchemaError("response column must be distinct from the covariates")
        w = np.ones_like(y) if self.weights is None else np.asarray(self.weights, dtype=float).ravel()
        if w.shape != y.shape or np.any(~(w >= 0)):
            raise SchemaError("weights must be non-negative, one per row")
        for j, kind in enumerate(kinds):
            if kind == CATEGORICAL:
                if levels[j] is None:
                    raise SchemaError(f"categorical column {names[j]!r} needs its level labels")
                codes = X[:, j][~np.isnan(X[:, j])]
                if codes.size and (np.any(codes != np.round(codes)) or codes.min() < 0
                                   or codes.max() >= len(levels[j])):
                    raise SchemaError(f"invalid level codes in column {names[j]!r}")
            elif kind != NUMERIC:
                raise SchemaError(f"unknown column kind {kind!r}")
        groups = None if self.groups is None else np.asarray(self.groups)
        y.flags.writeable = False
        X.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "levels", tuple(None if lv is None else tuple(lv) for lv in levels))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "groups", groups)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def m(self) -> int:
        return self.X.shape[1]

    def column(self, j: int) -> CovariateColumn:
        nlev = 0 if self.levels[j] is None else len(self.levels[j])
        return CovariateColumn(self.kinds[j], self.X[:, j], nlev)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return replace(self, y=self.y[rows], X=self.X[rows], weights=self.weights[rows],
                       groups=None if self.groups is None else self.groups[rows])

    def with_column(self, j: int, values) -> "Dataset":
        X = self.X.copy()
        X[:, j] = values
        return replace(self, X=X)

    def schema_signature(self) -> dict:
        return {"names": list(self.names), "kinds": list(self.kinds),
                "levels": [None if lv is None else list(lv) for lv in self.levels]}

    def check_schema(self, signature: dict):
        if signature != self.schema_signature():
            raise SchemaError("covariates do not match the training schema")


def power_transform(values, exponent: float = DEFAULT_EXPONENT):
    """Elementwise ``v ** exponent`` for non-negative values (NaN passes through)."""
    if not exponent > 0:
        raise ValueError("exponent must be positive")
    v = np.asarray(values, dtype=float)
    if np.any(v[~np.isnan(v)] < 0):
        raise DataError("power transform needs non-negative values")
    return np.power(v, exponent)


@dataclass
class Schema:
    """How to read a delimited file into a :class:`Dataset`.

    ``covariates`` maps column name to kind; categorical columns may map to
    a list of allowed levels instead of the string ``"categorical"`` (values
    outside that list are rejected).  Columns named in ``transform`` are
    power transformed with ``exponent`` after parsing.
    """

    response: str
    covariates: dict
    group: str | None = None
    missing: str = "NA"
    delimiter: str = ","
    transform: tuple = ()
    exponent: float = DEFAULT_EXPONENT
    weights: str | None = None

    def __post_init__(self):
        if self.response in self.covariates:
            raise SchemaError("response column must be distinct from the covariates")
        if not self.exponent > 0:
            raise SchemaError("exponent must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        d = dict(d)
        d["transform"] = tuple(d.get("transform", ()))
        return cls(**d)

    def to_dict(self) -> dict:
        return {"response": self.response, "covariates": self.covariates, "group": self.group,
                "missing": self.missing, "delimiter": self.delimiter,
                "transform": list(self.transform), "exponent": self.exponent,
                "weights": self.weights}


def _parse_float(text, missing, where):
    if text == missing or text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise DataError(f"cannot parse {text!r} as a number at {where}") from None


def load(path, schema: Schema, require_response: bool = True) -> Dataset:
    """Read a delimited text file into a typed :class:`Dataset`.

    With ``require_response=False`` a file without the response column is
    accepted (responses become NaN), which is what prediction needs.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        index = {name: i for i, name in enumerate(header)}
        wanted = [*schema.covariates]
        wanted += [c for c in (schema.group, schema.weights) if c]
        has_response = schema.response in index
        if require_response:
            wanted.insert(0, schema.response)
        for name in wanted:
            if name not in index:
                raise DataError(f"column {name!r} missing from header of {path}")
        rows = [r for r in reader if r]

    n = len(rows)
    for lineno, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(r)}")

    def where(lineno, name):
        return f"{path}:{lineno}, column {name!r}"

    if has_response:
        y = np.array([_parse_float(r[index[schema.response]], schema.missing,
                                   where(i + 2, schema.response)) for i, r in enumerate(rows)])
        if require_response and np.any(np.isnan(y)):
            raise DataError(f"missing response values in {path}")
    else:
        y = np.full(n, np.nan)
    names, kinds, levels = [], [], []
    X = np.empty((n, len(schema.covariates)))
    for j, (name, declared) in enumerate(schema.covariates.items()):
        col = [r[index[name]] for r in rows]
        names.append(name)
        if declared == NUMERIC:
            kinds.append(NUMERIC)
            levels.append(None)
            X[:, j] = [_parse_float(v, schema.missing, where(i + 2, name)) for i, v in enumerate(col)]
            continue
        kinds.append(CATEGORICAL)
        if declared == CATEGORICAL:
            lv = sorted({v for v in col if v != schema.missing and v != ""})
        else:
            lv = list(declared)
        code = {v: i for i, v in enumerate(lv)}
        for i, v in enumerate(col):
            if v == schema.missing or v == "":
                X[i, j] = math.nan
            elif v in code:
                X[i, j] = code[v]
            else:
                raise DataError(f"unknown category {v!r} at {where(i + 2, name)}")
        levels.append(tuple(lv))

    for name in schema.transform:
        if name == schema.response:
            if not has_response:
                continue
            try:
                y = power_transform(y, schema.exponent)
            except DataError as exc:
                raise DataError(f"{exc} (column {name!r})") from None
        elif name in schema.covariates:
            j = names.index(name)
            if kinds[j] != NUMERIC:
                raise SchemaError(f"cannot power transform categorical column {name!r}")
            try:
                X[:, j] = power_transform(X[:, j], schema.exponent)
            except DataError as exc:
                raise DataError(f"{exc} (column {name!r})") from None
        else:
            raise SchemaError(f"transform target {name!r} is not a column")

    groups = None
    if schema.group:
        groups = np.array([r[index[schema.group]] for r in rows])
    weights = None
    if schema.weights:
        weights = np.array([_parse_float(r[index[schema.weights]], schema.missing,
                                         where(i + 2, schema.weights)) for i, r in enumerate(rows)])
    return Dataset(y, X, tuple(names), tuple(kinds), tuple(levels), weights, groups,
                   response=schema.response)


def save(dataset: Dataset, path, delimiter: str = ",", missing: str = "NA", group: str = "group"):
    """Write ``dataset`` in the canonical delimited format.

    Responses and covariates are written as stored (no inverse transform).
    """
    header = [dataset.response, *dataset.names]
    if dataset.groups is not None:
        header.append(group)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(dataset.y[i]))]
            for j in range(dataset.m):
                v = dataset.X[i, j]
                if np.isnan(v):
                    row.append(missing)
                elif dataset.kinds[j] == CATEGORICAL:
                    row.append(dataset.levels[j][int(v)])
                else:
                    row.append(repr(float(v)))
            if dataset.groups is not None:
                row.append(str(dataset.groups[i]))
            writer.writerow(row)


def schema_for(dataset: Dataset, group: str | None = None) -> Schema:
    """Schema that reads back what :func:`save` wrote for ``dataset``."""
    cov = {name: (NUMERIC if kind == NUMERIC else list(lv))
           for name, kind, lv in zip(dataset.names, dataset.kinds, dataset.levels)}
    if group is None and dataset.groups is not None:
        group = "group"
    return Schema(response=dataset.response, covariates=cov, group=group)


# -- synthetic scenarios -------------------------------------------------------

SCENARIOS = ("null", "step-location", "step-scale", "smooth", "emos-linear", "interaction")


@dataclass
class SyntheticScenario:
    """Configuration of a synthetic censored-Gaussian data generator.

    Kinds
    -----
    null
        ``mu``, ``sigma`` constant (params ``mu=1``, ``sigma=1``).
    step-location
        ``mu = base + jump * 1(x1 > cut)``, ``sigma`` constant
        (``base=0``, ``jump=3``, ``sigma=1``, ``cut=0.5``).
    step-scale
        ``mu`` constant, ``sigma`` jumps from ``sigma_low`` to ``sigma_high``
        at ``cut`` (``mu=3``, ``sigma_low=1``, ``sigma_high=3``).
    smooth
        ``mu = mu0 + amp sin(2 pi x1)``, ``sigma = exp(scale x2)``
        (``mu0=1``, ``amp=2``, ``scale=0.5``).
    emos-linear
        ``x1`` ensemble-mean-like, ``x2`` strictly positive spread;
        ``mu = b0 + b1 x1``, ``log sigma = g0 + g1 log x2``
        (``b0=0.5``, ``b1=1``, ``g0=-0.2``, ``g1=0.8``).
    interaction
        EMOS-type predictors plus a nonlinear interaction in both parameters
        on three extra signal columns (five signal columns in total).

    Signal covariates are uniform on (0, 1) unless stated otherwise;
    ``m_noise`` additional independent uniform columns carry no signal.
    ``params["groups"] = G`` attaches a group key ``i mod G`` (for grouped
    cross-validation, e.g. years).
    """

    kind: str = "null"
    n: int = 500
    m_noise: int = 0
    seed: int | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise ValueError(f"unknown scenario kind {self.kind!r}; choose from {SCENARIOS}")
        if self.n < 1 or self.m_noise < 0:
            raise ValueError("n must be positive and m_noise non-negative")


def _scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_scenario(path) -> SyntheticScenario:
    """Parse a key-value scenario file (grammar in the module docstring)."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = _scalar(value)
    top = {k: values.pop(k) for k in ("kind", "n", "m_noise", "seed") if k in values}
    return SyntheticScenario(**top, params=values)


def _signal(kind, rng, n, p):
    """Signal covariates and true parameter functions for each scenario kind."""
    if kind == "null":
        X = np.empty((n, 0))
        mu = np.full(n, p.get("mu", 1.0))
        sigma = np.full(n, p.get("sigma", 1.0))
        names = ()
    elif kind == "step-location":
        X = rng.uniform(size=(n, 1))
        cut = p.get("cut", 0.5)
        mu = p.get("base", 0.0) + p.get("jump", 3.0) * (X[:, 0] > cut)
        sigma = np.full(n, p.get("sigma", 1.0))
        names = ("x1",)
    elif kind == "step-scale":
        X = rng.uniform(size=(n, 1))
        cut = p.get("cut", 0.5)
        mu = np.full(n, p.get("mu", 3.0))
        sigma = np.where(X[:, 0] > cut, p.get("sigma_high", 3.0), p.get("sigma_low", 1.0))
        names = ("x1",)
    elif kind == "smooth":
        X = rng.uniform(size=(n, 2))
        mu = p.get("mu0", 1.0) + p.get("amp", 2.0) * np.sin(2 * np.pi * X[:, 0])
        sigma = np.exp(p.get("scale", 0.5) * X[:, 1])
        names = ("x1", "x2")
    elif kind == "emos-linear":
        ens_mean = rng.uniform(-1.0, 3.0, size=n)
        ens_sd = rng.uniform(0.2, 2.0, size=n)
        X = np.column_stack([ens_mean, ens_sd])
        mu = p.get("b0", 0.5) + p.get("b1", 1.0) * ens_mean
        sigma = np.exp(p.get("g0", -0.2) + p.get("g1", 0.8) * np.log(ens_sd))
        names = ("ens_mean", "ens_sd")
    else:  # interaction
        ens_mean = rng.uniform(-1.0, 3.0, size=n)
        ens_sd = rng.uniform(0.2, 2.0, size=n)
        z = rng.uniform(size=(n, 3))
        regime = (z[:, 0] > 0.5) & (z[:, 1] > 0.5)
        mu = (0.3 + 0.6 * ens_mean + 2.5 * regime
              + 1.5 * np.sin(2 * np.pi * z[:, 2]) * (ens_mean > 1.0))
        sigma = np.exp(-0.2 + 0.5 * np.log(ens_sd) + 0.8 * (z[:, 0] > 0.5) - 0.6 * regime)
        X = np.column_stack([ens_mean, ens_sd, z])
        names = ("ens_mean", "ens_sd", "z1", "z2", "z3")
    return X, mu, sigma, names


def generate(scenario: SyntheticScenario):
    """Draw a dataset from ``scenario``.

    Returns
    -------
    dataset : Dataset
    truth : ParamVector
        The true ``(mu(z), sigma(z))`` of every row.
    """
    rng = np.random.default_rng(scenario.seed)
    X, mu, sigma, names = _signal(scenario.kind, rng, scenario.n, scenario.params)
    noise = rng.uniform(size=(scenario.n, scenario.m_noise))
    X = np.column_stack([X, noise]) if scenario.m_noise else X
    names = names + tuple(f"noise{j + 1}" for j in range(scenario.m_noise))
    y = np.maximum(0.0, mu + sigma * rng.standard_normal(scenario.n))
    if X.shape[1] == 0:
        X = np.empty((scenario.n, 0))
    n_groups = scenario.params.get("groups")
    groups = None if n_groups is None else np.arange(scenario.n) % int(n_groups)
    return Dataset(y, X, names, groups=groups), ParamVector(mu, sigma)


def censoring_probability(truth: ParamVector):
    return special.ndtr(-np.asarray(truth.mu) / np.asarray(truth.sigma))
