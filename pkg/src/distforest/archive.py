"""Versioned JSON model archives.

An archive is a single JSON object::

    {
      "format": "distforest-archive",
      "format_version": 1,
      "created": "<UTC timestamp, not part of the fingerprint>",
      "model": "forest" | "tree" | "emos" | "intercept",
      "family": {"name": ..., "threshold": ...},
      "config": {...},
      "schema": {"names": [...], "kinds": [...], "levels": [...]},
      "data_schema": {...} | null,         # file schema used at fit time
      "fingerprint": "<sha256 of the training sample>",
      "slim": false,
      "training": {"y": [...], "weights": [...]},   # omitted when slim
      "trees": [{"subsample_rows": [...], "train_leaf": [...], "nodes": [...]}],
      "emos": {...}                          # emos / intercept models
    }

Nodes are ``{"id", "depth", "mu", "sigma", "n", "split", "left", "right"}``
with ``split`` either null (leaf) or ``{"variable", "kind", "threshold",
"left_levels", "seen_levels", "missing_left", "statistic", "p_value"}``.
Floats are written with ``repr`` precision so loading reproduces them
exactly.  Slim archives drop leaf memberships and training responses: trees
still predict from their leaf parameters, forests refuse to predict.
"""
from __future__ import annotations

import hashlib
import json
import math
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .baselines import EmosModel
from .exceptions import ArchiveVersionError, DataError, DistForestError
from .families import ParamVector, get_family
from .forest import DistForest, ForestConfig
from .tree import DistTree, Node, SplitRecord, TreeConfig

__all__ = ["FORMAT_VERSION", "fingerprint", "to_dict", "from_dict", "save_model", "load_model",
           "SlimArchiveError"]

FORMAT = "distforest-archive"
FORMAT_VERSION = 1


class SlimArchiveError(DistForestError):
    """A slim forest archive has no training responses for refitting."""


def fingerprint(dataset) -> str:
    h = hashlib.sha256()
    for arr in (dataset.y, dataset.X, dataset.weights):
        h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()


def _num(v):
    v = float(v)
    return None if math.isnan(v) else v


def _split_to_dict(s: SplitRecord):
    return {"variable": s.variable, "kind": s.kind,
            "threshold": None if s.threshold is None else float(s.threshold),
            "left_levels": list(s.left_levels),
            "seen_levels": None if s.seen_levels is None else list(s.seen_levels),
            "missing_left": bool(s.missing_left), "statistic": _num(s.statistic),
            "p_value": _num(s.p_value)}


def _split_from_dict(d):
    if d is None:
        return None
    nan = float("nan")
    return SplitRecord(d["variable"], d["kind"], d["threshold"], tuple(d["left_levels"]),
                       d["missing_left"], nan if d["statistic"] is None else d["statistic"],
                       nan if d["p_value"] is None else d["p_value"],
                       None if d["seen_levels"] is None else tuple(d["seen_levels"]))


def _tree_to_dict(tree: DistTree, slim: bool, rows=None):
    out = {"nodes": [{"id": nd.id, "depth": nd.depth, "mu": float(nd.theta.mu),
                      "sigma": float(nd.theta.sigma), "n": nd.n,
                      "split": None if nd.split is None else _split_to_dict(nd.split),
                      "left": nd.left, "right": nd.right} for nd in tree.nodes]}
    if not slim:
        out["train_leaf"] = tree.train_leaf.tolist()
        if rows is not None:
            out["subsample_rows"] = rows.tolist()
    return out


def _tree_from_dict(d, family, config, schema, y, w):
    nodes = [Node(nd["id"], nd["depth"], ParamVector(nd["mu"], nd["sigma"]), nd["n"],
                  _split_from_dict(nd["split"]), nd["left"], nd["right"]) for nd in d["nodes"]]
    rows = np.asarray(d.get("subsample_rows", []), dtype=int)
    leaf = np.asarray(d.get("train_leaf", []), dtype=int)
    if y is not None and rows.size:
        y, w = y[rows], w[rows]
    if y is None:
        y = w = np.empty(0)
    return DistTree(nodes, family, config, schema, leaf, y, w), rows


def to_dict(model, fingerprint_hex: str = "", slim: bool = False, data_schema=None,
            timestamp: bool = True) -> dict:
    out = {"format": FORMAT, "format_version": FORMAT_VERSION}
    if timestamp:
        out["created"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    fam = model.family
    out["family"] = {"name": fam.name, "threshold": fam.threshold}
    out["data_schema"] = data_schema
    out["fingerprint"] = fingerprint_hex
    out["slim"] = bool(slim)
    if isinstance(model, DistForest):
        out["model"] = "forest"
        out["config"] = model.config.to_dict()
        out["seed"] = model.seed
        out["n_failed"] = model.n_failed
        out["schema"] = model.schema
        if not slim:
            out["training"] = {"y": model.y.tolist(), "weights": model.weights.tolist()}
        out["trees"] = [_tree_to_dict(t, slim, r) for t, r in zip(model.trees, model.subsample_rows)]
    elif isinstance(model, DistTree):
        out["model"] = "tree"
        out["config"] = dict(model.config.__dict__)
        out["schema"] = model.schema
        if not slim:
            out["training"] = {"y": model.train_y.tolist(), "weights": model.train_w.tolist()}
        out["trees"] = [_tree_to_dict(model, slim)]
    elif isinstance(model, EmosModel):
        out["model"] = "intercept" if model.loc_column is None and model.scale_column is None else "emos"
        out["config"] = {}
        out["schema"] = {"names": list(model.names)}
        out["emos"] = {"beta": list(model.beta), "gamma": list(model.gamma),
                       "loc_column": model.loc_column, "scale_column": model.scale_column,
                       "scale_transform": model.scale_transform,
                       "loglik": _num(model.loglik_value)}
    else:
        raise TypeError(f"cannot archive {type(model).__name__}")
    return out


class _SlimForest(DistForest):
    def predict(self, X):
        raise SlimArchiveError("slim forest archive: leaf memberships were not stored, "
                               "forest predictions need the full archive")

    def weights_matrix(self, X):
        raise SlimArchiveError("slim forest archive has no leaf memberships")


def from_dict(d: dict):
    if d.get("format") != FORMAT:
        raise DataError("not a distforest model archive")
    version = d.get("format_version")
    if not isinstance(version, int) or version > FORMAT_VERSION or version < 1:
        raise ArchiveVersionError(
            f"archive format version {version!r} is not supported (this build reads <= {FORMAT_VERSION})")
    family = get_family(d["family"]["name"], d["family"]["threshold"])
    kind = d["model"]
    if kind in ("emos", "intercept"):
        e = d["emos"]
        return EmosModel(family, tuple(e["beta"]), tuple(e["gamma"]), e["loc_column"],
                         e["scale_column"], e["scale_transform"], tuple(d["schema"]["names"]),
                         float("nan") if e["loglik"] is None else e["loglik"])
    schema = d["schema"]
    training = d.get("training")
    y = w = None
    if training is not None:
        y = np.asarray(training["y"], dtype=float)
        w = np.asarray(training["weights"], dtype=float)
    if kind == "tree":
        tree, _ = _tree_from_dict(d["trees"][0], family, TreeConfig(**d["config"]), schema, y, w)
        return tree
    if kind == "forest":
        config = ForestConfig(**d["config"])
        tconf = config.tree_config(len(schema["names"]))
        pairs = [_tree_from_dict(t, family, tconf, schema, y, w) for t in d["trees"]]
        trees, rows = zip(*pairs)
        cls = _SlimForest if d.get("slim") else DistForest
        return cls(trees, rows, family, config, schema,
                   y if y is not None else np.empty(0), w if w is not None else np.empty(0),
                   d["seed"], d.get("n_failed", 0))
    raise DataError(f"unknown model kind {kind!r}")


def save_model(model, path, fingerprint_hex: str = "", slim: bool = False, data_schema=None,
               timestamp: bool = True):
    d = to_dict(model, fingerprint_hex, slim, data_schema, timestamp)
    Path(path).write_text(json.dumps(d, indent=1, allow_nan=False) + "\n", encoding="utf-8")
    return d


def load_model(path):
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model archive {path}: {exc}") from exc
    return from_dict(d)


def archive_metadata(path) -> dict:
    """The archive's header fields (everything except tree bodies and training data)."""
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    return {k: v for k, v in d.items() if k not in ("trees", "training")}
