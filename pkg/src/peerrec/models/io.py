"""Versioned binary container for trained scorers.

Layout: 8-byte magic, ``<II`` (format version, header length), a UTF-8 JSON
header, then every array listed in the header as little-endian float64 in
header order.
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from ..features import ColumnStandardizer, FeatureConfig
from .mf import MatrixFactorization
from .mlp import MLPRanker
from .scorers import SCORERS, MFScorer, MLPScorer, make_scorer

MAGIC = b"PRCMODL1"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    return v


def _estimator_params(est):
    return {k: _jsonable(v) for k, v in sorted(est.get_params().items())}


def _pack(scorer):
    """(header fields, {name: array}) for one scorer."""
    kind = scorer.kind
    arrays = {}
    if isinstance(scorer, MLPScorer):
        est = scorer.estimator_
        for i, (W, b) in enumerate(zip(est.coefs_, est.intercepts_)):
            arrays[f"coef_{i}"] = W
            arrays[f"intercept_{i}"] = b
        std = est.standardizer_
        arrays["std_columns"] = std.columns_.astype(float)
        arrays["std_mean"] = std.mean_
        arrays["std_scale"] = std.scale_
        for name in ("train_loss", "holdout_loss", "lr"):
            arrays[f"trace_{name}"] = est.trace_[name]
        extra = {"n_layers": len(est.coefs_), "n_features_in": int(est.n_features_in_),
                 "std_n_features_in": int(std.n_features_in_), "best_epoch": int(est.best_epoch_),
                 "holdout_is_train": bool(est.trace_["holdout_is_train"])}
        params = _estimator_params(est)
    elif isinstance(scorer, MFScorer):
        est = scorer.estimator_
        arrays["author_embeddings"] = est.author_embeddings_
        arrays["site_embeddings"] = est.site_embeddings_
        arrays["loss_curve"] = est.loss_curve_
        extra = {"author_vocab": sorted(est.author_vocab_, key=est.author_vocab_.get),
                 "site_vocab": sorted(est.site_vocab_, key=est.site_vocab_.get)}
        params = _estimator_params(est)
    else:
        extra = {}
        params = _estimator_params(scorer)
    return {"kind": kind, "params": params, "extra": extra}, arrays


def save_scorer(scorer, path, feature_config: FeatureConfig | None = None, metadata=None):
    """Write ``scorer`` atomically; returns the path."""
    header, arrays = _pack(scorer)
    header["feature_config"] = None if feature_config is None else {
        "dim": feature_config.dim, "blocks": feature_config.blocks}
    header["metadata"] = metadata or {}
    header["arrays"] = [[name, list(a.shape)] for name, a in arrays.items()]
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for a in arrays.values():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    os.replace(tmp, path)
    return path


def read_container(path):
    """(header, {name: array}) without constructing a scorer."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:len(MAGIC)] != MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    off = len(MAGIC)
    version, n = struct.unpack_from("<II", data, off)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}")
    off += 8
    header = json.loads(data[off:off + n].decode("utf-8"))
    off += n
    arrays = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        if off + 8 * count > len(data):
            raise ModelFormatError(f"{path}: truncated at array {name!r}")
        arrays[name] = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape).astype(float)
        off += 8 * count
    if off != len(data):
        raise ModelFormatError(f"{path}: {len(data) - off} trailing bytes")
    return header, arrays


def load_scorer(path):
    """Returns (scorer, FeatureConfig or None, metadata)."""
    header, arrays = read_container(path)
    kind = header["kind"]
    if kind not in SCORERS:
        raise ModelFormatError(f"{path}: unknown scorer kind {kind!r}")
    params, extra = header["params"], header["extra"]
    if kind == "MLP":
        est = MLPRanker(**params)
        nl = extra["n_layers"]
        est.coefs_ = [arrays[f"coef_{i}"] for i in range(nl)]
        est.intercepts_ = [arrays[f"intercept_{i}"] for i in range(nl)]
        std = ColumnStandardizer(params.get("scale_columns"))
        std.columns_ = arrays["std_columns"].astype(np.int64)
        std.mean_ = arrays["std_mean"]
        std.scale_ = arrays["std_scale"]
        std.n_features_in_ = extra["std_n_features_in"]
        est.standardizer_ = std
        est.best_epoch_ = extra["best_epoch"]
        est.trace_ = {"train_loss": arrays["trace_train_loss"], "holdout_loss": arrays["trace_holdout_loss"],
                      "lr": arrays["trace_lr"], "holdout_is_train": extra["holdout_is_train"]}
        est.n_features_in_ = extra["n_features_in"]
        est.classes_ = np.asarray([0, 1])
        scorer = MLPScorer(MLPRanker(**params))
        scorer.estimator_ = est
    elif kind == "MF":
        est = MatrixFactorization(**params)
        est.author_vocab_ = {a: i + 1 for i, a in enumerate(extra["author_vocab"])}
        est.site_vocab_ = {s: i + 1 for i, s in enumerate(extra["site_vocab"])}
        est.author_embeddings_ = arrays["author_embeddings"]
        est.site_embeddings_ = arrays["site_embeddings"]
        est.loss_curve_ = arrays["loss_curve"]
        scorer = MFScorer(MatrixFactorization(**params))
        scorer.estimator_ = est
    else:
        scorer = make_scorer(kind, **params)
    fc = header.get("feature_config")
    return scorer, (FeatureConfig(**fc) if fc else None), header.get("metadata", {})
