"""Versioned model files.

All models share one JSON envelope: a format tag, a version, a kind tag,
and kind-specific parameter arrays.  Floats serialize through repr, so a
save/load round trip reproduces every parameter bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .baselines import GnbModel, LdaModel
from .dbn import Dbn, Rbm
from .errors import CorruptFile, IoFailure, UnsupportedVersion

FORMAT_TAG = "flowstate-model"
FORMAT_VERSION = 1


def _arr(x) -> list:
    return np.asarray(x, dtype=np.float64).tolist()


def model_payload(model, extra: dict | None = None) -> dict:
    if isinstance(model, Dbn):
        body = {
            "kind": "dbn",
            "layer_sizes": [model.rbms[0].n_visible] + [r.n_hidden for r in model.rbms],
            "rbms": [{"W": _arr(r.W), "b": _arr(r.b), "a": _arr(r.a)} for r in model.rbms],
            "W_out": _arr(model.W_out),
            "c_out": _arr(model.c_out),
        }
    elif isinstance(model, GnbModel):
        body = {
            "kind": "gnb",
            "priors": _arr(model.priors),
            "means": _arr(model.means),
            "variances": _arr(model.variances),
        }
    elif isinstance(model, LdaModel):
        body = {
            "kind": "lda",
            "priors": _arr(model.priors),
            "means": _arr(model.means),
            "pooled_cov": _arr(model.pooled_cov),
        }
    else:
        raise TypeError(f"cannot serialize model of type {type(model).__name__}")
    payload = {"format": FORMAT_TAG, "version": FORMAT_VERSION}
    payload.update(body)
    if extra:
        payload["meta"] = extra
    return payload


def save_model(model, path, extra: dict | None = None) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(model_payload(model, extra), indent=1) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from None
    return path


def load_model(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from None
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(payload, dict) or payload.get("format") != FORMAT_TAG:
        raise CorruptFile(f"{path}: missing {FORMAT_TAG!r} format tag")
    version = payload.get("version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"{path}: version {version!r}, supported: {FORMAT_VERSION}")
    kind = payload.get("kind")
    try:
        if kind == "dbn":
            rbms = tuple(
                Rbm(np.array(r["W"], dtype=np.float64),
                    np.array(r["b"], dtype=np.float64),
                    np.array(r["a"], dtype=np.float64))
                for r in payload["rbms"]
            )
            return Dbn(rbms, np.array(payload["W_out"], dtype=np.float64),
                       np.array(payload["c_out"], dtype=np.float64))
        if kind == "gnb":
            return GnbModel(np.array(payload["priors"]), np.array(payload["means"]),
                            np.array(payload["variances"]))
        if kind == "lda":
            cov = np.array(payload["pooled_cov"], dtype=np.float64)
            return LdaModel(np.array(payload["priors"]), np.array(payload["means"]),
                            cov, np.linalg.inv(cov))
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile(f"{path}: malformed {kind!r} payload ({exc})") from None
    raise CorruptFile(f"{path}: unknown model kind {kind!r}")
