"""Model-backend contract.

Any process that can emit FeatureBundles qualifies as a backend.  The wire
format is one directory per image:

    <dir>/logits.gten, softmax.gten, activations.gten, gradients.gten
    <dir>/meta.json   (image id, tile geometry, model id)

Transformer-style backends must reshape token activations (class token
removed) to [C, sqrt(T), sqrt(T)] before export so the attribution stack
stays architecture-agnostic.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import net
from .net import FeatureBundle
from .tensorio import read_tensor, write_tensor


class ToyBackend:
    """Live backend wrapping trained toy-classifier parameters."""

    def __init__(self, params: dict[str, np.ndarray], model_id: str = "toy"):
        self.params = params
        self.model_id = model_id

    def school_scores(self, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
        out = np.empty(len(images))
        for start in range(0, len(images), batch_size):
            logits, _ = net.forward(images[start : start + batch_size], self.params)
            out[start : start + len(logits)] = net.softmax(logits)[:, net.SCHOOL]
        return out

    def bundles(self, images: np.ndarray, batch_size: int = 32) -> list[FeatureBundle]:
        out: list[FeatureBundle] = []
        for start in range(0, len(images), batch_size):
            logits, sm, act, grad = net.attribution(images[start : start + batch_size], self.params)
            out.extend(
                FeatureBundle(logits[i], sm[i], act[i], grad[i]) for i in range(len(logits))
            )
        return out

    def bundle(self, image: np.ndarray) -> FeatureBundle:
        return net.toy_forward_backward(image, self.params)


def save_params(params: dict[str, np.ndarray], path: str | Path) -> None:
    np.savez(path, **params)


def load_params(path: str | Path) -> dict[str, np.ndarray]:
    with np.load(path) as data:
        return {k: data[k] for k in data.files}


def write_bundle(directory: str | Path, bundle: FeatureBundle, meta: dict) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_tensor(bundle.logits, d / "logits.gten")
    write_tensor(bundle.softmax, d / "softmax.gten")
    write_tensor(bundle.activations, d / "activations.gten")
    write_tensor(bundle.gradients, d / "gradients.gten")
    (d / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def read_bundle(directory: str | Path) -> tuple[FeatureBundle, dict]:
    d = Path(directory)
    bundle = FeatureBundle(
        read_tensor(d / "logits.gten").astype(np.float64),
        read_tensor(d / "softmax.gten").astype(np.float64),
        read_tensor(d / "activations.gten").astype(np.float64),
        read_tensor(d / "gradients.gten").astype(np.float64),
    )
    meta = json.loads((d / "meta.json").read_text())
    return bundle, meta
