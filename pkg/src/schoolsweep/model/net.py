"""Small convolutional classifier with hand-rolled forward/backward.

Architecture (channel-first, values in [0, 1], spatial size divisible by 8):

    3 x [conv3x3 -> per-channel norm -> ReLU -> maxpool2]
    -> per-channel norm          (attribution target layer)
    -> conv3x3 -> ReLU           (final block)
    -> global average pool -> dense -> 2 logits

The final block deliberately has no norm: a spatial norm between the
target layer and the logits zero-centers the backpropagated gradients per
channel, which destroys gradient-mean CAM weights.

Class order is (non_school, school); attribution gradients are of the
pre-softmax school logit with respect to the target-layer activations.
All math runs in float64; the GTEN interchange format stays float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels as K

CLASSES = ("non_school", "school")
SCHOOL = 1
NORM_EPS = 1e-5


@dataclass
class FeatureBundle:
    """Per-image contract between a model backend and the attribution stack."""

    logits: np.ndarray      # [K]
    softmax: np.ndarray     # [K]
    activations: np.ndarray  # [C, Hc, Wc] at the target layer
    gradients: np.ndarray   # [C, Hc, Wc], d(school logit)/d(activations)

    def __post_init__(self):
        if abs(float(self.softmax.sum()) - 1.0) > 1e-6:
            raise ValueError(f"softmax sums to {self.softmax.sum()}, expected 1")
        if self.activations.shape != self.gradients.shape:
            raise ValueError(
                f"activations {self.activations.shape} != gradients {self.gradients.shape}"
            )


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_smoothed(logits: np.ndarray, target: int, eps: float = 0.1) -> float:
    """Label-smoothed cross entropy for one sample: -sum_k q_k log p_k."""
    k = logits.shape[-1]
    if k < 2:
        raise ValueError("need at least 2 classes")
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"label smoothing must be in [0, 1), got {eps}")
    q = np.full(k, eps / k)
    q[target] += 1.0 - eps
    z = logits - logits.max()
    logp = z - np.log(np.exp(z).sum())
    return float(-(q * logp).sum())


def smoothed_ce_batch(
    logits: np.ndarray, targets: np.ndarray, eps: float = 0.1
) -> tuple[float, np.ndarray]:
    """Mean smoothed cross entropy over a batch and its logit gradient."""
    n, k = logits.shape
    q = np.full((n, k), eps / k)
    q[np.arange(n), targets] += 1.0 - eps
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = float(-(q * logp).sum() / n)
    return loss, (np.exp(logp) - q) / n


def _chan_norm_forward(x, gamma, beta):
    mu = x.mean(axis=(2, 3), keepdims=True)
    var = x.var(axis=(2, 3), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + NORM_EPS)
    xhat = (x - mu) * inv_std
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return y, (xhat, inv_std)


def _chan_norm_backward(cache, gamma, dy):
    xhat, inv_std = cache
    dgamma = (dy * xhat).sum(axis=(0, 2, 3))
    dbeta = dy.sum(axis=(0, 2, 3))
    dxhat = dy * gamma[None, :, None, None]
    m1 = dxhat.mean(axis=(2, 3), keepdims=True)
    m2 = (dxhat * xhat).mean(axis=(2, 3), keepdims=True)
    dx = inv_std * (dxhat - m1 - xhat * m2)
    return dx, dgamma, dbeta


def init_params(
    seed: int,
    channels: tuple[int, int, int] = (8, 16, 32),
    final_channels: int = 32,
    in_channels: int = 3,
    n_classes: int = 2,
) -> dict[str, np.ndarray]:
    """He-initialized weights; biases, shifts, and the dense layer start at zero."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    cin = in_channels
    for i, cout in enumerate((*channels, final_channels), start=1):
        params[f"conv{i}_w"] = rng.normal(0.0, np.sqrt(2.0 / (cin * 9)), (cout, cin, 3, 3))
        params[f"conv{i}_b"] = np.zeros(cout)
        if i <= 3:
            params[f"norm{i}_g"] = np.ones(cout)
            params[f"norm{i}_b"] = np.zeros(cout)
        cin = cout
    params["normt_g"] = np.ones(channels[2])
    params["normt_b"] = np.zeros(channels[2])
    params["dense_w"] = rng.normal(0.0, np.sqrt(1.0 / final_channels), (n_classes, final_channels))
    params["dense_b"] = np.zeros(n_classes)
    return params


def _as64(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def forward(x: np.ndarray, params: dict[str, np.ndarray]) -> tuple[np.ndarray, dict]:
    """Batched forward pass. x: [N, 3, S, S] with S divisible by 8."""
    if x.ndim != 4:
        raise ValueError(f"expected [N, C, H, W] input, got shape {x.shape}")
    if x.shape[2] % 8 or x.shape[3] % 8:
        raise ValueError(f"spatial size must be divisible by 8, got {x.shape[2:]} ")
    cache: dict = {"x": _as64(x)}
    h = cache["x"]
    for i in (1, 2, 3):
        cache[f"in{i}"] = h
        c = K.conv3x3_forward(h, _as64(params[f"conv{i}_w"]), _as64(params[f"conv{i}_b"]))
        n, ncache = _chan_norm_forward(c, params[f"norm{i}_g"], params[f"norm{i}_b"])
        cache[f"norm{i}"] = ncache
        r = np.maximum(n, 0.0)
        cache[f"mask{i}"] = n > 0.0
        h, idx = K.maxpool2_forward(_as64(r))
        cache[f"pool{i}"] = idx
    cache["pre_target"] = h
    a, tcache = _chan_norm_forward(h, params["normt_g"], params["normt_b"])
    cache["normt"] = tcache
    cache["target"] = a
    c4 = K.conv3x3_forward(_as64(a), _as64(params["conv4_w"]), _as64(params["conv4_b"]))
    cache["mask4"] = c4 > 0.0
    r4 = np.maximum(c4, 0.0)
    cache["final"] = r4
    gap = r4.mean(axis=(2, 3))
    cache["gap"] = gap
    logits = gap @ params["dense_w"].T + params["dense_b"]
    return logits, cache


def _backward_final_block(cache, params, dlogits):
    """Backprop from logits to the target-layer activations."""
    dgap = dlogits @ params["dense_w"]
    dw_dense = dlogits.T @ cache["gap"]
    db_dense = dlogits.sum(axis=0)
    hw = cache["final"].shape[2] * cache["final"].shape[3]
    dr4 = np.broadcast_to(dgap[:, :, None, None], cache["final"].shape) / hw
    dc4 = dr4 * cache["mask4"]
    da, dw4, dbias4 = K.conv3x3_backward(
        _as64(cache["target"]), _as64(params["conv4_w"]), _as64(dc4)
    )
    grads = {
        "dense_w": dw_dense,
        "dense_b": db_dense,
        "conv4_w": dw4,
        "conv4_b": dbias4,
    }
    return da, grads


def backward(cache: dict, params: dict[str, np.ndarray], dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar objective (with logit gradient dlogits) w.r.t. all params."""
    da, grads = _backward_final_block(cache, params, dlogits)
    dh, dgt, dbt = _chan_norm_backward(cache["normt"], params["normt_g"], da)
    grads["normt_g"] = dgt
    grads["normt_b"] = dbt
    for i in (3, 2, 1):
        dr = K.maxpool2_backward(_as64(dh), cache[f"pool{i}"])
        dn = dr * cache[f"mask{i}"]
        dc, dg, db = _chan_norm_backward(cache[f"norm{i}"], params[f"norm{i}_g"], dn)
        dh, dw, dbias = K.conv3x3_backward(
            _as64(cache[f"in{i}"]), _as64(params[f"conv{i}_w"]), _as64(dc)
        )
        grads[f"norm{i}_g"] = dg
        grads[f"norm{i}_b"] = db
        grads[f"conv{i}_w"] = dw
        grads[f"conv{i}_b"] = dbias
    return grads


def attribution(
    x: np.ndarray, params: dict[str, np.ndarray], class_index: int = SCHOOL
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Batched (logits, softmax, target activations, target gradients).

    Gradients are of the pre-softmax logit for class_index.
    """
    logits, cache = forward(x, params)
    seed = np.zeros_like(logits)
    seed[:, class_index] = 1.0
    dtarget, _ = _backward_final_block(cache, params, seed)
    return logits, softmax(logits), cache["target"], dtarget


def toy_forward_backward(image: np.ndarray, params: dict[str, np.ndarray]) -> FeatureBundle:
    """FeatureBundle for a single [3, S, S] image."""
    if image.ndim != 3:
        raise ValueError(f"expected [C, S, S] image, got shape {image.shape}")
    logits, sm, act, grad = attribution(image[None], params)
    return FeatureBundle(logits[0], sm[0], act[0], grad[0])


def ensemble_softmax(members: list[np.ndarray]) -> np.ndarray:
    """Soft voting: elementwise mean of member softmax vectors."""
    if not members:
        raise ValueError("ensemble needs at least one member")
    k = members[0].shape[-1]
    for m in members[1:]:
        if m.shape[-1] != k:
            raise ValueError(f"mismatched class counts: {m.shape[-1]} vs {k}")
    return np.mean(np.stack(members, axis=0), axis=0)
