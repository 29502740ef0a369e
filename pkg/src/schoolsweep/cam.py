"""Class-activation attribution maps and peak-to-coordinate conversion.

Seven methods over the (activations, gradients) pair captured at the
target layer.  Every raw map is min-max normalized to [0, 1]; a constant
raw map normalizes to all zeros with the degenerate flag set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geo import GeoPoint, TileSpec, pixel_to_geo
from .model.net import FeatureBundle

CAM_METHODS = (
    "gradcam",
    "gradcam_pp",
    "gradcam_elementwise",
    "hirescam",
    "eigencam",
    "eigengradcam",
    "layercam",
)

GRADCAM_PP_DELTA = 1e-8
_CONST_TOL = 1e-12


class DegenerateCamError(ValueError):
    """Raised when an operation needs a non-degenerate map."""


@dataclass
class Cam:
    values: np.ndarray  # [H, W] in [0, 1]
    method: str
    degenerate: bool


def _eigen_projection(tensor: np.ndarray) -> np.ndarray:
    """First right singular vector of the [C, H*W] matrix, as an HxW map.

    Sign fixed so the entry with the largest magnitude is positive.
    """
    c, h, w = tensor.shape
    flat = tensor.reshape(c, h * w)
    _, _, vt = np.linalg.svd(flat, full_matrices=False)
    v = vt[0]
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return v.reshape(h, w)


def _raw_map(method: str, a: np.ndarray, g: np.ndarray) -> np.ndarray:
    if method == "gradcam":
        weights = g.mean(axis=(1, 2))
        return np.maximum((weights[:, None, None] * a).sum(axis=0), 0.0)
    if method == "hirescam":
        return np.maximum((g * a).sum(axis=0), 0.0)
    if method == "gradcam_elementwise":
        return np.maximum(g * a, 0.0).sum(axis=0)
    if method == "layercam":
        return np.maximum((np.maximum(g, 0.0) * a).sum(axis=0), 0.0)
    if method == "gradcam_pp":
        g2 = g * g
        g3_sum = (g * g2).sum(axis=(1, 2))
        alpha = g2 / (2.0 * g2 + a * g3_sum[:, None, None] + GRADCAM_PP_DELTA)
        weights = (alpha * np.maximum(g, 0.0)).sum(axis=(1, 2))
        return np.maximum((weights[:, None, None] * a).sum(axis=0), 0.0)
    if method == "eigencam":
        return _eigen_projection(a)
    if method == "eigengradcam":
        return _eigen_projection(g * a)
    raise ValueError(f"unknown CAM method {method!r}, expected one of {CAM_METHODS}")


def compute_cam(method: str, bundle: FeatureBundle) -> Cam:
    a = np.asarray(bundle.activations, dtype=np.float64)
    g = np.asarray(bundle.gradients, dtype=np.float64)
    if a.ndim != 3 or a.shape[0] == 0:
        raise ValueError(f"activations must be [C, H, W] with C > 0, got {a.shape}")
    if a.shape != g.shape:
        raise ValueError(f"shape mismatch: activations {a.shape}, gradients {g.shape}")
    raw = _raw_map(method, a, g)
    lo, hi = float(raw.min()), float(raw.max())
    if hi - lo <= _CONST_TOL * max(1.0, abs(hi)):
        return Cam(np.zeros_like(raw), method, degenerate=True)
    return Cam((raw - lo) / (hi - lo), method, degenerate=False)


def upsample_cam(cam: Cam, out: int) -> Cam:
    """Bilinear upsampling with corner alignment; values stay in [0, 1]."""
    h, w = cam.values.shape
    if out < max(h, w):
        raise ValueError(f"downsampling requested: {h}x{w} -> {out}")
    if cam.degenerate:
        return Cam(np.zeros((out, out)), cam.method, degenerate=True)
    rows = np.linspace(0.0, h - 1.0, out)
    cols = np.linspace(0.0, w - 1.0, out)
    r0 = np.clip(np.floor(rows).astype(int), 0, h - 2) if h > 1 else np.zeros(out, int)
    c0 = np.clip(np.floor(cols).astype(int), 0, w - 2) if w > 1 else np.zeros(out, int)
    fr = (rows - r0) if h > 1 else np.zeros(out)
    fc = (cols - c0) if w > 1 else np.zeros(out)
    v = cam.values
    top = v[r0][:, c0] * (1 - fc) + v[r0][:, np.minimum(c0 + 1, w - 1)] * fc
    bot = v[np.minimum(r0 + 1, h - 1)][:, c0] * (1 - fc) + v[np.minimum(r0 + 1, h - 1)][:, np.minimum(c0 + 1, w - 1)] * fc
    out_vals = top * (1 - fr)[:, None] + bot * fr[:, None]
    return Cam(np.clip(out_vals, 0.0, 1.0), cam.method, degenerate=False)


def peak_to_geo(cam: Cam, tile: TileSpec) -> tuple[GeoPoint, float]:
    """Geographic location of the maximum pixel (ties: smallest row-major index)."""
    if cam.degenerate:
        raise DegenerateCamError(f"no localization: {cam.method} map is degenerate")
    if cam.values.shape != (tile.px, tile.px):
        raise ValueError(
            f"cam grid {cam.values.shape} does not match tile grid {tile.px}x{tile.px}; upsample first"
        )
    flat_idx = int(np.argmax(cam.values))
    py, px = divmod(flat_idx, cam.values.shape[1])
    return pixel_to_geo(tile, px, py), float(cam.values[py, px])


def cam_to_png_bytes(cam: Cam) -> bytes:
    """8-bit grayscale PNG rendering for visual inspection."""
    from PIL import Image
    import io

    img = Image.fromarray((np.clip(cam.values, 0.0, 1.0) * 255).astype(np.uint8), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()
