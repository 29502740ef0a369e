"""Attribution faithfulness evaluation.

Removes the top-attributed pixels (MoRF order), replaces them by noisy
linear imputation (each removed pixel becomes a weighted mean of its
8-neighborhood plus Gaussian noise, solved as one sparse linear system
per channel), and measures the drop in the school softmax score.  A
Canny-based guard zeroes the drop when imputation washed out the whole
image, which otherwise rewards uninformative maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.linalg import splu

from .cam import Cam, DegenerateCamError, compute_cam, upsample_cam

# 4-adjacent and diagonal neighbor weights of the imputation stencil;
# renormalized over in-bounds neighbors at borders.
_NEIGHBORS = [
    (-1, 0, 1.0 / 6.0), (1, 0, 1.0 / 6.0), (0, -1, 1.0 / 6.0), (0, 1, 1.0 / 6.0),
    (-1, -1, 1.0 / 12.0), (-1, 1, 1.0 / 12.0), (1, -1, 1.0 / 12.0), (1, 1, 1.0 / 12.0),
]


@dataclass
class PerturbationConfig:
    top_fraction: float = 0.10
    noise_std: float = 0.01
    edge_density_threshold: float = 0.01
    canny_sigma: float = 1.4
    canny_low: float = 0.1   # fraction of max gradient magnitude
    canny_high: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.top_fraction < 1.0:
            raise ValueError(f"top_fraction must be in (0, 1), got {self.top_fraction}")
        if self.noise_std < 0.0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")


class ImputationSolveError(RuntimeError):
    def __init__(self, residual: float):
        super().__init__(f"imputation solve residual {residual:.3e} exceeds 1e-6")
        self.residual = residual


def morf_mask(cam: Cam, q: float) -> np.ndarray:
    """Boolean mask of the ceil(q*H*W) highest-attribution pixels.

    Ties at the cutoff break toward the smallest row-major index.
    """
    if cam.degenerate:
        raise DegenerateCamError("cannot rank pixels of a degenerate map")
    h, w = cam.values.shape
    k = math.ceil(q * h * w)
    order = np.argsort(-cam.values.ravel(), kind="stable")
    mask = np.zeros(h * w, dtype=bool)
    mask[order[:k]] = True
    return mask.reshape(h, w)


def _impute_system(mask: np.ndarray):
    """Sparse (I - W_mm) and the masked->known weight structure.

    Returns (lu_factorization, rows/cols/weights of known-neighbor terms,
    masked flat indices).
    """
    h, w = mask.shape
    masked_flat = np.flatnonzero(mask.ravel())
    index_of = -np.ones(h * w, dtype=np.int64)
    index_of[masked_flat] = np.arange(len(masked_flat))
    mrows = masked_flat // w
    mcols = masked_flat % w

    totals = np.zeros(len(masked_flat))
    for dr, dc, wt in _NEIGHBORS:
        rr, cc = mrows + dr, mcols + dc
        inb = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        totals[inb] += wt

    a_rows, a_cols, a_vals = [], [], []
    k_rows, k_flat, k_vals = [], [], []
    for dr, dc, wt in _NEIGHBORS:
        rr, cc = mrows + dr, mcols + dc
        inb = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        src = np.flatnonzero(inb)
        nbr_flat = rr[src] * w + cc[src]
        weights = wt / totals[src]
        nbr_masked = index_of[nbr_flat] >= 0
        a_rows.extend(src[nbr_masked])
        a_cols.extend(index_of[nbr_flat[nbr_masked]])
        a_vals.extend(weights[nbr_masked])
        k_rows.extend(src[~nbr_masked])
        k_flat.extend(nbr_flat[~nbr_masked])
        k_vals.extend(weights[~nbr_masked])

    n = len(masked_flat)
    eye = sparse.identity(n, format="csc")
    wmm = sparse.csc_matrix((a_vals, (a_rows, a_cols)), shape=(n, n))
    system = (eye - wmm).tocsc()
    return splu(system), system, (np.array(k_rows, int), np.array(k_flat, int), np.array(k_vals)), masked_flat


def noisy_linear_impute(
    image: np.ndarray, mask: np.ndarray, sigma: float, seed: int
) -> np.ndarray:
    """Replace masked pixels per channel by solving x = W x + noise.

    image: [C, H, W]; mask: [H, W] boolean.  Unmasked pixels are unchanged.
    """
    if image.ndim != 3:
        raise ValueError(f"expected [C, H, W] image, got shape {image.shape}")
    if mask.shape != image.shape[1:]:
        raise ValueError(f"mask {mask.shape} does not match image plane {image.shape[1:]}")
    if not mask.any():
        return image.copy()
    lu, system, (k_rows, k_flat, k_vals), masked_flat = _impute_system(mask)
    rng = np.random.default_rng(seed)
    out = image.astype(np.float64).copy()
    n = len(masked_flat)
    for c in range(image.shape[0]):
        plane = out[c].ravel()
        rhs = np.zeros(n)
        np.add.at(rhs, k_rows, k_vals * plane[k_flat])
        if sigma > 0:
            rhs += rng.normal(0.0, sigma, size=n)
        solution = lu.solve(rhs)
        residual = np.abs(system @ solution - rhs).max()
        if residual > 1e-6:
            raise ImputationSolveError(residual)
        plane[masked_flat] = solution
        out[c] = plane.reshape(mask.shape)
    return out


def canny_edges(gray: np.ndarray, config: PerturbationConfig) -> np.ndarray:
    """Canny edge map: Gaussian blur, Sobel gradients, non-maximum
    suppression, then double-threshold hysteresis.  Thresholds are
    fractions of the max gradient magnitude."""
    blurred = ndimage.gaussian_filter(gray.astype(np.float64), sigma=config.canny_sigma, mode="reflect")
    gx = ndimage.sobel(blurred, axis=1, mode="reflect")
    gy = ndimage.sobel(blurred, axis=0, mode="reflect")
    mag = np.hypot(gx, gy)
    max_mag = mag.max()
    if max_mag <= 1e-12:
        return np.zeros_like(gray, dtype=bool)

    # quantize gradient direction into 4 sectors and keep local maxima
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    padded = np.pad(mag, 1)

    def shifted(dr, dc):
        return padded[1 + dr : 1 + dr + mag.shape[0], 1 + dc : 1 + dc + mag.shape[1]]

    sector_neighbors = {
        0: ((0, 1), (0, -1)),
        1: ((-1, 1), (1, -1)),
        2: ((-1, 0), (1, 0)),
        3: ((-1, -1), (1, 1)),
    }
    sector = np.zeros(mag.shape, dtype=int)
    sector[(angle >= 22.5) & (angle < 67.5)] = 1
    sector[(angle >= 67.5) & (angle < 112.5)] = 2
    sector[(angle >= 112.5) & (angle < 157.5)] = 3
    nms = np.zeros_like(mag)
    for s, (d1, d2) in sector_neighbors.items():
        sel = sector == s
        keep = sel & (mag >= shifted(*d1)) & (mag >= shifted(*d2))
        nms[keep] = mag[keep]

    strong = nms >= config.canny_high * max_mag
    weak = nms >= config.canny_low * max_mag
    labels, n_labels = ndimage.label(weak, structure=np.ones((3, 3), int))
    if n_labels == 0:
        return np.zeros_like(gray, dtype=bool)
    strong_labels = np.unique(labels[strong & (labels > 0)])
    return np.isin(labels, strong_labels) & weak


def degenerate_check(imputed: np.ndarray, config: PerturbationConfig) -> bool:
    """True iff the imputed image has (almost) no edge structure left."""
    gray = imputed.mean(axis=0)
    edges = canny_edges(gray, config)
    return edges.mean() < config.edge_density_threshold


def confidence_drop(backend, image: np.ndarray, cam: Cam, config: PerturbationConfig) -> dict:
    """School-softmax drop after MoRF perturbation of one image.

    Returns a row dict with the drop and degenerate flags; a fired
    degenerate guard forces drop = 0.
    """
    if cam.degenerate:
        return {"drop": 0.0, "cam_degenerate": True, "canny_degenerate": False}
    size = image.shape[1]
    up = upsample_cam(cam, size) if cam.values.shape != (size, size) else cam
    mask = morf_mask(up, config.top_fraction)
    imputed = noisy_linear_impute(image, mask, config.noise_std, config.seed)
    if degenerate_check(imputed, config):
        return {"drop": 0.0, "cam_degenerate": False, "canny_degenerate": True}
    original_score, imputed_score = backend.school_scores(np.stack([image, imputed]))
    return {
        "drop": float(original_score - imputed_score),
        "cam_degenerate": False,
        "canny_degenerate": False,
    }


@dataclass
class ConfidenceDropReport:
    method_means: dict[str, float]
    rows: list[dict] = field(default_factory=list)

    def as_json(self) -> dict:
        return {"method_means": self.method_means, "rows": self.rows}

    def as_table(self) -> str:
        lines = [f"{'method':<22}{'mean drop':>12}"]
        for method, mean in sorted(self.method_means.items(), key=lambda kv: -kv[1]):
            lines.append(f"{method:<22}{mean:>12.4f}")
        return "\n".join(lines)


def evaluate_methods(
    images: np.ndarray,
    image_ids: list[str],
    backend,
    methods: list[str],
    config: PerturbationConfig,
) -> ConfidenceDropReport:
    """Per-method mean confidence drop over a test set (deterministic under seed)."""
    if len(images) == 0:
        raise ValueError("need at least one image")
    bundles = backend.bundles(images)
    rows: list[dict] = []
    means: dict[str, float] = {}
    for method in methods:
        drops = []
        for i, (image, bundle) in enumerate(zip(images, bundles)):
            cam = compute_cam(method, bundle)
            per_image_config = PerturbationConfig(
                top_fraction=config.top_fraction,
                noise_std=config.noise_std,
                edge_density_threshold=config.edge_density_threshold,
                canny_sigma=config.canny_sigma,
                canny_low=config.canny_low,
                canny_high=config.canny_high,
                seed=config.seed + i,
            )
            row = confidence_drop(backend, image, cam, per_image_config)
            row.update({"image_id": image_ids[i], "method": method})
            rows.append(row)
            drops.append(row["drop"])
        means[method] = float(np.mean(drops))
    return ConfidenceDropReport(means, rows)
