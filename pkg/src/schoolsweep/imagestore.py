"""Tile-id -> image resolution.

The pipeline never downloads imagery; a store either reads pre-exported
GTEN tensors from a directory or renders synthetic tiles (see
schoolsweep.synthetic.SyntheticImageStore, which shares this interface).
"""

from __future__ import annotations

from pathlib import Path
from typing import Protocol

import numpy as np

from .geo import TileSpec
from .model.tensorio import read_tensor


class ImageStore(Protocol):
    def get(self, tile: TileSpec, tile_id: str = "") -> np.ndarray: ...


class MissingImageError(KeyError):
    def __init__(self, tile_id: str):
        super().__init__(tile_id)
        self.tile_id = tile_id


class DirectoryImageStore:
    """Reads `<dir>/<tile_id>.gten` tensors of shape [3, px, px]."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def get(self, tile: TileSpec, tile_id: str = "") -> np.ndarray:
        path = self.directory / f"{tile_id}.gten"
        if not path.exists():
            raise MissingImageError(tile_id)
        image = read_tensor(path).astype(np.float64)
        if image.ndim != 3 or image.shape[0] != 3:
            raise ValueError(f"{path}: expected [3, H, W] image, got {image.shape}")
        return image
