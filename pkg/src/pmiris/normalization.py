"""Rubber-sheet unwrapping of the iris annulus into a fixed polar rectangle.

Row ``i`` sits at radial fraction ``(i + 0.5) / H`` between the pupil circle
(row 0 side) and the limbic circle, column ``j`` at angle ``2*pi*j/W``,
counter-clockwise from the +x axis as seen on screen. The two circles may
have different centres; each sample point interpolates linearly between the
points at the same angle on both circles.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .boundary import BoundaryCircles
from .manifest import BinaryMask, IrisImage, write_image


@dataclass(frozen=True, eq=False)
class NormalizedIris:
    texture: np.ndarray  # float in [0, 1], (H, W)
    mask: np.ndarray  # bool, (H, W)

    def __post_init__(self):
        if self.texture.shape != self.mask.shape:
            raise ValueError("texture and mask shapes differ")

    @property
    def height(self) -> int:
        return self.texture.shape[0]

    @property
    def width(self) -> int:
        return self.texture.shape[1]

    @property
    def mask_fraction(self) -> float:
        return float(self.mask.mean())

    def shifted(self, columns: int) -> "NormalizedIris":
        """Rotate both arrays by ``columns`` along the angular axis (``np.roll`` sign)."""
        return NormalizedIris(np.roll(self.texture, columns, axis=1), np.roll(self.mask, columns, axis=1))


def sampling_grid(circles: BoundaryCircles, height: int, width: int):
    """Image coordinates ``(x, y)`` of every polar cell, each shaped ``(H, W)``."""
    theta = 2 * np.pi * np.arange(width) / width
    rho = (np.arange(height) + 0.5) / height
    c, s = np.cos(theta)[None, :], np.sin(theta)[None, :]
    p, l = circles.pupil, circles.limbic
    r = rho[:, None]
    x = (1 - r) * (p.cx + p.r * c) + r * (l.cx + l.r * c)
    y = (1 - r) * (p.cy - p.r * s) + r * (l.cy - l.r * s)
    return x, y


def _inside(x, y, shape):
    h, w = shape
    return (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)


def rubber_sheet(image: IrisImage, circles: BoundaryCircles, height: int = 64, width: int = 512):
    """Bilinearly sampled texture in [0, 1] and the in-bounds flag for each cell.

    Cells falling outside the image get texture 0 and flag False.
    """
    x, y = sampling_grid(circles, height, width)
    inside = _inside(x, y, image.shape)
    img = image.pixels.astype(np.float64) / 255.0
    tex = ndimage.map_coordinates(img, [y, x], order=1, mode="nearest")
    tex = np.where(inside, tex, 0.0)
    return tex, inside


def normalize_mask(fine_mask: BinaryMask, circles: BoundaryCircles, height: int = 64, width: int = 512) -> np.ndarray:
    x, y = sampling_grid(circles, height, width)
    inside = _inside(x, y, fine_mask.shape)
    h, w = fine_mask.shape
    xi = np.clip(np.rint(x), 0, w - 1).astype(np.intp)
    yi = np.clip(np.rint(y), 0, h - 1).astype(np.intp)
    return fine_mask.bits[yi, xi] & inside


def normalize(image: IrisImage, fine_mask: BinaryMask, circles: BoundaryCircles,
              height: int = 64, width: int = 512) -> NormalizedIris:
    tex, inside = rubber_sheet(image, circles, height, width)
    mask = normalize_mask(fine_mask, circles, height, width) & inside
    return NormalizedIris(tex, mask)


def export_png(norm: NormalizedIris, stem) -> tuple[Path, Path]:
    """Write ``<stem>_texture.png`` and ``<stem>_mask.png``."""
    stem = Path(stem)
    tex = write_image(np.clip(np.rint(norm.texture * 255), 0, 255).astype(np.uint8),
                      stem.with_name(stem.name + "_texture.png"))
    msk = write_image(norm.mask.astype(np.uint8) * 255, stem.with_name(stem.name + "_mask.png"))
    return tex, msk
