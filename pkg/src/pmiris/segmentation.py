"""Segmenters and mask post-processing.

Masks reach the pipeline either from files written by an external model
(``file_backed``) or from a simple intensity/gradient fallback
(``classical_baseline``) that exists so the pipeline can run without any model
artifacts. The fallback makes no accuracy claim.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .manifest import BinaryMask, IrisImage, SampleRecord, load_mask

SEGMENTER_KINDS = ("file_backed", "classical_baseline")


class SegmentationError(RuntimeError):
    """Sample could not be segmented (missing mask file or empty mask)."""

    def __init__(self, sample_id: str, reason: str):
        self.sample_id = sample_id
        self.reason = reason
        super().__init__(f"{sample_id}: {reason}")


@dataclass(frozen=True)
class Segmenter:
    kind: str = "file_backed"
    open_radius: int = 2
    close_radius: int = 4
    # classical_baseline parameters
    pupil_threshold: int = 60
    min_pupil_area: int = 200
    ray_count: int = 360
    gradient_smoothing: float = 2.0
    radius_filter: int = 9

    def __post_init__(self):
        if self.kind not in SEGMENTER_KINDS:
            raise ValueError(f"unknown segmenter kind {self.kind!r}")
        if self.open_radius < 0 or self.close_radius < 0:
            raise ValueError("cleanup radii must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "Segmenter":
        return cls(**d)


@dataclass(frozen=True)
class MaskPair:
    coarse: BinaryMask
    fine: BinaryMask
    fine_defaulted: bool = False

    def __post_init__(self):
        if self.coarse.shape != self.fine.shape:
            raise ValueError("coarse and fine masks differ in size")


def disc(radius: int) -> np.ndarray:
    r = int(radius)
    y, x = np.ogrid[-r:r + 1, -r:r + 1]
    return x * x + y * y <= r * r


def largest_component(bits: np.ndarray) -> np.ndarray:
    """Keep the largest 4-connected foreground component (ties: lowest label)."""
    labels, count = ndimage.label(bits)
    if count <= 1:
        return bits.copy() if count == 1 else np.zeros_like(bits)
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == int(np.argmax(sizes))


def cleanup_mask(mask: BinaryMask, open_radius: int = 2, close_radius: int = 4) -> BinaryMask:
    """Opening, then closing with disc elements, then the largest component.

    The image is edge-padded during morphology so masks touching the frame
    are not eroded from outside.
    """
    if open_radius < 0 or close_radius < 0:
        raise ValueError("radii must be >= 0")
    bits = np.asarray(mask.bits, dtype=bool)
    if not bits.any():
        return BinaryMask(np.zeros_like(bits), mask.semantics)
    for radius, op in ((open_radius, ndimage.binary_opening), (close_radius, ndimage.binary_closing)):
        if radius > 0:
            p = radius + 1
            padded = np.pad(bits, p, mode="edge")
            bits = op(padded, structure=disc(radius))[p:-p, p:-p]
    return BinaryMask(largest_component(bits), mask.semantics)


def segment(image: IrisImage, record: SampleRecord, segmenter: Segmenter) -> MaskPair:
    """Produce a cleaned full-resolution coarse/fine mask pair for one sample."""
    h, w = image.shape
    if segmenter.kind == "file_backed":
        if record.coarse_mask_path is None:
            raise SegmentationError(record.sample_id, "no coarse mask path in manifest")
        if not record.coarse_mask_path.exists():
            raise SegmentationError(record.sample_id, f"coarse mask missing: {record.coarse_mask_path}")
        coarse = load_mask(record.coarse_mask_path, w, h, "coarse")
        defaulted = record.fine_mask_path is None
        if defaulted:
            fine = coarse.with_semantics("fine")
        else:
            if not record.fine_mask_path.exists():
                raise SegmentationError(record.sample_id, f"fine mask missing: {record.fine_mask_path}")
            fine = load_mask(record.fine_mask_path, w, h, "fine")
    else:
        coarse = classical_coarse_mask(image, segmenter)
        fine = coarse.with_semantics("fine")
        defaulted = True

    coarse = cleanup_mask(coarse, segmenter.open_radius, segmenter.close_radius)
    if defaulted:
        fine = coarse.with_semantics("fine")
    else:
        fine = cleanup_mask(fine, segmenter.open_radius, segmenter.close_radius)
    if not coarse.bits.any():
        raise SegmentationError(record.sample_id, "empty coarse segmentation")
    return MaskPair(coarse, fine, defaulted)


def _pupil_region(pixels: np.ndarray, seg: Segmenter) -> np.ndarray:
    dark = ndimage.gaussian_filter(pixels.astype(float), 1.0) < seg.pupil_threshold
    dark = ndimage.binary_opening(dark, structure=disc(2))
    pupil = largest_component(dark)
    if pupil.sum() < seg.min_pupil_area:
        return np.zeros_like(pupil)
    return ndimage.binary_fill_holes(pupil)


def classical_coarse_mask(image: IrisImage, seg: Segmenter | None = None) -> BinaryMask:
    """Dark-blob pupil plus per-angle outer boundary from the radial intensity step.

    Along each ray from the pupil centroid, the outer boundary is placed at the
    strongest dark-to-bright step beyond the pupil edge. Per-angle radii are
    median filtered (cyclically) before rasterising.
    """
    seg = seg or Segmenter(kind="classical_baseline")
    px = image.pixels.astype(float)
    h, w = px.shape
    pupil = _pupil_region(image.pixels, seg)
    if not pupil.any():
        return BinaryMask(np.zeros((h, w), bool), "coarse")
    cy, cx = ndimage.center_of_mass(pupil)
    r_pupil = np.sqrt(pupil.sum() / np.pi)

    smooth = ndimage.gaussian_filter(px, seg.gradient_smoothing)
    angles = 2 * np.pi * np.arange(seg.ray_count) / seg.ray_count
    r_max = int(min(max(cx, w - cx), max(cy, h - cy), 0.5 * np.hypot(h, w)))
    radii = np.arange(0, r_max, dtype=float)
    xs = cx + np.cos(angles)[:, None] * radii[None, :]
    ys = cy - np.sin(angles)[:, None] * radii[None, :]
    prof = ndimage.map_coordinates(smooth, [ys, xs], order=1, mode="nearest")
    grad = np.diff(prof, axis=1)
    start = int(np.ceil(r_pupil * 1.3)) + 2
    grad[:, :start] = -np.inf
    outer = np.argmax(grad, axis=1).astype(float) + 0.5
    if seg.radius_filter > 1:
        outer = ndimage.median_filter(outer, size=seg.radius_filter, mode="wrap")

    yy, xx = np.mgrid[0:h, 0:w]
    dx, dy = xx - cx, cy - yy
    rho = np.hypot(dx, dy)
    ang_idx = np.rint(np.mod(np.arctan2(dy, dx), 2 * np.pi) / (2 * np.pi) * seg.ray_count).astype(int)
    ang_idx %= seg.ray_count
    iris = (rho <= outer[ang_idx]) & ~pupil
    return BinaryMask(iris, "coarse")
