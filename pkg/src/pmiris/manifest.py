"""Dataset manifests, grayscale images and binary masks.

The manifest is a UTF-8 CSV with the header::

    sample_id,subject_id,eye,capture_hours,session_index,image_path,coarse_mask_path,fine_mask_path

Mask paths may be empty. Relative paths are resolved against the directory
holding the manifest.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from PIL import Image

MANIFEST_FIELDS = (
    "sample_id",
    "subject_id",
    "eye",
    "capture_hours",
    "session_index",
    "image_path",
    "coarse_mask_path",
    "fine_mask_path",
)
EYES = ("left", "right")
MASK_SEMANTICS = ("coarse", "fine")
MIN_IMAGE_SIDE = 64


class ManifestError(ValueError):
    """Malformed manifest content."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateSampleError(ManifestError):
    def __init__(self, sample_id: str, line: int | None = None):
        self.sample_id = sample_id
        super().__init__(f"duplicate sample_id {sample_id!r}", line)


class EmptyMaskWarning(UserWarning):
    """A mask file contains no foreground pixels."""


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    subject_id: str
    eye: str
    capture_hours: float
    session_index: int
    image_path: Path
    coarse_mask_path: Path | None = None
    fine_mask_path: Path | None = None

    def __post_init__(self):
        if self.eye not in EYES:
            raise ValueError(f"eye must be one of {EYES}, got {self.eye!r}")
        if not (self.capture_hours >= 0 and math.isfinite(self.capture_hours)):
            raise ValueError(f"capture_hours must be finite and >= 0, got {self.capture_hours}")
        if self.session_index < 1:
            raise ValueError(f"session_index must be positive, got {self.session_index}")

    @property
    def identity(self) -> tuple[str, str]:
        """Key that decides genuine vs impostor: (subject_id, eye)."""
        return (self.subject_id, self.eye)


@dataclass(frozen=True)
class Manifest(Sequence):
    records: tuple[SampleRecord, ...] = ()
    warnings: tuple[str, ...] = ()
    root: Path | None = None

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.sample_id in seen:
                raise DuplicateSampleError(rec.sample_id)
            seen.add(rec.sample_id)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def __iter__(self) -> Iterator[SampleRecord]:
        return iter(self.records)

    def by_id(self) -> dict[str, SampleRecord]:
        return {r.sample_id: r for r in self.records}

    def filter(self, predicate) -> "Manifest":
        return Manifest(tuple(r for r in self.records if predicate(r)), self.warnings, self.root)

    def check_sessions(self) -> list[str]:
        """Return problems where session order contradicts capture hours per eye."""
        groups: dict[tuple[str, str], list[SampleRecord]] = {}
        for r in self.records:
            groups.setdefault(r.identity, []).append(r)
        problems = []
        for key, recs in groups.items():
            recs = sorted(recs, key=lambda r: (r.session_index, r.capture_hours))
            for a, b in zip(recs, recs[1:]):
                if b.session_index > a.session_index and b.capture_hours < a.capture_hours:
                    problems.append(
                        f"{key[0]}/{key[1]}: session {b.session_index} ({b.sample_id}) captured "
                        f"before session {a.session_index} ({a.sample_id})"
                    )
        return problems


@dataclass(frozen=True, eq=False)
class IrisImage:
    """8-bit grayscale image, row-major ``(height, width)``."""

    pixels: np.ndarray
    sample_id: str = ""

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError("image must be single channel")
        if px.dtype != np.uint8:
            px = np.clip(np.rint(px), 0, 255).astype(np.uint8)
        h, w = px.shape
        if h < MIN_IMAGE_SIDE or w < MIN_IMAGE_SIDE:
            raise ValueError(f"image {w}x{h} smaller than {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray
    semantics: str = "coarse"

    def __post_init__(self):
        if self.semantics not in MASK_SEMANTICS:
            raise ValueError(f"semantics must be one of {MASK_SEMANTICS}")
        b = np.asarray(self.bits, dtype=bool)
        if b.ndim != 2:
            raise ValueError("mask must be 2-D")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    def with_semantics(self, semantics: str) -> "BinaryMask":
        return BinaryMask(self.bits, semantics)


def _opt_path(value: str, root: Path) -> Path | None:
    value = value.strip()
    if not value:
        return None
    p = Path(value)
    return p if p.is_absolute() else root / p


def load_manifest(path) -> Manifest:
    """Parse a manifest CSV.

    Missing image or mask files are reported in ``Manifest.warnings`` rather
    than raised, so partially populated datasets can still be inspected.
    """
    path = Path(path)
    root = path.parent
    records: list[SampleRecord] = []
    notes: list[str] = []
    seen: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError("empty manifest, header required", 1) from None
        header = [h.strip() for h in header]
        if tuple(header) != MANIFEST_FIELDS:
            raise ManifestError(f"unexpected header {header}", 1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(MANIFEST_FIELDS):
                raise ManifestError(f"expected {len(MANIFEST_FIELDS)} fields, got {len(row)}", line)
            values = dict(zip(MANIFEST_FIELDS, row))
            sid = values["sample_id"].strip()
            if not sid:
                raise ManifestError("empty sample_id", line)
            if sid in seen:
                raise DuplicateSampleError(sid, line)
            seen[sid] = line
            try:
                rec = SampleRecord(
                    sample_id=sid,
                    subject_id=values["subject_id"].strip(),
                    eye=values["eye"].strip().lower(),
                    capture_hours=float(values["capture_hours"]),
                    session_index=int(values["session_index"]),
                    image_path=_opt_path(values["image_path"], root) or root,
                    coarse_mask_path=_opt_path(values["coarse_mask_path"], root),
                    fine_mask_path=_opt_path(values["fine_mask_path"], root),
                )
            except ValueError as exc:
                raise ManifestError(str(exc), line) from None
            if not values["image_path"].strip():
                raise ManifestError("empty image_path", line)
            for label, p in (("image", rec.image_path), ("coarse mask", rec.coarse_mask_path),
                             ("fine mask", rec.fine_mask_path)):
                if p is not None and not p.exists():
                    notes.append(f"{sid}: {label} file not found: {p}")
            records.append(rec)
    return Manifest(tuple(records), tuple(notes), root)


def _rel(p: Path | None, root: Path) -> str:
    if p is None:
        return ""
    try:
        return Path(os.path.relpath(p, root)).as_posix()
    except ValueError:
        return str(p)


def format_hours(h: float) -> str:
    return repr(float(h)) if not float(h).is_integer() else str(int(h))


def write_manifest(records: Iterable[SampleRecord], path) -> Path:
    """Write records as a manifest CSV with paths relative to its directory."""
    path = Path(path)
    root = path.parent
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for r in records:
            w.writerow([
                r.sample_id, r.subject_id, r.eye, format_hours(r.capture_hours), r.session_index,
                _rel(r.image_path, root), _rel(r.coarse_mask_path, root), _rel(r.fine_mask_path, root),
            ])
    return path


def _read_gray(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "1", "P", "I", "I;16"):
                raise ValueError(f"{path}: expected single-channel image, got mode {im.mode}")
            return np.asarray(im.convert("L"), dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc


def load_image(path, sample_id: str = "") -> IrisImage:
    return IrisImage(_read_gray(path), sample_id)


def write_image(pixels: np.ndarray, path) -> Path:
    path = Path(path)
    Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="L").save(path, optimize=False)
    return path


def upscale_nearest(bits: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbour resize; target pixel ``i`` reads source ``floor(i * src / dst)``."""
    sh, sw = bits.shape
    rows = (np.arange(height) * sh) // height
    cols = (np.arange(width) * sw) // width
    return bits[rows[:, None], cols[None, :]]


def load_mask(path, target_width: int, target_height: int, semantics: str = "coarse") -> BinaryMask:
    """Read an 8-bit mask (foreground iff value > 127) at the given resolution."""
    raw = _read_gray(path)
    bits = raw > 127
    if bits.shape != (target_height, target_width):
        bits = upscale_nearest(bits, target_height, target_width)
    if not bits.any():
        warnings.warn(f"mask {path} has zero foreground area", EmptyMaskWarning, stacklevel=2)
    return BinaryMask(bits, semantics)


def write_mask(mask: BinaryMask | np.ndarray, path) -> Path:
    bits = mask.bits if isinstance(mask, BinaryMask) else np.asarray(mask, dtype=bool)
    return write_image(bits.astype(np.uint8) * 255, path)
