"""Per-sample processing and all-pairs scoring, in memory or through files.

Each stage writes stable file names under its output directory and records
the config fingerprint next to its artifacts:

    segment  ->  masks/<id>_coarse.png, masks/<id>_fine.png, circles.json
    encode   ->  codes/<id>.irc, codes/index.json
    match    ->  scores.csv, scores.meta.json

Samples that cannot be processed are collected in a skip list instead of
aborting the batch.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .boundary import BoundaryCircles, FitError, fit_mask
from .config import PipelineConfig
from .encoding import FilterBank, IrisCode, build_filter_bank, encode, read_code, write_code
from .evaluation import ComparisonRow, gen_pairs, read_score_csv, write_score_csv
from .manifest import BinaryMask, Manifest, SampleRecord, load_image, load_mask, write_mask
from .matching import estimate_N, match_pairs, with_normalization
from .normalization import normalize
from .segmentation import MaskPair, SegmentationError, segment


class StageError(RuntimeError):
    """Stage inputs that cannot be combined (wrong fingerprint, missing artifacts)."""


@dataclass(frozen=True)
class Skip:
    sample_id: str
    stage: str
    reason: str

    def to_dict(self) -> dict:
        return {"sample_id": self.sample_id, "stage": self.stage, "reason": self.reason}

    @classmethod
    def from_dict(cls, d: dict) -> "Skip":
        return cls(d["sample_id"], d["stage"], d["reason"])


@dataclass(frozen=True, eq=False)
class Segmented:
    sample_id: str
    masks: MaskPair
    circles: BoundaryCircles
    debug: dict | None = None


def _dump_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise StageError(f"missing stage artifact {path}") from None


def _check_fingerprint(found: str | None, config: PipelineConfig, what: str):
    want = config.fingerprint()
    if found != want:
        raise StageError(f"{what} was produced with config fingerprint {found}, current config is {want}")


# -- segmentation --------------------------------------------------------------------

def segment_sample(record: SampleRecord, config: PipelineConfig, debug: bool = False) -> Segmented | Skip:
    try:
        image = load_image(record.image_path, record.sample_id)
        masks = segment(image, record, config.segmenter)
        config.hough.validate_for(*image.shape)
        info = {} if debug else None
        circles = fit_mask(masks.coarse, config.hough, debug=info)
    except (SegmentationError, FitError, FileNotFoundError, OSError, ValueError) as exc:
        reason = getattr(exc, "reason", None) or str(exc)
        return Skip(record.sample_id, "segment", f"{type(exc).__name__}: {reason}")
    return Segmented(record.sample_id, masks, circles, info)


def _segment_job(args):
    return segment_sample(*args)


def _pool_map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def run_segment(manifest: Manifest, config: PipelineConfig, workers: int = 1,
                debug: bool = False) -> tuple[list[Segmented], list[Skip]]:
    out = _pool_map(_segment_job, [(r, config, debug) for r in manifest], workers)
    return [o for o in out if isinstance(o, Segmented)], [o for o in out if isinstance(o, Skip)]


def write_segment_stage(out_dir, results: Sequence[Segmented], skipped: Sequence[Skip],
                        config: PipelineConfig) -> Path:
    out = Path(out_dir)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    samples = {}
    for s in results:
        write_mask(s.masks.coarse, out / "masks" / f"{s.sample_id}_coarse.png")
        write_mask(s.masks.fine, out / "masks" / f"{s.sample_id}_fine.png")
        entry = s.circles.to_dict()
        entry["fine_defaulted"] = s.masks.fine_defaulted
        samples[s.sample_id] = entry
        if s.debug is not None:
            (out / "debug").mkdir(exist_ok=True)
            _dump_json(s.debug, out / "debug" / f"{s.sample_id}_fit.json")
    return _dump_json({
        "config_fingerprint": config.fingerprint(),
        "samples": samples,
        "skipped": [k.to_dict() for k in skipped],
    }, out / "circles.json")


def read_segment_stage(seg_dir, manifest: Manifest, config: PipelineConfig) -> tuple[list[Segmented], list[Skip]]:
    seg_dir = Path(seg_dir)
    meta = _load_json(seg_dir / "circles.json")
    _check_fingerprint(meta.get("config_fingerprint"), config, "circles.json")
    results = []
    for r in manifest:
        entry = meta["samples"].get(r.sample_id)
        if entry is None:
            continue
        coarse = _read_bits(seg_dir / "masks" / f"{r.sample_id}_coarse.png", "coarse")
        fine = _read_bits(seg_dir / "masks" / f"{r.sample_id}_fine.png", "fine")
        circles = BoundaryCircles.from_dict(entry, config.hough.containment_slack)
        results.append(Segmented(r.sample_id, MaskPair(coarse, fine, bool(entry.get("fine_defaulted"))), circles))
    return results, [Skip.from_dict(d) for d in meta.get("skipped", [])]


def _read_bits(path, semantics) -> BinaryMask:
    from PIL import Image

    with Image.open(path) as im:
        w, h = im.size
    return load_mask(path, w, h, semantics)


# -- encoding ---------------------------------------------------------------------

def encode_sample(record: SampleRecord, seg: Segmented, config: PipelineConfig,
                  bank: FilterBank | None = None) -> IrisCode:
    bank = bank or build_filter_bank(config.bank)
    image = load_image(record.image_path, record.sample_id)
    h, w = config.polar_shape
    norm = normalize(image, seg.masks.fine, seg.circles, h, w)
    return encode(norm, bank, record.sample_id)


def _encode_job(args):
    record, seg, config = args
    return encode_sample(record, seg, config)


def run_encode(manifest: Manifest, segmented: Sequence[Segmented], config: PipelineConfig,
               workers: int = 1) -> list[IrisCode]:
    by_id = manifest.by_id()
    jobs = [(by_id[s.sample_id], s, config) for s in segmented]
    return _pool_map(_encode_job, jobs, workers)


def write_encode_stage(out_dir, codes: Sequence[IrisCode], skipped: Sequence[Skip],
                       config: PipelineConfig) -> Path:
    out = Path(out_dir) / "codes"
    out.mkdir(parents=True, exist_ok=True)
    for c in codes:
        write_code(c, out / f"{c.sample_id}.irc")
    bank = build_filter_bank(config.bank)
    return _dump_json({
        "config_fingerprint": config.fingerprint(),
        "bank_fingerprint": bank.fingerprint.hex(),
        "grid_cols": bank.grid_cols,
        "polar_width": config.bank.polar_width,
        "samples": [c.sample_id for c in codes],
        "skipped": [k.to_dict() for k in skipped],
    }, out / "index.json")


def read_encode_stage(codes_dir, config: PipelineConfig) -> tuple[list[IrisCode], list[Skip]]:
    codes_dir = Path(codes_dir)
    if (codes_dir / "codes" / "index.json").exists():
        codes_dir = codes_dir / "codes"
    meta = _load_json(codes_dir / "index.json")
    _check_fingerprint(meta.get("config_fingerprint"), config, "codes/index.json")
    codes = [read_code(codes_dir / f"{sid}.irc", meta["grid_cols"], meta["polar_width"])
             for sid in meta["samples"]]
    for c in codes:
        if c.fingerprint.hex() != meta["bank_fingerprint"]:
            raise StageError(f"code {c.sample_id} has filter-bank fingerprint {c.fingerprint.hex()}, "
                             f"index says {meta['bank_fingerprint']}")
    return codes, [Skip.from_dict(d) for d in meta.get("skipped", [])]


# -- matching ---------------------------------------------------------------------

def run_match(manifest: Manifest, codes: Sequence[IrisCode], config: PipelineConfig) -> tuple[list[ComparisonRow], float | None]:
    """All pairs of encoded samples, in manifest order.

    When normalization is on, ``hd_norm`` uses N from every impostor pair
    with overlap; reports re-estimate N per subset.
    """
    index = {c.sample_id: i for i, c in enumerate(codes)}
    present = manifest.filter(lambda r: r.sample_id in index)
    if len(present) < 2:
        raise StageError("fewer than two encoded samples; nothing to compare")
    pairs = gen_pairs(present)
    results = match_pairs(codes, [(index[a], index[b]) for a, b, _ in pairs], config.max_shift)
    N = None
    if config.score_norm:
        imp = [r for (_, _, lab), r in zip(pairs, results) if lab == "impostor" and r.has_overlap]
        if imp:
            ctx = estimate_N(imp)
            N = ctx.N
            results = [with_normalization(r, ctx) for r in results]
    return [ComparisonRow(a, b, lab, r) for (a, b, lab), r in zip(pairs, results)], N


def write_match_stage(out_dir, rows: Sequence[ComparisonRow], N: float | None, skipped: Sequence[Skip],
                      config: PipelineConfig) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = write_score_csv(rows, out / "scores.csv")
    _dump_json({
        "config_fingerprint": config.fingerprint(),
        "N": N,
        "comparisons": len(rows),
        "no_overlap": sum(not r.result.has_overlap for r in rows),
        "skipped": [k.to_dict() for k in skipped],
    }, out / "scores.meta.json")
    return path


def read_match_stage(scores_path, config: PipelineConfig) -> tuple[list[ComparisonRow], list[Skip]]:
    scores_path = Path(scores_path)
    if scores_path.is_dir():
        scores_path = scores_path / "scores.csv"
    meta = _load_json(scores_path.with_suffix(".meta.json"))
    _check_fingerprint(meta.get("config_fingerprint"), config, scores_path.name)
    return read_score_csv(scores_path), [Skip.from_dict(d) for d in meta.get("skipped", [])]


# -- one-shot ----------------------------------------------------------------------

def run_all(manifest: Manifest, config: PipelineConfig, workers: int = 1):
    """Segment, encode and match every sample; returns ``(rows, N, codes, skipped)``."""
    segmented, skipped = run_segment(manifest, config, workers)
    codes = run_encode(manifest, segmented, config, workers)
    rows, N = run_match(manifest, codes, config)
    return rows, N, codes, skipped


def mask_coverage(codes: Sequence[IrisCode]) -> dict[str, float]:
    return {c.sample_id: float(np.mean(c.mask_bits())) for c in codes}
