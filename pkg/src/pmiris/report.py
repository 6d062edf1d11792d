"""Evaluation report assembly: JSON summary, curve CSVs and SVG plots."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence

from .config import PipelineConfig
from .evaluation import (ComparisonRow, DynamicsPoint, ScoreRecord, ScoreSet, compute_cmc, compute_roc,
                         expected_pair_counts, fnmr_at_fmr, normalized, scoreset_from_rows,
                         subset_by_horizon, write_dynamics_csv)
from .manifest import Manifest

REPORT_VERSION = 1


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _label(bound: float, direction: str) -> str:
    return f"{'le' if direction == 'at_most' else 'ge'}{bound:g}h"


class _Scores:
    """Scores of one matcher plus the pairs it could not score."""

    def __init__(self, scores: ScoreSet, no_overlap: Sequence[tuple[str, str, str]] = (), normalize: bool = False):
        self.scores = scores
        self.no_overlap = list(no_overlap)
        self.normalize = normalize

    def restrict(self, ids) -> ScoreSet:
        ids = set(ids)
        sc = self.scores.restrict(ids)
        k = sum(1 for a, b, _ in self.no_overlap if a in ids and b in ids)
        return ScoreSet(sc.records, sc.source, sc.score_direction, k)

    def variants(self, sc: ScoreSet):
        """``(name, scores, N)`` for raw and, if enabled, normalized scores."""
        out = [("raw", sc, None)]
        if self.normalize and sc.counts()["impostor"] > 0:
            ns, ctx = normalized(sc)
            out.append(("norm", ns, ctx.N))
        return out

    def for_ranking(self, sc: ScoreSet, ids) -> ScoreSet:
        # a pair without common bits cannot support a match: rank it last
        ids = set(ids)
        extra = tuple(ScoreRecord(a, b, lab, math.inf, 0) for a, b, lab in self.no_overlap
                      if a in ids and b in ids)
        return ScoreSet(sc.records + extra, sc.source, sc.score_direction)


def _two_class(counts: dict) -> bool:
    return counts["genuine"] > 0 and counts["impostor"] > 0


def verification_entry(manifest: Manifest, src: _Scores, config: PipelineConfig, bound: float,
                       curves: dict, tag: str) -> dict:
    sub = subset_by_horizon(manifest, bound, "at_most")
    sc = src.restrict(r.sample_id for r in sub)
    entry = {"subset": {"bound_hours": bound, "direction": "at_most"}, "samples": len(sub),
             "expected_pairs": expected_pair_counts(sub), "comparisons": sc.counts()}
    if not _two_class(entry["comparisons"]):
        entry["status"] = "skipped: one-class score set"
        return entry
    entry["status"] = "ok"
    for name, s, N in src.variants(sc):
        if N is not None:
            entry["N"] = N
        roc = compute_roc(s, config.roc_resolution)
        op = fnmr_at_fmr(s, config.fmr_max)
        entry[f"eer_{name}"] = roc.eer
        entry[f"eer_threshold_{name}"] = roc.eer_threshold
        entry[f"fnmr_at_fmr_{name}"] = {"fmr_max": config.fmr_max, "threshold": op.threshold,
                                        "fnmr": op.fnmr, "fmr": op.fmr}
        curves[f"{tag}roc_{_label(bound, 'at_most')}_{name}"] = roc
    return entry


def identification_entry(manifest: Manifest, src: _Scores, config: PipelineConfig, bound: float,
                         curves: dict, tag: str) -> dict:
    probes = list(subset_by_horizon(manifest, bound, "at_least"))
    ids = [r.sample_id for r in manifest]
    entry = {"subset": {"bound_hours": bound, "direction": "at_least"}}
    for name, s, N in src.variants(src.restrict(ids)):
        if N is not None:
            entry["N"] = N
        cmc = compute_cmc(manifest, src.for_ranking(s, ids), config.max_rank, probes)
        entry.update(gallery_size=cmc.gallery_size, probe_count=cmc.probe_count,
                     excluded_probes=cmc.excluded_probes)
        if cmc.probe_count == 0:
            entry["status"] = "skipped: no probes"
            return entry
        entry["status"] = "ok"
        entry[f"rank1_{name}"] = cmc.rate(1)
        entry[f"rank{config.max_rank}_{name}"] = cmc.rate(config.max_rank)
        curves[f"{tag}cmc_{_label(bound, 'at_least')}_{name}"] = cmc
    return entry


def dynamics_series(manifest: Manifest, src: _Scores, config: PipelineConfig, curves: dict, tag: str) -> dict:
    """FNMR at the FMR bound per cumulative horizon; N re-estimated per horizon."""
    series: dict[str, list[DynamicsPoint]] = {"raw": []}
    if src.normalize:
        series["norm"] = []
    for h in config.fnmr_horizons:
        sc = src.restrict(r.sample_id for r in subset_by_horizon(manifest, h, "at_most"))
        c = sc.counts()
        if not _two_class(c):
            for pts in series.values():
                pts.append(DynamicsPoint(h, None, None, c["genuine"], c["impostor"], True))
            continue
        for name, s, _ in src.variants(sc):
            op = fnmr_at_fmr(s, config.fmr_max)
            series[name].append(DynamicsPoint(h, op.fnmr, op.threshold, c["genuine"], c["impostor"]))
    out = {}
    for name, pts in series.items():
        curves[f"{tag}fnmr_dynamics_{name}"] = pts
        out[name] = [{"horizon_hours": p.horizon, "fnmr": p.fnmr, "threshold": p.threshold,
                      "genuine": p.genuine, "impostor": p.impostor, "flagged": p.flagged} for p in pts]
    return out


def _section(manifest: Manifest, src: _Scores, config: PipelineConfig, curves: dict, tag: str) -> dict:
    return {
        "comparisons": src.restrict(r.sample_id for r in manifest).counts(),
        "verification": [verification_entry(manifest, src, config, h, curves, tag) for h in config.roc_horizons],
        "identification": [identification_entry(manifest, src, config, h, curves, tag) for h in config.cmc_horizons],
        "fnmr_dynamics": dynamics_series(manifest, src, config, curves, tag),
    }


def build_report(manifest: Manifest, rows: Sequence[ComparisonRow], config: PipelineConfig,
                 skipped=(), external: ScoreSet | None = None) -> tuple[dict, dict]:
    """Report dict and the curves behind it, keyed by export name.

    Internal metrics run on the samples that produced a code; skipped samples
    are listed and their pairs are absent from the comparison counts. The
    gallery for identification is chosen among those samples.
    """
    skipped = list(skipped)
    skipped_ids = {s.sample_id for s in skipped}
    present = manifest.filter(lambda r: r.sample_id not in skipped_ids)
    internal = _Scores(scoreset_from_rows(rows, "hd_raw"),
                       [(r.sample_a, r.sample_b, r.label) for r in rows if not r.result.has_overlap],
                       config.score_norm)
    curves: dict = {}
    report = {
        "report_version": REPORT_VERSION,
        "config_fingerprint": config.fingerprint(),
        "score_normalization": config.score_norm,
        "n_policy": config.n_policy,
        "max_shift": config.max_shift,
        "samples": {"manifest": len(manifest), "evaluated": len(present),
                    "skipped": [s.to_dict() for s in skipped]},
        "expected_pairs": expected_pair_counts(manifest),
        "internal": _section(present, internal, config, curves, ""),
    }
    if external is not None:
        # scores from another matcher are used as given, no normalization
        report["external"] = _section(manifest, _Scores(external), config, curves, "external_")
    return _clean(report), curves


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float):
        return _num(obj)
    return obj


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(out_dir, report: dict, curves: dict, plots: bool = True) -> Path:
    out = Path(out_dir)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    path = out / "report.json"
    path.write_text(report_json(report), encoding="utf-8")
    for name, c in sorted(curves.items()):
        if isinstance(c, list):
            write_dynamics_csv(c, out / "curves" / f"{name}.csv")
        else:
            c.write_csv(out / "curves" / f"{name}.csv")
    if plots:
        from .plots import plot_curves

        plot_curves(curves, out / "plots")
    return path
