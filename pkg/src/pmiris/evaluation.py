"""Verification and identification metrics over comparison scores.

All scores are dissimilarities: a comparison is accepted as a match when its
score is at or below the threshold. So FMR(t) is the fraction of impostor
scores <= t and FNMR(t) the fraction of genuine scores > t.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .manifest import Manifest, SampleRecord
from .matching import MatchResult, NormContext, estimate_N, normalize_score

LABELS = ("genuine", "impostor")
SCORE_FIELDS = ("sample_a", "sample_b", "label", "hd_raw", "best_shift", "n", "hd_norm")
EXTERNAL_FIELDS = ("sample_a", "sample_b", "score")


class ScoreFileError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UnknownSampleError(ScoreFileError):
    def __init__(self, sample_id: str, line: int | None = None):
        self.sample_id = sample_id
        super().__init__(f"unknown sample id {sample_id!r}", line)


# -- pairs and subsets --------------------------------------------------------------

def pair_label(a: SampleRecord, b: SampleRecord) -> str:
    return "genuine" if a.identity == b.identity else "impostor"


def gen_pairs(manifest: Manifest | Sequence[SampleRecord],
              predicate: Callable[[SampleRecord], bool] | None = None) -> list[tuple[str, str, str]]:
    """Every unordered pair once, in manifest order, labelled by (subject, eye)."""
    recs = [r for r in manifest if predicate is None or predicate(r)]
    if len(recs) < 2:
        raise ValueError("need at least two samples to form pairs")
    return [(a.sample_id, b.sample_id, pair_label(a, b)) for a, b in itertools.combinations(recs, 2)]


def expected_pair_counts(manifest: Iterable[SampleRecord]) -> dict[str, int]:
    """Closed-form pair counts: M(M-1)/2 total, sum of m(m-1)/2 per identity genuine."""
    groups: dict[tuple[str, str], int] = {}
    m = 0
    for r in manifest:
        groups[r.identity] = groups.get(r.identity, 0) + 1
        m += 1
    total = m * (m - 1) // 2
    genuine = sum(g * (g - 1) // 2 for g in groups.values())
    return {"total": total, "genuine": genuine, "impostor": total - genuine}


def subset_by_horizon(manifest: Manifest, bound_hours: float, direction: str = "at_most") -> Manifest:
    if bound_hours < 0:
        raise ValueError("bound must be >= 0")
    if direction == "at_most":
        return manifest.filter(lambda r: r.capture_hours <= bound_hours)
    if direction == "at_least":
        return manifest.filter(lambda r: r.capture_hours >= bound_hours)
    raise ValueError(f"direction must be 'at_most' or 'at_least', got {direction!r}")


# -- score sets ---------------------------------------------------------------------

@dataclass(frozen=True)
class ScoreRecord:
    sample_a: str
    sample_b: str
    label: str
    score: float
    n: int | None = None

    @property
    def genuine(self) -> bool:
        return self.label == "genuine"


@dataclass(frozen=True)
class ScoreSet:
    records: tuple[ScoreRecord, ...]
    source: str = "internal"
    score_direction: str = "dissimilarity"
    no_overlap: int = 0

    def __len__(self) -> int:
        return len(self.records)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        g = np.array([r.score for r in self.records if r.genuine], dtype=float)
        i = np.array([r.score for r in self.records if not r.genuine], dtype=float)
        return g, i

    def counts(self) -> dict[str, int]:
        g = sum(r.genuine for r in self.records)
        return {"genuine": g, "impostor": len(self.records) - g, "no_overlap": self.no_overlap}

    def restrict(self, sample_ids: Iterable[str], no_overlap_pairs: Iterable[tuple[str, str]] = ()) -> "ScoreSet":
        ids = set(sample_ids)
        recs = tuple(r for r in self.records if r.sample_a in ids and r.sample_b in ids)
        skipped = sum(1 for a, b in no_overlap_pairs if a in ids and b in ids)
        return ScoreSet(recs, self.source, self.score_direction, skipped)

    def lookup(self) -> dict[frozenset, float]:
        return {frozenset((r.sample_a, r.sample_b)): r.score for r in self.records}


@dataclass(frozen=True)
class ComparisonRow:
    """One line of the score CSV."""

    sample_a: str
    sample_b: str
    label: str
    result: MatchResult


def comparison_rows(manifest: Manifest, pairs, results: Sequence[MatchResult]) -> list[ComparisonRow]:
    return [ComparisonRow(a, b, lab, res) for (a, b, lab), res in zip(pairs, results)]


def _fmt(x) -> str:
    return "" if x is None else repr(float(x)) if isinstance(x, float) else str(x)


def write_score_csv(rows: Iterable[ComparisonRow], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_FIELDS)
        for row in rows:
            r = row.result
            w.writerow([row.sample_a, row.sample_b, row.label, _fmt(r.hd_raw),
                        r.best_shift, r.n, _fmt(r.hd_norm)])
    return path


def read_score_csv(path) -> list[ComparisonRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != SCORE_FIELDS:
            raise ScoreFileError(f"expected header {','.join(SCORE_FIELDS)}", 1)
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != len(SCORE_FIELDS):
                raise ScoreFileError(f"expected {len(SCORE_FIELDS)} fields", line)
            a, b, label, hd_raw, shift, n, hd_norm = row
            if label not in LABELS:
                raise ScoreFileError(f"bad label {label!r}", line)
            try:
                res = MatchResult(float(hd_raw) if hd_raw else None, int(shift), int(n),
                                  float(hd_norm) if hd_norm else None)
            except ValueError as exc:
                raise ScoreFileError(str(exc), line) from None
            rows.append(ComparisonRow(a, b, label, res))
    return rows


def scoreset_from_rows(rows: Iterable[ComparisonRow], use: str = "hd_raw") -> ScoreSet:
    recs, skipped = [], 0
    for row in rows:
        r = row.result
        if not r.has_overlap:
            skipped += 1
            continue
        score = r.hd_raw if use == "hd_raw" else r.hd_norm
        if score is None:
            raise ValueError(f"{row.sample_a}/{row.sample_b}: no {use} value")
        recs.append(ScoreRecord(row.sample_a, row.sample_b, row.label, score, r.n))
    return ScoreSet(tuple(recs), "internal", no_overlap=skipped)


def normalized(scores: ScoreSet) -> tuple[ScoreSet, NormContext]:
    """Normalized copy of an internal score set, N estimated from its own impostors."""
    ctx = estimate_N([r.n for r in scores.records if not r.genuine])
    recs = tuple(ScoreRecord(r.sample_a, r.sample_b, r.label, normalize_score(r.score, r.n, ctx), r.n)
                 for r in scores.records)
    return ScoreSet(recs, scores.source, scores.score_direction, scores.no_overlap), ctx


def import_external_scores(path, manifest: Manifest) -> ScoreSet:
    """Read ``sample_a,sample_b,score`` rows from another matcher, labelled from the manifest.

    Scores are used exactly as given.
    """
    by_id = manifest.by_id()
    recs = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != EXTERNAL_FIELDS:
            raise ScoreFileError(f"expected header {','.join(EXTERNAL_FIELDS)}", 1)
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != 3:
                raise ScoreFileError("expected 3 fields", line)
            a, b, s = (c.strip() for c in row)
            for sid in (a, b):
                if sid not in by_id:
                    raise UnknownSampleError(sid, line)
            try:
                score = float(s)
            except ValueError:
                raise ScoreFileError(f"score {s!r} is not a number", line) from None
            if not math.isfinite(score):
                raise ScoreFileError("score must be finite", line)
            recs.append(ScoreRecord(a, b, pair_label(by_id[a], by_id[b]), score))
    return ScoreSet(tuple(recs), "external")


def write_external_scoreset(scores: ScoreSet, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("sample_a", "sample_b", "label", "score"))
        for r in scores.records:
            w.writerow((r.sample_a, r.sample_b, r.label, repr(float(r.score))))
    return path


# -- ROC / EER ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RocCurve:
    thresholds: np.ndarray
    fmr: np.ndarray
    fnmr: np.ndarray
    eer: float
    eer_threshold: float

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.fmr.tolist(), self.fnmr.tolist()))

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("threshold", "fmr", "fnmr"))
            for t, a, b in self.points:
                w.writerow((repr(t), repr(a), repr(b)))
        return path


def _two_class(scores: ScoreSet):
    g, i = scores.arrays()
    if len(g) == 0 or len(i) == 0:
        raise ValueError("need at least one genuine and one impostor score")
    return np.sort(g), np.sort(i)


def error_rates(genuine_sorted: np.ndarray, impostor_sorted: np.ndarray, thresholds) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(thresholds, float)
    fmr = np.searchsorted(impostor_sorted, t, side="right") / len(impostor_sorted)
    n_g = len(genuine_sorted)
    fnmr = (n_g - np.searchsorted(genuine_sorted, t, side="right")) / n_g
    return fmr, fnmr


def compute_roc(scores: ScoreSet, resolution: int | None = None) -> RocCurve:
    """Error rates at every observed score (or ``resolution`` score quantiles).

    The EER is read off where FMR - FNMR changes sign, interpolating linearly
    between the two bracketing thresholds. Before the lowest threshold the
    curve starts at FMR=0, FNMR=1.
    """
    g, i = _two_class(scores)
    allscores = np.concatenate([g, i])
    thresholds = np.unique(allscores)
    if resolution is not None and len(thresholds) > resolution:
        q = np.linspace(0.0, 1.0, resolution)
        thresholds = np.unique(np.quantile(allscores, q, method="inverted_cdf"))
    fmr, fnmr = error_rates(g, i, thresholds)
    eer, eer_t = _eer(thresholds, fmr, fnmr)
    return RocCurve(thresholds, fmr, fnmr, eer, eer_t)


def _eer(t, fmr, fnmr) -> tuple[float, float]:
    d = fmr - fnmr  # non-decreasing in t
    k = int(np.argmax(d >= 0)) if np.any(d >= 0) else len(d)
    if k == len(d):  # cannot happen: at the top threshold FNMR is 0
        return float(fmr[-1]), float(t[-1])
    if k == 0:
        lam = 1.0 / (1.0 + fmr[0] - fnmr[0])
        return float(lam * fmr[0]), float(t[0])
    lam = -d[k - 1] / (d[k] - d[k - 1])
    eer = fmr[k - 1] + lam * (fmr[k] - fmr[k - 1])
    thr = t[k - 1] + lam * (t[k] - t[k - 1])
    return float(eer), float(thr)


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    fnmr: float
    fmr: float


def fnmr_at_fmr(scores: ScoreSet, fmr_max: float = 0.01) -> OperatingPoint:
    """FNMR at the largest threshold whose FMR stays at or below ``fmr_max``.

    With ``m = floor(fmr_max * n_impostor)`` impostors allowed, that threshold
    is the float just below the ``(m+1)``-th smallest impostor score.
    """
    if not 0.0 < fmr_max <= 1.0:
        raise ValueError("fmr_max must be in (0, 1]")
    g, i = _two_class(scores)
    allowed = int(math.floor(fmr_max * len(i) + 1e-9))
    if allowed >= len(i):
        thr = float(max(g[-1], i[-1]))
    else:
        thr = float(np.nextafter(i[allowed], -np.inf))
    fmr, fnmr = error_rates(g, i, [thr])
    return OperatingPoint(thr, float(fnmr[0]), float(fmr[0]))


def fmr_at_fnmr(scores: ScoreSet, fnmr_target: float) -> OperatingPoint:
    """Lowest FMR among thresholds whose FNMR does not exceed ``fnmr_target``."""
    g, i = _two_class(scores)
    k = int(math.ceil(len(g) * (1.0 - fnmr_target) - 1e-9))  # genuine scores that must be accepted
    k = min(max(k, 0), len(g))
    thr = float(g[k - 1]) if k > 0 else float(np.nextafter(min(g[0], i[0]), -np.inf))
    fmr, fnmr = error_rates(g, i, [thr])
    return OperatingPoint(thr, float(fnmr[0]), float(fmr[0]))


# -- CMC ------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CmcCurve:
    ranks: np.ndarray
    rates: np.ndarray
    gallery_size: int
    probe_count: int
    excluded_probes: int = 0

    def rate(self, k: int) -> float:
        if k < 1:
            raise ValueError("rank starts at 1")
        if k > len(self.rates):
            return float(self.rates[-1]) if k < self.gallery_size else 1.0 if self.probe_count else 0.0
        return float(self.rates[k - 1])

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("rank", "identification_rate"))
            for k, r in zip(self.ranks.tolist(), self.rates.tolist()):
                w.writerow((k, repr(r)))
        return path


def gallery_of(manifest: Iterable[SampleRecord]) -> dict[tuple[str, str], SampleRecord]:
    """First-session sample per (subject, eye); ties keep the earlier record."""
    gallery: dict[tuple[str, str], SampleRecord] = {}
    for r in manifest:
        cur = gallery.get(r.identity)
        if cur is None or (r.session_index, r.capture_hours) < (cur.session_index, cur.capture_hours):
            gallery[r.identity] = r
    return gallery


def mate_ranks(manifest: Manifest, scores: ScoreSet,
               probes: Iterable[SampleRecord] | None = None) -> tuple[np.ndarray, int, int]:
    """Rank of the enrolled mate for each probe; ties rank the mate last."""
    gallery = gallery_of(manifest)
    g_ids = {r.sample_id for r in gallery.values()}
    g_list = list(gallery.values())
    if probes is None:
        probes = [r for r in manifest if r.sample_id not in g_ids]
    else:
        probes = [r for r in probes if r.sample_id not in g_ids]
    table = scores.lookup()
    ranks, excluded = [], 0
    for p in probes:
        mate = gallery.get(p.identity)
        if mate is None:
            excluded += 1
            continue
        row = []
        for g in g_list:
            key = frozenset((p.sample_id, g.sample_id))
            if key not in table:
                raise KeyError(f"missing score for probe {p.sample_id} vs gallery {g.sample_id}")
            row.append(table[key])
        row = np.asarray(row)
        mate_score = table[frozenset((p.sample_id, mate.sample_id))]
        nonmates = np.array([g.identity != p.identity for g in g_list])
        ranks.append(1 + int(np.sum(row[nonmates] <= mate_score)))
    return np.asarray(ranks, dtype=int), len(g_list), excluded


def compute_cmc(manifest: Manifest, scores: ScoreSet, max_rank: int = 10,
                probes: Iterable[SampleRecord] | None = None) -> CmcCurve:
    """Closed-set identification against a first-session gallery.

    ``probes`` defaults to every non-gallery sample of the manifest.
    """
    if max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    ranks, gsize, excluded = mate_ranks(manifest, scores, probes)
    ks = np.arange(1, max_rank + 1)
    if len(ranks) == 0:
        rates = np.zeros(max_rank)
    else:
        rates = (ranks[None, :] <= ks[:, None]).mean(axis=1)
    return CmcCurve(ks, rates, gsize, len(ranks), excluded)


# -- FNMR dynamics ------------------------------------------------------------------

@dataclass(frozen=True)
class DynamicsPoint:
    horizon: float
    fnmr: float | None
    threshold: float | None
    genuine: int
    impostor: int
    flagged: bool = False


def fnmr_dynamics(manifest: Manifest, scores: ScoreSet, horizons: Sequence[float],
                  fmr_max: float = 0.01) -> list[DynamicsPoint]:
    if any(b < a for a, b in zip(horizons, horizons[1:])):
        raise ValueError("horizons must be ascending")
    out = []
    for h in horizons:
        sub = subset_by_horizon(manifest, h, "at_most")
        sc = scores.restrict(r.sample_id for r in sub)
        c = sc.counts()
        if c["genuine"] == 0 or c["impostor"] == 0:
            out.append(DynamicsPoint(float(h), None, None, c["genuine"], c["impostor"], True))
            continue
        op = fnmr_at_fmr(sc, fmr_max)
        out.append(DynamicsPoint(float(h), op.fnmr, op.threshold, c["genuine"], c["impostor"]))
    return out


def write_dynamics_csv(points: Sequence[DynamicsPoint], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("horizon_hours", "fnmr", "threshold", "genuine", "impostor", "flagged"))
        for p in points:
            w.writerow((repr(p.horizon), _fmt(p.fnmr), _fmt(p.threshold), p.genuine, p.impostor, int(p.flagged)))
    return path
