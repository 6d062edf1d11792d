"""Masked fractional Hamming distance with rotation compensation.

Codes are compared word by word (XOR, AND, popcount) on the column-word
layout from :mod:`pmiris.encoding`; a shift of ``s`` grid columns pairs
column ``j`` of ``a`` with column ``(j - s) mod C`` of ``b``, i.e. ``b`` is
rolled by ``s`` before comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .encoding import IrisCode


class IncompatibleCodes(ValueError):
    """Codes from different filter banks or of different sizes."""


class UndefinedScore(ValueError):
    """No commonly unmasked bits; the distance is undefined."""


@dataclass(frozen=True)
class MatchResult:
    hd_raw: float | None  # None when the codes share no unmasked bits at any shift
    best_shift: int
    n: int
    hd_norm: float | None = None

    @property
    def has_overlap(self) -> bool:
        return self.n > 0


@dataclass(frozen=True)
class NormContext:
    N: float

    def __post_init__(self):
        if not self.N > 0:
            raise ValueError("N must be positive")


@njit(cache=True, inline="always")
def _popcount(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)


@njit(cache=True)
def _counts_at(ca, ma, cb, mb, shift):
    cols, words = ca.shape
    diff = 0
    n = 0
    for j in range(cols):
        jb = (j - shift) % cols
        for w in range(words):
            common = ma[j, w] & mb[jb, w]
            n += np.int64(_popcount(common))
            diff += np.int64(_popcount((ca[j, w] ^ cb[jb, w]) & common))
    return diff, n


@njit(cache=True)
def _best_shift(ca, ma, cb, mb, max_shift):
    # visit 0, -1, +1, -2, +2, ...; only a strictly smaller distance replaces the best
    best_d = 0
    best_n = 0
    best_s = 0
    for step in range(2 * max_shift + 1):
        s = (step + 1) // 2
        if step % 2 == 1:
            s = -s
        d, n = _counts_at(ca, ma, cb, mb, s)
        if n == 0:
            continue
        if best_n == 0 or d * best_n < best_d * n:
            best_d = d
            best_n = n
            best_s = s
    return best_s, best_d, best_n


@njit(cache=True)
def _all_pairs(codes, masks, ia, ib, max_shift, out_shift, out_d, out_n):
    for p in range(ia.shape[0]):
        s, d, n = _best_shift(codes[ia[p]], masks[ia[p]], codes[ib[p]], masks[ib[p]], max_shift)
        out_shift[p] = s
        out_d[p] = d
        out_n[p] = n


def _check(a: IrisCode, b: IrisCode):
    if a.fingerprint != b.fingerprint:
        raise IncompatibleCodes(
            f"filter-bank fingerprints differ: {a.fingerprint.hex()} vs {b.fingerprint.hex()}")
    if a.n_bits != b.n_bits or a.code_words.shape != b.code_words.shape:
        raise IncompatibleCodes(f"code lengths differ: {a.n_bits} vs {b.n_bits}")


def hamming_at_shift(a: IrisCode, b: IrisCode, shift: int = 0) -> tuple[float | None, int]:
    """Fractional distance and common-bit count with ``b`` rolled by ``shift`` columns."""
    _check(a, b)
    d, n = _counts_at(a.code_words, a.mask_words, b.code_words, b.mask_words, int(shift))
    n = int(n)
    return (int(d) / n if n else None), n


def match_codes(a: IrisCode, b: IrisCode, max_shift: int = 8) -> MatchResult:
    """Minimum distance over shifts ``-max_shift..max_shift``.

    Ties go to the smaller ``|shift|``, then to the negative shift. Shifts with
    no common bits are skipped; if every shift has none the result carries
    ``hd_raw=None`` and ``n=0``.
    """
    _check(a, b)
    if max_shift < 0:
        raise ValueError("max_shift must be >= 0")
    s, d, n = _best_shift(a.code_words, a.mask_words, b.code_words, b.mask_words, int(max_shift))
    if n == 0:
        return MatchResult(None, 0, 0)
    return MatchResult(int(d) / int(n), int(s), int(n))


def match_pairs(codes: Sequence[IrisCode], pairs: Iterable[tuple[int, int]], max_shift: int = 8) -> list[MatchResult]:
    """Match many index pairs from one code list in a single compiled loop."""
    pairs = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
    if not len(codes):
        return []
    for c in codes[1:]:
        _check(codes[0], c)
    cw = np.stack([c.code_words for c in codes])
    mw = np.stack([c.mask_words for c in codes])
    k = len(pairs)
    sh = np.zeros(k, np.int64)
    dd = np.zeros(k, np.int64)
    nn = np.zeros(k, np.int64)
    _all_pairs(cw, mw, pairs[:, 0].copy(), pairs[:, 1].copy(), int(max_shift), sh, dd, nn)
    return [MatchResult(int(d) / int(n), int(s), int(n)) if n else MatchResult(None, 0, 0)
            for s, d, n in zip(sh, dd, nn)]


def normalize_score(hd_raw: float, n: int, ctx: NormContext | float) -> float:
    """Pull a raw distance toward 0.5 by ``sqrt(n / N)``; no clamping."""
    N = ctx.N if isinstance(ctx, NormContext) else float(ctx)
    if n <= 0:
        raise UndefinedScore("cannot normalize a score computed from zero bits")
    if not N > 0:
        raise ValueError("N must be positive")
    if n == N:
        return float(hd_raw)  # the factor is 1; skip the two roundings of 0.5 - (0.5 - x)
    return 0.5 - (0.5 - hd_raw) * math.sqrt(n / N)


def estimate_N(impostor_results: Iterable[MatchResult | int], total_bits: int | None = None) -> NormContext:
    """Mean common-bit count over impostor comparisons."""
    ns = [r.n if isinstance(r, MatchResult) else int(r) for r in impostor_results]
    if not ns:
        raise ValueError("no impostor comparisons to estimate N from")
    if any(n <= 0 for n in ns):
        raise ValueError("impostor comparisons without common bits cannot enter N")
    N = float(np.mean(ns))
    if total_bits is not None and N > total_bits:
        raise ValueError("N exceeds the code length")
    return NormContext(N)


def with_normalization(result: MatchResult, ctx: NormContext) -> MatchResult:
    if not result.has_overlap:
        return result
    return MatchResult(result.hd_raw, result.best_shift, result.n, normalize_score(result.hd_raw, result.n, ctx))
