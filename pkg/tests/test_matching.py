import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pmiris.encoding import IrisCode
from pmiris.matching import (IncompatibleCodes, MatchResult, NormContext, UndefinedScore, estimate_N,
                             hamming_at_shift, match_codes, match_pairs, normalize_score, with_normalization)

FP = b"\x01" * 8
NBITS, COLS = 1536, 32


def rand_code(rng, mask_p=1.0, fp=FP):
    bits = rng.random(NBITS) < 0.5
    mask = rng.random(NBITS) < mask_p if mask_p < 1 else np.ones(NBITS, bool)
    return IrisCode.from_bits(bits, mask, COLS, fp)


def test_self_match(rng):
    a = rand_code(rng, 0.8)
    hd, n = hamming_at_shift(a, a, 0)
    assert hd == 0.0 and n == int(a.mask_bits().sum())
    r = match_codes(a, a, 0)
    assert (r.hd_raw, r.best_shift) == (0.0, 0)


def test_complement(rng):
    a = rand_code(rng)
    b = IrisCode.from_bits(~a.code_bits(), a.mask_bits(), COLS, FP)
    assert hamming_at_shift(a, b, 0) == (1.0, NBITS)


def test_random_codes_binomial(rng):
    hds = np.array([hamming_at_shift(rand_code(rng), rand_code(rng), 0)[0] for _ in range(1000)])
    sigma = math.sqrt(0.25 / NBITS) / math.sqrt(len(hds))
    assert abs(hds.mean() - 0.5) <= 3 * sigma


def test_symmetry(rng):
    for _ in range(500):
        a, b = rand_code(rng, 0.8), rand_code(rng, 0.8)
        ab, ba = match_codes(a, b), match_codes(b, a)
        assert ab.hd_raw == ba.hd_raw
        if ab.hd_raw is not None and ab.best_shift != 0:
            # mirrored shift reaches the same minimum
            assert hamming_at_shift(b, a, -ab.best_shift)[0] == ab.hd_raw


@pytest.mark.parametrize("k", range(-8, 9))
def test_shift_recovery(k, rng):
    a = rand_code(rng, 0.9)
    r = match_codes(a, a.rolled(k), 8)
    assert r.best_shift == -k and r.hd_raw == 0.0


def test_shift_convention_matches_roll(rng):
    a, b = rand_code(rng), rand_code(rng)
    for s in (-3, 0, 5):
        brute = np.roll(b.code_bits().reshape(COLS, -1), s, axis=0).ravel()
        expect = np.mean(a.code_bits() != brute)
        assert hamming_at_shift(a, b, s)[0] == pytest.approx(expect, abs=0)


def test_tie_prefers_negative_shift(rng):
    # columns alternate between two patterns, so rolling by 2 is the identity
    x, y = rng.random(48) < 0.5, rng.random(48) < 0.5
    bits = np.concatenate([x if j % 2 == 0 else y for j in range(COLS)])
    a = IrisCode.from_bits(bits, np.ones(NBITS, bool), COLS, FP)
    r = match_codes(a, a.rolled(1), 8)
    assert r.hd_raw == 0.0 and r.best_shift == -1
    r = match_codes(a, a, 8)
    assert r.best_shift == 0


def test_no_overlap():
    m1 = np.zeros(NBITS, bool)
    m1[: NBITS // 2] = True
    a = IrisCode.from_bits(np.zeros(NBITS, bool), m1, COLS, FP)
    b = IrisCode.from_bits(np.ones(NBITS, bool), ~m1, COLS, FP)
    assert hamming_at_shift(a, b, 0) == (None, 0)
    r = match_codes(a, b, 0)
    assert r.hd_raw is None and r.n == 0 and not r.has_overlap
    # with shifts, overlapping columns appear and the no-overlap shift is skipped
    r = match_codes(a, b, 1)
    assert r.has_overlap and r.best_shift != 0 and r.hd_raw == 1.0


def test_fingerprint_mismatch(rng):
    with pytest.raises(IncompatibleCodes):
        match_codes(rand_code(rng), rand_code(rng, fp=b"\x02" * 8))
    short = IrisCode.from_bits(np.zeros(768, bool), np.ones(768, bool), COLS, FP)
    with pytest.raises(IncompatibleCodes):
        hamming_at_shift(rand_code(rng), short)


def test_mask_clearing_never_raises_n(rng):
    a, b = rand_code(rng, 0.9), rand_code(rng, 0.9)
    n0 = hamming_at_shift(a, b, 2)[1]
    cleared = a.mask_bits() & (rng.random(NBITS) > 0.3)
    assert hamming_at_shift(a.with_mask(cleared), b, 2)[1] <= n0


def test_match_pairs_agrees(rng):
    codes = [rand_code(rng, 0.7) for _ in range(6)]
    pairs = [(i, j) for i in range(6) for j in range(i + 1, 6)]
    batch = match_pairs(codes, pairs, 8)
    assert batch == [match_codes(codes[i], codes[j], 8) for i, j in pairs]


def test_random_impostor_minimum_below_half(rng):
    # the minimum over 17 shifts of independent 1536-bit codes sits well under 0.5
    mins = [match_codes(rand_code(rng), rand_code(rng), 8).hd_raw for _ in range(300)]
    assert 0.46 < np.mean(mins) < 0.49
    assert max(mins) < 0.5


# -- score normalization -------------------------------------------------------------

def test_normalize_worked_value():
    v = normalize_score(0.3, 455, NormContext(911))
    assert abs(v - (0.5 - 0.2 * math.sqrt(455 / 911))) <= 1e-9
    assert round(v, 5) == 0.35866


def test_normalize_fixed_point(rng):
    for n, N in zip(rng.integers(1, 1537, 10_000), rng.uniform(1, 1536, 10_000)):
        assert normalize_score(0.5, int(n), float(N)) == 0.5


@settings(max_examples=300)
@given(st.floats(0, 1), st.integers(1, 1536))
def test_normalize_identity_at_N(hd, N):
    assert normalize_score(hd, N, NormContext(N)) == hd


@settings(max_examples=200)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 1536), st.integers(1, 1536))
def test_normalize_monotone(h1, h2, n, N):
    a, b = normalize_score(h1, n, N), normalize_score(h2, n, N)
    if h1 < h2:
        assert a <= b


@settings(max_examples=200)
@given(st.floats(0, 1).filter(lambda h: abs(h - 0.5) > 1e-6), st.integers(2, 1536), st.integers(1, 1536))
def test_fewer_bits_pull_toward_half(hd, n, N):
    assert abs(normalize_score(hd, n - 1, N) - 0.5) < abs(normalize_score(hd, n, N) - 0.5)


def test_normalize_errors():
    with pytest.raises(UndefinedScore):
        normalize_score(0.3, 0, 900)
    with pytest.raises(ValueError):
        NormContext(0)
    # no clamping: a large n pushes past the raw score
    assert normalize_score(0.1, 1600, 400) == pytest.approx(0.5 - 0.4 * 2)


def test_estimate_N():
    assert estimate_N([MatchResult(0.4, 0, 900)] * 5).N == 900
    assert estimate_N([800, 1000]).N == 900
    with pytest.raises(ValueError):
        estimate_N([])
    with pytest.raises(ValueError):
        estimate_N([0, 10])
    with pytest.raises(ValueError):
        estimate_N([2000], total_bits=1536)


def test_with_normalization():
    r = with_normalization(MatchResult(0.3, 1, 455), NormContext(911))
    assert r.hd_norm == normalize_score(0.3, 455, 911)
    none = MatchResult(None, 0, 0)
    assert with_normalization(none, NormContext(911)) is none


def test_throughput_soft(rng):
    a, b = rand_code(rng, 0.8), rand_code(rng, 0.8)
    match_codes(a, b)
    n = 20_000
    t = time.perf_counter()
    for _ in range(n):
        match_codes(a, b)
    per_minute = n / (time.perf_counter() - t) * 60
    print(f"match_codes throughput: {per_minute:,.0f} calls/min")
    assert per_minute >= 1e6
