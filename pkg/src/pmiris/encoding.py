"""Gabor phase encoding of normalized iris texture into bit-packed codes.

Bit layout: the code is a ``(grid_cols, n_filters, grid_rows, 2)`` boolean
array (last axis: real bit, imaginary bit) flattened in C order. Grouping by
grid column first makes an eye rotation of ``k`` grid columns a rotation of
whole column words, which is what the matcher exploits.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .normalization import NormalizedIris

MAGIC = b"IRCD"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class GaborSpec:
    wavelength: float  # px along the kernel's carrier direction
    orientation: float = 0.0  # rad; 0 runs the carrier along the angular axis
    sigma_x: float | None = None  # defaults to wavelength / 2
    sigma_y: float | None = None
    size: tuple[int, int] | None = None  # (rows, cols), odd

    def resolved(self) -> "GaborSpec":
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        sx = self.sigma_x if self.sigma_x is not None else self.wavelength / 2
        sy = self.sigma_y if self.sigma_y is not None else self.wavelength / 2
        if self.size is None:
            size = (2 * math.ceil(1.5 * sy) + 1, 2 * math.ceil(1.5 * sx) + 1)
        else:
            size = tuple(int(v) for v in self.size)
        if size[0] % 2 == 0 or size[1] % 2 == 0:
            raise ValueError("kernel size must be odd")
        return GaborSpec(float(self.wavelength), float(self.orientation), float(sx), float(sy), size)


DEFAULT_FILTERS = (GaborSpec(18.0), GaborSpec(27.0), GaborSpec(36.0))


@dataclass(frozen=True)
class FilterBankConfig:
    filters: tuple[GaborSpec, ...] = DEFAULT_FILTERS
    grid_rows: int = 8
    grid_cols: int = 32
    polar_height: int = 64
    polar_width: int = 512
    coverage: float = 0.75

    def __post_init__(self):
        # store resolved specs so equal banks compare equal however they were written
        object.__setattr__(self, "filters", tuple(f.resolved() for f in self.filters))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["filters"] = [asdict(f) for f in self.filters]
        for f in d["filters"]:
            f["size"] = list(f["size"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FilterBankConfig":
        d = dict(d)
        if "filters" in d:
            d["filters"] = tuple(
                GaborSpec(**{**f, "size": tuple(f["size"]) if f.get("size") else None}) for f in d["filters"]
            )
        return cls(**d)


@dataclass(frozen=True, eq=False)
class FilterBank:
    config: FilterBankConfig
    kernels: tuple[np.ndarray, ...]  # complex, one per filter
    rows: np.ndarray  # application-point rows
    cols: np.ndarray  # application-point columns
    fingerprint: bytes  # 8 bytes

    @property
    def n_filters(self) -> int:
        return len(self.kernels)

    @property
    def n_points(self) -> int:
        return len(self.rows) * len(self.cols)

    @property
    def bits_per_col(self) -> int:
        return self.n_filters * len(self.rows) * 2

    @property
    def n_bits(self) -> int:
        return self.n_filters * self.n_points * 2

    @property
    def grid_cols(self) -> int:
        return len(self.cols)


def gabor_kernel(spec: GaborSpec) -> np.ndarray:
    """Complex Gabor kernel; the real part is shifted to zero mean."""
    spec = spec.resolved()
    kh, kw = spec.size
    v, u = np.mgrid[-(kh // 2):kh // 2 + 1, -(kw // 2):kw // 2 + 1].astype(float)
    c, s = math.cos(spec.orientation), math.sin(spec.orientation)
    xr = u * c + v * s
    yr = -u * s + v * c
    env = np.exp(-0.5 * (xr / spec.sigma_x) ** 2 - 0.5 * (yr / spec.sigma_y) ** 2)
    phase = 2 * np.pi * xr / spec.wavelength
    even = env * np.cos(phase)
    even -= even.mean()
    odd = env * np.sin(phase)
    return even + 1j * odd


def bank_fingerprint(config: FilterBankConfig) -> bytes:
    blob = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).digest()[:8]


def build_filter_bank(config: FilterBankConfig | None = None) -> FilterBank:
    config = config or FilterBankConfig()
    if not config.filters:
        raise ValueError("filter bank needs at least one filter")
    H, W = config.polar_height, config.polar_width
    if W % config.grid_cols:
        raise ValueError("polar width must be a multiple of grid_cols")
    if not 0 < config.grid_rows <= H:
        raise ValueError("grid_rows must be in 1..polar_height")
    if not 0.0 <= config.coverage <= 1.0:
        raise ValueError("coverage must be in [0, 1]")
    kernels = []
    for f in config.filters:
        r = f.resolved()
        if r.size[0] > H or r.size[1] > W:
            raise ValueError(f"kernel {r.size} larger than polar grid {(H, W)}")
        k = gabor_kernel(r)
        k.setflags(write=False)
        kernels.append(k)
    rows = ((np.arange(config.grid_rows) + 0.5) * H / config.grid_rows).astype(int)
    cols = np.arange(config.grid_cols) * (W // config.grid_cols)
    return FilterBank(config, tuple(kernels), rows, cols, bank_fingerprint(config))


@dataclass(frozen=True, eq=False)
class IrisCode:
    """Packed code and validity mask; one row of uint64 words per grid column."""

    code_words: np.ndarray
    mask_words: np.ndarray
    n_bits: int
    fingerprint: bytes
    sample_id: str = ""
    polar_width: int = 512

    @property
    def grid_cols(self) -> int:
        return self.code_words.shape[0]

    @property
    def bits_per_col(self) -> int:
        return self.n_bits // self.grid_cols

    @classmethod
    def from_bits(cls, code: np.ndarray, mask: np.ndarray, grid_cols: int, fingerprint: bytes,
                  sample_id: str = "", polar_width: int = 512) -> "IrisCode":
        """Build from flat canonical bit arrays (length divisible by ``grid_cols``)."""
        code = np.asarray(code, bool).ravel()
        mask = np.asarray(mask, bool).ravel()
        if code.shape != mask.shape or code.size % grid_cols:
            raise ValueError("code and mask must have equal length divisible by grid_cols")
        return cls(_pack_cols(code, grid_cols), _pack_cols(mask, grid_cols), code.size,
                   bytes(fingerprint), sample_id, polar_width)

    def code_bits(self) -> np.ndarray:
        return _unpack_cols(self.code_words, self.bits_per_col)

    def mask_bits(self) -> np.ndarray:
        return _unpack_cols(self.mask_words, self.bits_per_col)

    def rolled(self, columns: int) -> "IrisCode":
        """Code of the same eye rotated by ``columns`` grid columns (``np.roll`` sign)."""
        return IrisCode(np.roll(self.code_words, columns, axis=0), np.roll(self.mask_words, columns, axis=0),
                        self.n_bits, self.fingerprint, self.sample_id, self.polar_width)

    def with_mask(self, mask: np.ndarray) -> "IrisCode":
        return IrisCode.from_bits(self.code_bits(), mask, self.grid_cols, self.fingerprint,
                                  self.sample_id, self.polar_width)


def _pack_cols(bits: np.ndarray, grid_cols: int) -> np.ndarray:
    per_col = bits.size // grid_cols
    n_words = -(-per_col // 64)
    padded = np.zeros((grid_cols, n_words * 64), dtype=np.uint8)
    padded[:, :per_col] = bits.reshape(grid_cols, per_col)
    return np.packbits(padded, axis=1, bitorder="little").view("<u8").astype(np.uint64)


def _unpack_cols(words: np.ndarray, per_col: int) -> np.ndarray:
    raw = np.ascontiguousarray(words.astype("<u8")).view(np.uint8)
    bits = np.unpackbits(raw, axis=1, bitorder="little")[:, :per_col]
    return bits.astype(bool).ravel()


def _windows(arr: np.ndarray, rows: np.ndarray, cols: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Gather ``(n_rows * n_cols, kh * kw)`` windows; rows clamp, columns wrap."""
    H, W = arr.shape
    ri = np.clip(rows[:, None] + np.arange(kh) - kh // 2, 0, H - 1)
    ci = np.mod(cols[:, None] + np.arange(kw) - kw // 2, W)
    win = arr[ri[:, None, :, None], ci[None, :, None, :]]
    return np.ascontiguousarray(win.reshape(len(rows) * len(cols), kh * kw))


def filter_responses(norm: NormalizedIris, bank: FilterBank) -> np.ndarray:
    """Complex responses shaped ``(n_filters, grid_rows, grid_cols)``."""
    cfg = bank.config
    if norm.texture.shape != (cfg.polar_height, cfg.polar_width):
        raise ValueError(f"normalized iris {norm.texture.shape} does not match bank "
                         f"{(cfg.polar_height, cfg.polar_width)}")
    out = np.empty((bank.n_filters, len(bank.rows), len(bank.cols)), dtype=complex)
    for f, k in enumerate(bank.kernels):
        kh, kw = k.shape
        win = _windows(norm.texture, bank.rows, bank.cols, kh, kw)
        re = (win * k.real.ravel()).sum(axis=1)
        im = (win * k.imag.ravel()).sum(axis=1)
        out[f] = (re + 1j * im).reshape(len(bank.rows), len(bank.cols))
    return out


def window_coverage(norm: NormalizedIris, bank: FilterBank) -> np.ndarray:
    """Fraction of mask-true pixels under each kernel window, ``(n_filters, rows, cols)``."""
    out = np.empty((bank.n_filters, len(bank.rows), len(bank.cols)))
    m = norm.mask.astype(np.float64)
    for f, k in enumerate(bank.kernels):
        kh, kw = k.shape
        out[f] = _windows(m, bank.rows, bank.cols, kh, kw).mean(axis=1).reshape(len(bank.rows), len(bank.cols))
    return out


def encode(norm: NormalizedIris, bank: FilterBank, sample_id: str = "") -> IrisCode:
    z = filter_responses(norm, bank)
    valid = window_coverage(norm, bank) >= bank.config.coverage
    code = np.stack([z.real >= 0, z.imag >= 0], axis=-1)  # (F, R, C, 2)
    mask = np.repeat(valid[..., None], 2, axis=-1)
    code = np.transpose(code, (2, 0, 1, 3))  # (C, F, R, 2)
    mask = np.transpose(mask, (2, 0, 1, 3))
    return IrisCode.from_bits(code, mask, bank.grid_cols, bank.fingerprint, sample_id, bank.config.polar_width)


# -- IRCD files -----------------------------------------------------------------

def code_to_bytes(code: IrisCode) -> bytes:
    bits_code = np.packbits(code.code_bits().astype(np.uint8))
    bits_mask = np.packbits(code.mask_bits().astype(np.uint8))
    sid = code.sample_id.encode("utf-8")
    return b"".join([
        MAGIC,
        struct.pack("<B", FORMAT_VERSION),
        code.fingerprint,
        struct.pack("<I", code.n_bits),
        bits_code.tobytes(),
        bits_mask.tobytes(),
        struct.pack("<I", len(sid)),
        sid,
    ])


def code_from_bytes(blob: bytes, grid_cols: int = 32, polar_width: int = 512) -> IrisCode:
    if blob[:4] != MAGIC:
        raise ValueError("not an IRCD file")
    version = blob[4]
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported IRCD version {version}")
    fingerprint = blob[5:13]
    (n_bits,) = struct.unpack("<I", blob[13:17])
    nbytes = -(-n_bits // 8)
    pos = 17
    code = np.unpackbits(np.frombuffer(blob[pos:pos + nbytes], np.uint8))[:n_bits]
    pos += nbytes
    mask = np.unpackbits(np.frombuffer(blob[pos:pos + nbytes], np.uint8))[:n_bits]
    pos += nbytes
    (slen,) = struct.unpack("<I", blob[pos:pos + 4])
    sid = blob[pos + 4:pos + 4 + slen].decode("utf-8")
    if len(blob) != pos + 4 + slen:
        raise ValueError("trailing or missing bytes in IRCD file")
    return IrisCode.from_bits(code, mask, grid_cols, fingerprint, sid, polar_width)


def write_code(code: IrisCode, path) -> Path:
    path = Path(path)
    path.write_bytes(code_to_bytes(code))
    return path


def read_code(path, grid_cols: int = 32, polar_width: int = 512) -> IrisCode:
    return code_from_bytes(Path(path).read_bytes(), grid_cols, polar_width)
