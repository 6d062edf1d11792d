"""Circular Hough fitting of pupillary and limbic boundaries to a coarse mask.

Each edge point carries the direction of the mask gradient (pointing into the
iris). A limbic centre lies along that direction, a pupil centre against it,
so each point votes on a short arc around its normal instead of a full circle.
This keeps the two contours from voting for each other and keeps the
accumulator cheap. Points whose normal is undefined (isolated pixels) vote
on the full circle.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit
from scipy import ndimage

from .manifest import BinaryMask


class FitError(RuntimeError):
    """No circle pair with enough support, or no pair satisfying containment."""

    def __init__(self, message: str, candidates: list[dict] | None = None):
        self.candidates = candidates or []
        super().__init__(message)


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float

    def to_dict(self) -> dict:
        return {"cx": float(self.cx), "cy": float(self.cy), "r": float(self.r)}


@dataclass(frozen=True)
class BoundaryCircles:
    pupil: Circle
    limbic: Circle
    pupil_votes: float = 0.0
    limbic_votes: float = 0.0
    slack: float = 2.0

    def __post_init__(self):
        p, l = self.pupil, self.limbic
        if not p.r < l.r:
            raise ValueError(f"pupil radius {p.r} must be smaller than limbic radius {l.r}")
        if math.hypot(p.cx - l.cx, p.cy - l.cy) + p.r >= l.r + self.slack:
            raise ValueError("pupil circle not contained in limbic circle")

    def to_dict(self) -> dict:
        return {
            "pupil": self.pupil.to_dict(),
            "limbic": self.limbic.to_dict(),
            "pupil_votes": float(self.pupil_votes),
            "limbic_votes": float(self.limbic_votes),
        }

    @classmethod
    def from_dict(cls, d: dict, slack: float = 2.0) -> "BoundaryCircles":
        return cls(Circle(**d["pupil"]), Circle(**d["limbic"]),
                   d.get("pupil_votes", 0.0), d.get("limbic_votes", 0.0), slack)


@dataclass(frozen=True)
class HoughConfig:
    pupil_r_range: tuple[int, int] = (16, 100)
    limbic_r_range: tuple[int, int] = (70, 180)
    radius_step: float = 1.0
    center_search_margin: float | None = None  # px; None means 15% of limbic radius
    edge_method: str = "mask_boundary"
    min_vote_fraction: float = 0.3
    containment_slack: float = 2.0
    normal_spread: float = 0.1  # half-width of the voting arc, radians
    normal_sigma: float = 2.0

    def __post_init__(self):
        for name in ("pupil_r_range", "limbic_r_range"):
            lo, hi = getattr(self, name)
            if lo < 4 or hi < lo:
                raise ValueError(f"{name} must satisfy 4 <= r_min <= r_max")
            object.__setattr__(self, name, (lo, hi))
        if self.radius_step <= 0:
            raise ValueError("radius_step must be positive")
        if self.edge_method != "mask_boundary":
            raise ValueError(f"unsupported edge_method {self.edge_method!r}")

    def validate_for(self, height: int, width: int):
        limit = min(height, width) / 2
        for name in ("pupil_r_range", "limbic_r_range"):
            if getattr(self, name)[1] > limit:
                raise ValueError(f"{name} r_max exceeds half the image side ({limit})")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pupil_r_range"] = list(self.pupil_r_range)
        d["limbic_r_range"] = list(self.limbic_r_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HoughConfig":
        d = dict(d)
        for k in ("pupil_r_range", "limbic_r_range"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class EdgeSet:
    """Edge pixels as ``(x, y)`` integer points with unit normals into the mask."""

    points: np.ndarray
    normals: np.ndarray
    shape: tuple[int, int]

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, index) -> "EdgeSet":
        return EdgeSet(self.points[index], self.normals[index], self.shape)

    def translated(self, dx: int, dy: int) -> "EdgeSet":
        return EdgeSet(self.points + np.array([dx, dy]), self.normals, self.shape)


def mask_edges(mask: BinaryMask, normal_sigma: float = 2.0) -> EdgeSet:
    """True pixels with at least one false 4-neighbour; outside the frame counts as false."""
    bits = np.asarray(mask.bits, dtype=bool)
    padded = np.pad(bits, 1, constant_values=False)
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:])
    edge = bits & ~interior
    ys, xs = np.nonzero(edge)
    smooth = ndimage.gaussian_filter(bits.astype(float), normal_sigma, mode="constant")
    gy = ndimage.sobel(smooth, axis=0, mode="constant")[ys, xs]
    gx = ndimage.sobel(smooth, axis=1, mode="constant")[ys, xs]
    norm = np.hypot(gx, gy)
    ok = norm > 1e-9
    normals = np.zeros((len(xs), 2))
    normals[ok, 0] = gx[ok] / norm[ok]
    normals[ok, 1] = gy[ok] / norm[ok]
    points = np.stack([xs, ys], axis=1).astype(np.int64)
    return EdgeSet(points, normals, bits.shape)


@njit(cache=True)
def _vote_kernel(xs, ys, base, alphas, r, x0, y0, bw, bh, acc):
    # consecutive arc samples may round to the same cell; count it once per point
    for i in range(xs.shape[0]):
        last = -1
        for k in range(alphas.shape[0]):
            a = base[i] + alphas[k]
            cx = xs[i] + np.int64(np.rint(r * np.cos(a))) - x0
            cy = ys[i] + np.int64(np.rint(r * np.sin(a))) - y0
            if cx < 0 or cx >= bw or cy < 0 or cy >= bh:
                last = -1
                continue
            cell = cy * bw + cx
            if cell != last:
                acc[cell] += 1
                last = cell


def _votes(edges: EdgeSet, r: float, spread: float, sign: int, box) -> np.ndarray:
    """Raw accumulator for one radius over the centre box ``(x0, y0, w, h)``."""
    x0, y0, bw, bh = box
    acc = np.zeros(bw * bh, dtype=np.int32)
    normals = edges.normals
    oriented = np.any(normals != 0, axis=1)
    xs = edges.points[:, 0].astype(np.int64)
    ys = edges.points[:, 1].astype(np.int64)
    if oriented.any():
        base = np.arctan2(normals[oriented, 1], normals[oriented, 0])
        if sign < 0:
            base = base + np.pi
        k = max(1, int(math.ceil(spread * r)))
        alphas = np.linspace(-spread, spread, 2 * k + 1)
        _vote_kernel(xs[oriented], ys[oriented], base, alphas, float(r), x0, y0, bw, bh, acc)
    if not oriented.all():
        full = np.linspace(0.0, 2 * np.pi, max(8, int(math.ceil(2 * np.pi * r))), endpoint=False)
        n = int((~oriented).sum())
        _vote_kernel(xs[~oriented], ys[~oriented], np.zeros(n), full, float(r), x0, y0, bw, bh, acc)
    return acc.reshape(bh, bw)


def _smoothed(acc: np.ndarray) -> np.ndarray:
    """3x3 box sum with zero padding, exact in integers."""
    a = acc.astype(np.int32)
    t = a.copy()
    t[:, 1:] += a[:, :-1]
    t[:, :-1] += a[:, 1:]
    out = t.copy()
    out[1:, :] += t[:-1, :]
    out[:-1, :] += t[1:, :]
    return out


def _radii(lo: float, hi: float, step: float) -> np.ndarray:
    return np.arange(lo, hi + 1e-9, step, dtype=float)


def _min_votes(r: float, fraction: float) -> float:
    return fraction * 2 * math.pi * r


def fit_circles(edges: EdgeSet, config: HoughConfig | None = None, *, debug: dict | None = None) -> BoundaryCircles:
    """Two-pass Hough fit: limbic circle over the whole frame, then the pupil near it.

    Votes are 3x3 box sums of the raw accumulator; ties resolve to the smaller
    radius, then the top-most, left-most cell. Pass a dict as ``debug`` to get
    the winning and runner-up cells back.
    """
    config = config or HoughConfig()
    if len(edges) == 0:
        raise FitError("empty edge set")
    h, w = edges.shape

    # limbic pass: the best cell of every radius plane, keep the global best
    per_radius = []
    for r in _radii(*config.limbic_r_range, config.radius_step):
        sm = _smoothed(_votes(edges, r, config.normal_spread, +1, (0, 0, w, h)))
        idx = int(np.argmax(sm))
        y, x = divmod(idx, w)
        per_radius.append((int(sm[y, x]), float(r), x, y))
    best = max(per_radius, key=lambda c: (c[0], -c[1]))
    ranked = sorted(per_radius, key=lambda c: (-c[0], c[1]))
    candidates = [{"votes": v, "r": r, "cx": x, "cy": y} for v, r, x, y in ranked[:5]]
    if debug is not None:
        debug["limbic_candidates"] = candidates
    votes, lr, lx, ly = best
    if votes < _min_votes(lr, config.min_vote_fraction):
        raise FitError(f"limbic support {votes} below threshold at r={lr:g}", candidates)
    limbic = Circle(float(lx), float(ly), lr)

    # pupil pass: centres restricted to a window around the limbic centre
    margin = config.center_search_margin
    if margin is None:
        margin = 0.15 * lr
    m = int(math.ceil(margin))
    x0, y0 = lx - m, ly - m
    bw = bh = 2 * m + 1
    yy, xx = np.mgrid[0:bh, 0:bw]
    in_window = (xx - m) ** 2 + (yy - m) ** 2 <= margin * margin
    radii = [r for r in _radii(*config.pupil_r_range, config.radius_step) if r < lr]
    if not radii:
        raise FitError("pupil radius range lies entirely above the limbic radius", candidates)
    planes = np.stack([
        np.where(in_window, _smoothed(_votes(edges, r, config.normal_spread, -1, (x0, y0, bw, bh))), -1)
        for r in radii
    ])
    order = np.argsort(-planes.ravel(), kind="stable")
    pupil_cands = []
    chosen = None
    for flat in order:
        v = int(planes.ravel()[flat])
        if v < 0:
            break
        ri, rem = divmod(int(flat), bh * bw)
        cy, cx = divmod(rem, bw)
        r = radii[ri]
        cand = {"votes": v, "r": r, "cx": x0 + cx, "cy": y0 + cy}
        if len(pupil_cands) < 5:
            pupil_cands.append(cand)
        if v < _min_votes(radii[0], config.min_vote_fraction):
            break
        if v < _min_votes(r, config.min_vote_fraction):
            continue
        dist = math.hypot(cand["cx"] - lx, cand["cy"] - ly)
        if r < lr and dist + r < lr + config.containment_slack:
            chosen = cand
            break
    if debug is not None:
        debug["pupil_candidates"] = pupil_cands
    if chosen is None:
        raise FitError("no pupil circle with sufficient support inside the limbic circle",
                       candidates + pupil_cands)
    pupil = Circle(float(chosen["cx"]), float(chosen["cy"]), float(chosen["r"]))
    return BoundaryCircles(pupil, limbic, chosen["votes"], votes, config.containment_slack)


def fit_mask(mask: BinaryMask, config: HoughConfig | None = None, *, debug: dict | None = None) -> BoundaryCircles:
    config = config or HoughConfig()
    return fit_circles(mask_edges(mask, config.normal_sigma), config, debug=debug)
