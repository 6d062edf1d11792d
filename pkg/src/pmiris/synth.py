"""Synthetic iris images with known boundaries, masks and identity.

Iris texture is defined in the annulus's own polar frame ``(rho, theta)`` as a
sum of band-limited sinusoids drawn from the identity seed. Pupil size,
eyelids and rotation change between sessions, but the texture attached to a
given ``(rho, theta)`` stays the same.

Decay acts on masks and photometry only: part of the annulus is corrupted and
removed from the fine mask, texture contrast drops, sensor noise grows and
the boundaries become wavy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy import ndimage

from .boundary import BoundaryCircles, Circle
from .manifest import BinaryMask, IrisImage, Manifest, SampleRecord, write_image, write_manifest, write_mask

PUPIL_LEVEL = 15
SCLERA_LEVEL = 220
IRIS_LEVEL = 110
EYELID_LEVEL = 170
POLAR_WIDTH = 512


@dataclass(frozen=True)
class SyntheticIdentity:
    seed: int
    n_components: int = 48
    angular_cycles: tuple[int, int] = (11, 42)  # wavelengths 12..47 px at 512 columns
    radial_cycles: tuple[float, float] = (0.0, 2.5)
    amplitude: float = 32.0

    @cached_property
    def _components(self):
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 7919]))
        m = rng.integers(self.angular_cycles[0], self.angular_cycles[1] + 1, self.n_components)
        f = rng.uniform(*self.radial_cycles, self.n_components)
        phase = rng.uniform(0, 2 * np.pi, self.n_components)
        weight = rng.rayleigh(1.0, self.n_components)
        weight /= np.sqrt(np.sum(weight ** 2) / 2)
        return m.astype(float), f, phase, weight

    def pattern(self, rho: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Unit-variance texture value at polar coordinates (theta in radians)."""
        m, f, phase, weight = self._components
        rho = np.asarray(rho, float)[..., None]
        theta = np.asarray(theta, float)[..., None]
        return np.sum(weight * np.cos(m * theta + 2 * np.pi * f * rho + phase), axis=-1)


@dataclass(frozen=True)
class DecaySpec:
    """Post-mortem degradation; every effect is zero at level 0 and grows with level.

    Individual effects may be overridden, e.g. to erode masks without adding noise.
    """

    level: float = 0.0
    erosion: float | None = None
    noise: float | None = None
    deformation: float | None = None
    contrast: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.level <= 1.0:
            raise ValueError("decay level must be in [0, 1]")

    @property
    def erosion_fraction(self) -> float:
        return 0.85 * self.level if self.erosion is None else self.erosion

    @property
    def noise_sigma(self) -> float:
        return 30.0 * self.level if self.noise is None else self.noise

    @property
    def deformation_px(self) -> float:
        return 3.0 * self.level if self.deformation is None else self.deformation

    @property
    def contrast_loss(self) -> float:
        return 0.75 * self.level if self.contrast is None else self.contrast


@dataclass(frozen=True)
class Eyelids:
    upper: float = 0.0  # px of the limbic circle hidden from the top
    lower: float = 0.0
    curvature: float = 0.0015


@dataclass(frozen=True, eq=False)
class RenderedSample:
    image: IrisImage
    coarse: BinaryMask
    fine: BinaryMask
    circles: BoundaryCircles


def annulus_coordinates(shape, circles: BoundaryCircles):
    """Exact inverse of the two-centre rubber-sheet map for every pixel.

    Returns ``(rho, theta)``; rho is 0 on the pupil circle and 1 on the limbic
    circle, theta runs counter-clockwise from the +x axis.
    """
    h, w = shape
    p, l = circles.pupil, circles.limbic
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    vx, vy = xx - p.cx, yy - p.cy
    dx, dy = l.cx - p.cx, l.cy - p.cy
    dr = l.r - p.r
    a = dx * dx + dy * dy - dr * dr
    b = vx * dx + vy * dy + p.r * dr
    c = vx * vx + vy * vy - p.r * p.r
    rho = (b - np.sqrt(np.maximum(b * b - a * c, 0.0))) / a
    theta = np.arctan2(-(vy - rho * dy), vx - rho * dx)
    return rho, np.mod(theta, 2 * np.pi)


def _polar_field(rng, sigma=(6.0, 30.0), shape=(32, 256)) -> np.ndarray:
    noise = rng.standard_normal(shape)
    field = ndimage.gaussian_filter(noise, sigma, mode=("nearest", "wrap"))
    return (field - field.mean()) / (field.std() + 1e-12)


def _lookup(field: np.ndarray, rho, theta):
    fh, fw = field.shape
    i = np.clip((rho * fh).astype(int), 0, fh - 1)
    j = np.clip((theta / (2 * np.pi) * fw).astype(int), 0, fw - 1)
    return field[i, j]


def render_sample(identity: SyntheticIdentity, circles: BoundaryCircles, decay: DecaySpec | None = None,
                  rng_seed=0, *, shape=(480, 640), rotation: float = 0.0, eyelids: Eyelids | None = None,
                  sensor_noise: float = 2.0, gain: float = 1.0, offset: float = 0.0) -> RenderedSample:
    """Render one eye image plus coarse and fine ground-truth masks.

    ``rotation`` (radians, counter-clockwise) rotates the iris texture within
    its own polar frame.
    """
    decay = decay or DecaySpec()
    eyelids = eyelids or Eyelids()
    rng = np.random.default_rng(rng_seed)
    h, w = shape
    p, l = circles.pupil, circles.limbic
    yy, xx = np.mgrid[0:h, 0:w].astype(float)

    amp = decay.deformation_px
    k_p, k_l = rng.integers(3, 7, 2)
    ph_p, ph_l = rng.uniform(0, 2 * np.pi, 2)
    ang_p = np.arctan2(-(yy - p.cy), xx - p.cx)
    ang_l = np.arctan2(-(yy - l.cy), xx - l.cx)
    in_pupil = np.hypot(xx - p.cx, yy - p.cy) <= p.r + amp * np.sin(k_p * ang_p + ph_p)
    in_limbic = np.hypot(xx - l.cx, yy - l.cy) <= l.r + amp * np.sin(k_l * ang_l + ph_l)
    annulus = in_limbic & ~in_pupil

    top = l.cy - l.r + eyelids.upper + eyelids.curvature * (xx - l.cx) ** 2
    bottom = l.cy + l.r - eyelids.lower - eyelids.curvature * (xx - l.cx) ** 2
    lid = np.zeros((h, w), bool)
    if eyelids.upper > 0:
        lid |= yy < top
    if eyelids.lower > 0:
        lid |= yy > bottom

    rho, theta = annulus_coordinates(shape, circles)
    rho_c = np.clip(rho, 0.0, 1.0)

    img = np.full((h, w), float(SCLERA_LEVEL))
    img[in_pupil] = PUPIL_LEVEL
    idx = annulus
    texture = identity.pattern(rho_c[idx], theta[idx] - rotation)
    img[idx] = IRIS_LEVEL + identity.amplitude * (1.0 - decay.contrast_loss) * texture

    decayed = np.zeros((h, w), bool)
    if decay.erosion_fraction > 0:
        erosion = _polar_field(rng)
        cut = np.quantile(erosion, 1.0 - decay.erosion_fraction)
        decayed[idx] = _lookup(erosion, rho_c[idx], theta[idx]) >= cut
        blotch = _polar_field(rng, sigma=(1.0, 4.0))
        img[decayed] = 95 + 45 * _lookup(blotch, rho_c[decayed], theta[decayed])

    img[lid] = EYELID_LEVEL + 6 * rng.standard_normal(int(lid.sum()))
    img = gain * img + offset
    noise = math.hypot(sensor_noise, decay.noise_sigma)
    if noise > 0:
        img = img + noise * rng.standard_normal((h, w))
    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)

    coarse = annulus & ~lid
    fine = coarse & ~decayed
    return RenderedSample(IrisImage(pixels), BinaryMask(coarse, "coarse"), BinaryMask(fine, "fine"), circles)


def decay_level(schedule: Mapping[float, float], hours: float) -> float:
    """Linear interpolation of the hours->level schedule, held constant outside it."""
    items = sorted((float(k), float(v)) for k, v in schedule.items())
    return float(np.interp(hours, [k for k, _ in items], [v for _, v in items]))


def default_session_hours(schedule: Mapping[float, float], sessions: int) -> list[float]:
    keys = sorted(float(k) for k in schedule)
    if sessions == len(keys):
        return keys
    if sessions == 1:
        return [keys[0]]
    return [float(h) for h in np.linspace(keys[0], keys[-1], sessions)]


@dataclass
class SessionGeometry:
    circles: BoundaryCircles
    rotation: float
    eyelids: Eyelids
    gain: float
    offset: float


def session_geometry(rng: np.random.Generator, base: dict, shape, max_rotation_cols: int = 2,
                     grid_cols: int = 32) -> SessionGeometry:
    h, w = shape
    lr = base["limbic_r"] + rng.uniform(-2, 2)
    lx = w / 2 + base["dx"] + rng.uniform(-6, 6)
    ly = h / 2 + base["dy"] + rng.uniform(-6, 6)
    pr = lr * rng.uniform(0.3, 0.48)
    off = rng.uniform(0, 4)
    ang = rng.uniform(0, 2 * np.pi)
    circles = BoundaryCircles(Circle(lx + off * math.cos(ang), ly + off * math.sin(ang), pr), Circle(lx, ly, lr))
    cols = int(rng.integers(-max_rotation_cols, max_rotation_cols + 1)) if max_rotation_cols else 0
    rotation = 2 * np.pi * cols / grid_cols + math.radians(rng.uniform(-0.3, 0.3))
    eyelids = Eyelids(upper=rng.uniform(0, 35), lower=rng.uniform(0, 20))
    return SessionGeometry(circles, rotation, eyelids, rng.uniform(0.95, 1.05), rng.uniform(-5, 5))


def identity_base(rng: np.random.Generator) -> dict:
    return {"limbic_r": rng.uniform(100, 125), "dx": rng.uniform(-20, 20), "dy": rng.uniform(-15, 15)}


def gen_dataset(out_dir, n_identities: int, sessions: int, decay_schedule: Mapping[float, float],
                base_seed: int = 0, *, session_hours: list[float] | None = None, shape=(480, 640),
                mask_scale: int = 2, write_fine: bool = True,
                decay_override: Callable[[int, int, float], DecaySpec | None] | None = None,
                max_rotation_cols: int = 2, manifest_name: str = "manifest.csv") -> Manifest:
    """Render ``n_identities x sessions`` samples and write images, masks and a manifest.

    Masks are written at ``1/mask_scale`` resolution, as a segmentation model
    would produce them. ``decay_override(identity, session, hours)`` may return
    a DecaySpec replacing the scheduled one for a sample.
    """
    if n_identities < 2 or sessions < 1:
        raise ValueError("need at least 2 identities and 1 session")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    hours = list(session_hours) if session_hours is not None else default_session_hours(decay_schedule, sessions)
    if len(hours) != sessions or any(b < a for a, b in zip(hours, hours[1:])):
        raise ValueError("session_hours must be non-decreasing with one entry per session")
    records = []
    for k in range(n_identities):
        ident_rng = np.random.default_rng(np.random.SeedSequence([base_seed, k]))
        identity = SyntheticIdentity(seed=int(ident_rng.integers(2 ** 31)))
        base = identity_base(ident_rng)
        eye = "left" if k % 2 == 0 else "right"
        subject = f"S{k:03d}"
        for s in range(sessions):
            seq = np.random.SeedSequence([base_seed, k, s + 1])
            geo_seed, render_seed = seq.spawn(2)
            geo = session_geometry(np.random.default_rng(geo_seed), base, shape, max_rotation_cols)
            decay = None
            if decay_override is not None:
                decay = decay_override(k, s, hours[s])
            if decay is None:
                decay = DecaySpec(decay_level(decay_schedule, hours[s]))
            sample = render_sample(identity, geo.circles, decay, np.random.default_rng(render_seed),
                                   shape=shape, rotation=geo.rotation, eyelids=geo.eyelids,
                                   gain=geo.gain, offset=geo.offset)
            sid = f"{subject}_{eye[0].upper()}_{s + 1:02d}"
            img_path = write_image(sample.image.pixels, out / "images" / f"{sid}.png")
            coarse_path = write_mask(sample.coarse.bits[::mask_scale, ::mask_scale], out / "masks" / f"{sid}_coarse.png")
            fine_path = None
            if write_fine:
                fine_path = write_mask(sample.fine.bits[::mask_scale, ::mask_scale], out / "masks" / f"{sid}_fine.png")
            records.append(SampleRecord(sid, subject, eye, float(hours[s]), s + 1, img_path, coarse_path, fine_path))
    path = write_manifest(records, out / manifest_name)
    return Manifest(tuple(records), (), path.parent)


def ground_truth_circles(base_seed: int, identity_index: int, session: int, shape=(480, 640),
                         max_rotation_cols: int = 2) -> BoundaryCircles:
    """Circles used by :func:`gen_dataset` for one sample (session counts from 0)."""
    ident_rng = np.random.default_rng(np.random.SeedSequence([base_seed, identity_index]))
    ident_rng.integers(2 ** 31)
    base = identity_base(ident_rng)
    seq = np.random.SeedSequence([base_seed, identity_index, session + 1])
    geo = session_geometry(np.random.default_rng(seq.spawn(2)[0]), base, shape, max_rotation_cols)
    return geo.circles
