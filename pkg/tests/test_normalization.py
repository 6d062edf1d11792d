import numpy as np
import pytest
from scipy import ndimage

from conftest import annulus
from pmiris.boundary import BoundaryCircles, Circle
from pmiris.manifest import BinaryMask, IrisImage
from pmiris.normalization import export_png, normalize, normalize_mask, rubber_sheet, sampling_grid
from pmiris.synth import SyntheticIdentity, render_sample

H, W = 64, 512
SHAPE = (480, 640)


def _radial_image(cx, cy):
    yy, xx = np.mgrid[0:SHAPE[0], 0:SHAPE[1]]
    r = np.hypot(xx - cx, yy - cy)
    return IrisImage(np.clip(np.rint(40 + 1.2 * r), 0, 255).astype(np.uint8))


def test_radial_image_gives_constant_columns():
    c = BoundaryCircles(Circle(320, 240, 40), Circle(320, 240, 110))
    tex, inside = rubber_sheet(_radial_image(320, 240), c, H, W)
    assert inside.all()
    spread = tex.max(axis=1) - tex.min(axis=1)
    assert spread.max() <= 2.5 / 255  # rounding of the source image plus bilinear error
    assert np.all(np.diff(tex.mean(axis=1)) > 0)  # row 0 at the pupil


def test_orientation_convention():
    c = BoundaryCircles(Circle(320, 240, 40), Circle(320, 240, 110))
    x, y = sampling_grid(c, H, W)
    # column 0 points to +x, column W/4 to the top of the screen (smaller y)
    assert x[0, 0] > 320 and y[0, 0] == pytest.approx(240)
    assert y[0, W // 4] < 240 and x[0, W // 4] == pytest.approx(320)
    assert np.hypot(x[0, 0] - 320, y[0, 0] - 240) == pytest.approx(40 + 70 * 0.5 / H)


def test_image_rotation_shifts_columns():
    cx, cy = (SHAPE[1] - 1) / 2, (SHAPE[0] - 1) / 2
    c = BoundaryCircles(Circle(cx, cy, 45), Circle(cx, cy, 115))
    s = render_sample(SyntheticIdentity(9), c, rng_seed=2, sensor_noise=0)
    k = 8
    deg = 360.0 * k / W
    # ndimage.rotate turns the array counter-clockwise as displayed (y down)
    rot = ndimage.rotate(s.image.pixels.astype(float), deg, reshape=False, order=1, mode="nearest")
    rot = IrisImage(np.clip(np.rint(rot), 0, 255).astype(np.uint8))
    full = BinaryMask(np.ones(SHAPE, bool), "fine")
    a = normalize(s.image, full, c, H, W)
    b = normalize(rot, full, c, H, W)
    mad = np.mean(np.abs(np.roll(a.texture, k, axis=1) - b.texture)) * 255
    assert mad < 2.0


def test_half_plane_mask_fraction():
    c = BoundaryCircles(Circle(320, 240, 45), Circle(320, 240, 115))
    bits = annulus(SHAPE, (320, 240), 45, 115)
    bits[:240] = False  # remove the top half-plane
    m = normalize_mask(BinaryMask(bits, "fine"), c, H, W)
    assert abs(m.mean() - 0.5) <= 0.03
    theta = 2 * np.pi * np.arange(W) / W
    upper = (theta > 0.02) & (theta < np.pi - 0.02)
    lower = (theta > np.pi + 0.02) & (theta < 2 * np.pi - 0.02)
    assert not m[:, upper].any() and m[1:-1, lower].all()  # edge rows may round onto the rim


def test_constant_masks():
    c = BoundaryCircles(Circle(320, 240, 45), Circle(322, 238, 115))
    assert normalize_mask(BinaryMask(np.ones(SHAPE, bool), "fine"), c, H, W).all()
    assert not normalize_mask(BinaryMask(np.zeros(SHAPE, bool), "fine"), c, H, W).any()


def test_out_of_bounds_zero_and_masked():
    c = BoundaryCircles(Circle(60, 240, 30), Circle(60, 240, 100))
    img = IrisImage(np.full(SHAPE, 200, np.uint8))
    n = normalize(img, BinaryMask(np.ones(SHAPE, bool), "fine"), c, H, W)
    out = ~n.mask
    assert out.any() and np.all(n.texture[out] == 0)
    assert np.allclose(n.texture[n.mask], 200 / 255)


def test_deterministic(tmp_path):
    c = BoundaryCircles(Circle(320, 240, 45), Circle(318, 243, 115))
    s = render_sample(SyntheticIdentity(1), c, rng_seed=5)
    a = normalize(s.image, s.fine, c, H, W)
    b = normalize(s.image, s.fine, c, H, W)
    assert np.array_equal(a.texture, b.texture) and np.array_equal(a.mask, b.mask)
    assert 0 <= a.mask_fraction <= 1
    tex, msk = export_png(a, tmp_path / "s")
    assert tex.exists() and msk.exists()


def test_shifted_matches_roll():
    c = BoundaryCircles(Circle(320, 240, 45), Circle(320, 240, 115))
    s = render_sample(SyntheticIdentity(1), c, rng_seed=5)
    a = normalize(s.image, s.fine, c, H, W)
    assert np.array_equal(a.shifted(16).texture, np.roll(a.texture, 16, axis=1))
