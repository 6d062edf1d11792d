import numpy as np
import pytest

from conftest import annulus
from pmiris.boundary import BoundaryCircles, Circle
from pmiris.manifest import BinaryMask, IrisImage, SampleRecord, write_mask
from pmiris.segmentation import (SegmentationError, Segmenter, classical_coarse_mask, cleanup_mask,
                                 largest_component, segment)
from pmiris.synth import SyntheticIdentity, render_sample


def _mask(bits, sem="coarse"):
    return BinaryMask(np.asarray(bits, bool), sem)


def test_cleanup_empty_fixed_point():
    out = cleanup_mask(_mask(np.zeros((50, 60))))
    assert not out.bits.any() and out.shape == (50, 60)


def test_speckles_removed_disc_kept(rng):
    h, w = 200, 200
    disc = annulus((h, w), (100, 100), -1, 50)
    noisy = disc.copy()
    placed = 0
    while placed < 50:
        y, x = rng.integers(0, h, 2)
        if np.hypot(x - 100, y - 100) > 55:
            noisy[y, x] = True
            placed += 1
    out = cleanup_mask(_mask(noisy), open_radius=2, close_radius=4).bits
    assert not (out & ~annulus((h, w), (100, 100), -1, 52)).any()
    assert abs(out.sum() - disc.sum()) / disc.sum() < 0.03


def test_largest_component_only():
    bits = annulus((200, 300), (80, 100), -1, 40)  # ~5000 px
    bits |= annulus((200, 300), (240, 100), -1, 9.8)  # ~300 px
    out = cleanup_mask(_mask(bits), 0, 0).bits
    assert (out == annulus((200, 300), (80, 100), -1, 40)).all()


def test_cleanup_zero_radii_idempotent(rng):
    bits = rng.random((60, 60)) > 0.4
    once = cleanup_mask(_mask(bits), 0, 0)
    twice = cleanup_mask(once, 0, 0)
    assert (once.bits == twice.bits).all()
    from scipy import ndimage

    assert ndimage.label(once.bits)[1] == 1


def test_largest_component_is_4_connected():
    bits = np.zeros((10, 10), bool)
    bits[2, 2] = bits[3, 3] = bits[4, 4] = True  # diagonal only
    bits[7, 1:4] = True
    assert largest_component(bits).sum() == 3 and largest_component(bits)[7, 1:4].all()


def _record(tmp_path, coarse=None, fine=None):
    cp = write_mask(coarse, tmp_path / "c.png") if coarse is not None else None
    fp = write_mask(fine, tmp_path / "f.png") if fine is not None else None
    return SampleRecord("x", "s", "left", 0, 1, tmp_path / "img.png", cp, fp)


def test_file_backed_pair(tmp_path):
    img = IrisImage(np.zeros((240, 320), np.uint8))
    coarse = annulus((120, 160), (80, 60), 15, 45)
    fine = coarse & (np.arange(160)[None, :] < 80)
    mp = segment(img, _record(tmp_path, coarse, fine), Segmenter())
    assert mp.coarse.shape == mp.fine.shape == (240, 320)
    assert mp.coarse.semantics == "coarse" and mp.fine.semantics == "fine"
    assert not mp.fine_defaulted
    assert mp.fine.area < mp.coarse.area


def test_fine_defaults_to_coarse(tmp_path):
    img = IrisImage(np.zeros((240, 320), np.uint8))
    mp = segment(img, _record(tmp_path, annulus((120, 160), (80, 60), 15, 45)), Segmenter())
    assert mp.fine_defaulted
    assert (mp.fine.bits == mp.coarse.bits).all() and mp.fine.semantics == "fine"


def test_missing_coarse_path_fails(tmp_path):
    img = IrisImage(np.zeros((240, 320), np.uint8))
    with pytest.raises(SegmentationError):
        segment(img, _record(tmp_path), Segmenter())


def test_empty_coarse_is_segmentation_failure(tmp_path):
    img = IrisImage(np.zeros((240, 320), np.uint8))
    with pytest.warns(UserWarning):
        with pytest.raises(SegmentationError) as exc:
            segment(img, _record(tmp_path, np.zeros((120, 160), bool)), Segmenter())
    assert exc.value.sample_id == "x"


def test_segmenter_kind_validated():
    with pytest.raises(ValueError):
        Segmenter(kind="dcnn")


def test_classical_baseline_on_synthetic():
    circles = BoundaryCircles(Circle(320, 240, 40), Circle(320, 240, 100))
    s = render_sample(SyntheticIdentity(3), circles, rng_seed=0)
    truth = s.coarse.bits
    mask = classical_coarse_mask(s.image).bits
    assert mask.shape == truth.shape
    assert (mask & truth).sum() / truth.sum() >= 0.9
    assert (mask & ~truth).sum() / mask.sum() <= 0.1
    mp = segment(s.image, SampleRecord("x", "s", "left", 0, 1, "x.png"), Segmenter(kind="classical_baseline"))
    assert mp.fine_defaulted and mp.coarse.shape == truth.shape
