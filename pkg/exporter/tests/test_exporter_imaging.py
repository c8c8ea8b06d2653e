"""Image discovery, decoding, preprocessing and id parsing."""

import numpy as np
import pytest

from viewexport import ImageUnreadable
from viewexport.imaging import (
    IMAGENET_MEAN,
    IMAGENET_STD,
    list_images,
    load_image,
    normalize,
    record_ids,
)

from helpers import make_images


def test_list_images_filters_and_sorts(tmp_path):
    make_images(tmp_path, ["b.jpg", "a.png", "c.bmp"])
    (tmp_path / "notes.txt").write_text("not an image")
    (tmp_path / "sub").mkdir()
    assert [p.name for p in list_images(tmp_path)] == ["a.png", "b.jpg", "c.bmp"]


def test_load_image_shape_range_dtype(tmp_path):
    make_images(tmp_path, ["x.png"], size=(48, 64))
    out = load_image(tmp_path / "x.png", 256, 256)
    assert out.shape == (3, 256, 256)
    assert out.dtype == np.float32
    assert out.min() >= 0.0
    assert out.max() <= 1.0


def test_load_image_constant_color_exact(tmp_path):
    # Bilinear resampling of a constant image is that constant.
    make_images(tmp_path, ["c.png"], size=(32, 32), color=(40, 80, 120))
    out = load_image(tmp_path / "c.png", 64, 96)
    assert out.shape == (3, 64, 96)
    expected = np.array([40, 80, 120], dtype=np.float32) / 255.0
    assert np.array_equal(out, np.broadcast_to(expected[:, None, None], out.shape))


def test_normalize_imagenet_per_channel(tmp_path):
    rng = np.random.default_rng(1)
    pixels = rng.random((3, 5, 4), dtype=np.float32)
    out = normalize(pixels, "imagenet")
    for c in range(3):
        assert np.allclose(out[c], (pixels[c] - IMAGENET_MEAN[c]) / IMAGENET_STD[c],
                           atol=1e-7)
    assert np.array_equal(normalize(pixels, "none"), pixels)


def test_normalize_unknown_policy():
    with pytest.raises(ValueError, match="policy"):
        normalize(np.zeros((3, 2, 2), dtype=np.float32), "zscore")


def test_record_ids_parsing():
    assert record_ids("0013_c012_00042_3") == ("0013", "c012")
    assert record_ids("7_c1") == ("7", "c1")
    assert record_ids("snapshot") == ("snapshot", "c000")
    assert record_ids("0013_x012_0") == ("0013_x012_0", "c000")


def test_load_image_unreadable(tmp_path):
    (tmp_path / "fake.jpg").write_bytes(b"definitely not a jpeg")
    with pytest.raises(ImageUnreadable, match="cannot decode"):
        load_image(tmp_path / "fake.jpg", 32, 32)
    with pytest.raises(ImageUnreadable, match="cannot decode"):
        load_image(tmp_path / "missing.jpg", 32, 32)
