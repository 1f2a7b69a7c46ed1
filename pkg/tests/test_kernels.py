"""The compiled and numpy kernel backends must agree on every input."""

import numpy as np
import pytest

from openrgbt import kernels

BACKENDS = kernels.available_backends()


def test_native_backend_built():
    # The extension is part of the build; only OPENRGBT_PURE_PYTHON=1 or a
    # failed compile should drop it.
    assert "fallback" in BACKENDS
    assert "native" in BACKENDS, "compiled kernels missing; rebuild the extension"


@pytest.fixture(params=sorted(BACKENDS))
def impl(request):
    return BACKENDS[request.param]


def test_fuse_rgbt_matches_between_backends(rng):
    rgb = rng.integers(0, 256, size=(37, 23, 3), dtype=np.uint8)
    thermal = rng.integers(0, 256, size=(37, 23), dtype=np.uint8)
    weights = rng.random((37, 23))
    outputs = [b.fuse_rgbt(rgb, thermal, weights) for b in BACKENDS.values()]
    for out in outputs[1:]:
        assert np.array_equal(outputs[0], out)


def test_fuse_rgbt_rounds_half_up(impl):
    rgb = np.full((1, 1, 3), 201, dtype=np.uint8)
    thermal = np.full((1, 1), 200, dtype=np.uint8)
    weights = np.full((1, 1), 0.5)
    # 0.5*201 + 0.5*200 = 200.5 must round up
    assert impl.fuse_rgbt(rgb, thermal, weights)[0, 0, 0] == 201


def test_window_variance_matches_between_backends(rng):
    img = rng.random((41, 29)) * 255.0
    for radius in (1, 2, 4):
        outs = [b.window_variance(img, radius) for b in BACKENDS.values()]
        for out in outs[1:]:
            assert np.allclose(outs[0], out, atol=1e-6)


def test_window_variance_constant_image_is_zero(impl):
    img = np.full((10, 12), 37.0)
    assert np.allclose(impl.window_variance(img, 2), 0.0, atol=1e-9)


def test_rle_roundtrip_both_backends(rng):
    for impl in BACKENDS.values():
        for _ in range(50):
            flat = (rng.random(rng.integers(1, 200)) > 0.5).astype(np.uint8)
            runs = impl.rle_encode(flat)
            assert runs[0] == 0 or flat[0] == 0  # leading run is background
            back = impl.rle_decode(np.asarray(runs, dtype=np.int64), flat.size)
            assert np.array_equal(back, flat)


def test_rle_encodings_identical_between_backends(rng):
    flat = (rng.random(997) > 0.3).astype(np.uint8)
    encodings = [np.asarray(b.rle_encode(flat)) for b in BACKENDS.values()]
    for enc in encodings[1:]:
        assert np.array_equal(encodings[0], enc)


def test_rle_decode_rejects_bad_total(impl):
    with pytest.raises(ValueError):
        impl.rle_decode(np.array([3, 2], dtype=np.int64), 9)


def test_confusion_tally_matches_between_backends(rng):
    gt = rng.integers(0, 5, size=1000).astype(np.int64)
    gt[rng.random(1000) < 0.1] = 7  # ignored
    pred = rng.integers(0, 5, size=1000).astype(np.int64)
    pred[rng.random(1000) < 0.1] = 255  # void predictions
    outs = [b.confusion_tally(gt, pred, 5, 7) for b in BACKENDS.values()]
    for out in outs[1:]:
        assert np.array_equal(outs[0], out)
    assert outs[0].shape == (5, 6)
    assert outs[0].sum() == int((gt != 7).sum())
