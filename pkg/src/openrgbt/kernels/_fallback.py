"""Numpy reference implementations of the raster kernels.

Semantics notes shared with the compiled twin:

* ``fuse_rgbt`` rounds half-up after the per-pixel convex combination.
* ``window_variance`` uses the population variance over the window clipped
  to the image bounds (no padding), so border pixels average fewer samples.
* Run-length codes alternate background/foreground runs starting with a
  background run that may be zero.
* ``confusion_tally`` returns an ``(n_classes, n_classes + 1)`` table whose
  last column counts void (255) predictions on non-ignored pixels.
"""

import numpy as np

VOID_LABEL = 255


def fuse_rgbt(rgb, thermal, weights):
    w = weights[..., None]
    t = thermal.astype(np.float64)[..., None]
    out = w * rgb.astype(np.float64) + (1.0 - w) * t
    return np.clip(np.floor(out + 0.5), 0.0, 255.0).astype(np.uint8)


def window_variance(img, radius):
    h, w = img.shape
    ii = np.zeros((h + 1, w + 1), dtype=np.float64)
    ii[1:, 1:] = img
    ii2 = ii.copy()
    ii2[1:, 1:] = img * img
    ii = ii.cumsum(axis=0).cumsum(axis=1)
    ii2 = ii2.cumsum(axis=0).cumsum(axis=1)

    ys = np.arange(h)
    xs = np.arange(w)
    y0 = np.maximum(ys - radius, 0)
    y1 = np.minimum(ys + radius, h - 1) + 1
    x0 = np.maximum(xs - radius, 0)
    x1 = np.minimum(xs + radius, w - 1) + 1

    def rect(table):
        return (
            table[np.ix_(y1, x1)]
            - table[np.ix_(y0, x1)]
            - table[np.ix_(y1, x0)]
            + table[np.ix_(y0, x0)]
        )

    count = (y1 - y0)[:, None] * (x1 - x0)[None, :]
    mean = rect(ii) / count
    var = rect(ii2) / count - mean * mean
    return np.maximum(var, 0.0)


def rle_encode(flat):
    n = flat.size
    if n == 0:
        return np.zeros(1, dtype=np.int64)
    bits = flat != 0
    changes = np.flatnonzero(bits[1:] != bits[:-1]) + 1
    bounds = np.concatenate(([0], changes, [n]))
    runs = np.diff(bounds).astype(np.int64)
    if bits[0]:
        runs = np.concatenate(([0], runs))
    return runs


def rle_decode(runs, n):
    runs = np.asarray(runs, dtype=np.int64)
    values = np.zeros(runs.size, dtype=np.uint8)
    values[1::2] = 1
    out = np.repeat(values, runs)
    if out.size != n:
        raise ValueError(f"run lengths sum to {out.size}, expected {n}")
    return out


def confusion_tally(gt, pred, n_classes, ignore_index):
    if ignore_index >= 0:
        keep = gt != ignore_index
        gt = gt[keep]
        pred = pred[keep]
    pred = np.where(pred == VOID_LABEL, n_classes, pred)
    flat = gt * (n_classes + 1) + pred
    counts = np.bincount(flat, minlength=n_classes * (n_classes + 1))
    return counts.reshape(n_classes, n_classes + 1).astype(np.int64)
