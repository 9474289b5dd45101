"""Reference computations that share no code with the package under test."""

import math

import mpmath
import numpy as np

mpmath.mp.dps = 50


def mp_loss(logits, label, mask=None):
    """-sum_j w_j log p*_j evaluated in 50-digit arithmetic, straight from the definition."""
    total = mpmath.mpf(0)
    for j, x in enumerate(logits, start=1):
        w = 1 if mask is None else mask[j - 1]
        if not w:
            continue
        x = mpmath.mpf(float(x))
        # -log p = log(1 + e^-x);  -log(1 - p) = log(1 + e^x)
        total += mpmath.log1p(mpmath.exp(-x if j == label else x))
    return total


def mp_grad(logits, label, mask=None):
    out = []
    for j, x in enumerate(logits, start=1):
        w = 1 if mask is None else mask[j - 1]
        x = mpmath.mpf(float(x))
        # p - 1 = -1 / (1 + e^x)
        out.append(w * (-1 / (1 + mpmath.exp(x)) if j == label else 1 / (1 + mpmath.exp(-x))))
    return out


def central_difference(f, x, h):
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        up, down = x.copy(), x.copy()
        up[i] += h
        down[i] -= h
        g[i] = (f(up) - f(down)) / (2 * h)
    return g


def raster_iou(a, b, step=1e-3):
    """IoU by counting cell centres of a grid with spacing ``step``.

    Cell centres are tested against each box in closed form along each axis,
    so the cost is linear in the extent, not quadratic.
    """
    lo_x, hi_x = min(a[0], b[0]), max(a[2], b[2])
    lo_y, hi_y = min(a[1], b[1]), max(a[3], b[3])
    xs = lo_x + step * (np.arange(int(math.ceil((hi_x - lo_x) / step))) + 0.5)
    ys = lo_y + step * (np.arange(int(math.ceil((hi_y - lo_y) / step))) + 0.5)
    in_ax = (xs >= a[0]) & (xs < a[2])
    in_bx = (xs >= b[0]) & (xs < b[2])
    in_ay = (ys >= a[1]) & (ys < a[3])
    in_by = (ys >= b[1]) & (ys < b[3])
    # counts of cells in A, B, A∩B factor into x-count * y-count
    n_a = in_ax.sum() * in_ay.sum()
    n_b = in_bx.sum() * in_by.sum()
    n_ab = (in_ax & in_bx).sum() * (in_ay & in_by).sum()
    union = n_a + n_b - n_ab
    return 0.0 if union == 0 else n_ab / union


def brute_force_ignore(samples, external, iou_threshold, beta):
    """Rule evaluated with its own overlap arithmetic on plain tuples."""
    def overlap(p, q):
        w = max(0.0, min(p[2], q[2]) - max(p[0], q[0]))
        h = max(0.0, min(p[3], q[3]) - max(p[1], q[1]))
        inter = w * h
        union = (p[2] - p[0]) * (p[3] - p[1]) + (q[2] - q[0]) * (q[3] - q[1]) - inter
        return inter / union if union > 0 else 0.0

    out = []
    for box, label in samples:
        hit = False
        if label == 0:
            for ext in external:
                if overlap(box, ext) > iou_threshold:
                    hit = True
        out.append(beta if hit else 1.0)
    return out
