"""Independent reference implementations the tests check the package against.

Everything here is deliberately written the dumb way (explicit loops,
exhaustive grids) so it shares no code path with the package.
"""

from __future__ import annotations

import numpy as np


def conv_reference(image: np.ndarray, weights: np.ndarray, stride: int, pad: int) -> np.ndarray:
    """Quadruple-loop 2-d convolution, the oracle for the engine's conv."""
    h, w, c = image.shape
    out_c, kh, kw, _ = weights.shape
    if pad:
        padded = np.zeros((h + 2 * pad, w + 2 * pad, c))
        padded[pad : pad + h, pad : pad + w, :] = image
    else:
        padded = image
    ph, pw = padded.shape[0], padded.shape[1]
    oh = (ph - kh) // stride + 1
    ow = (pw - kw) // stride + 1
    out = np.zeros((oh, ow, out_c))
    for y in range(oh):
        for x in range(ow):
            for o in range(out_c):
                acc = 0.0
                for dy in range(kh):
                    for dx in range(kw):
                        for ci in range(c):
                            acc += weights[o, dy, dx, ci] * padded[y * stride + dy, x * stride + dx, ci]
                out[y, x, o] = acc
    return out


def ap_reference(relevance: list[bool]) -> float:
    """Brute-force prefix-precision AP over a rank-ordered relevance pattern."""
    total = sum(relevance)
    if total == 0:
        raise ValueError("needs at least one relevant item")
    acc = 0.0
    for k in range(1, len(relevance) + 1):
        if relevance[k - 1]:
            acc += sum(relevance[:k]) / k
    return acc / total


def grid_min_objective(
    x: np.ndarray,
    y: np.ndarray,
    c: float,
    lo: float = -3.0,
    hi: float = 3.0,
    step: float = 0.01,
) -> float:
    """Dense-grid minimum of the hinge objective over (w, b) in [lo, hi]^(D+1).

    Supports D = 1 and D = 2. The margin planes over the w grid are stacked
    per training point and the b axis is looped with in-place float32 math,
    which keeps a 601^3 x n sweep around a second.
    """
    n, dim = x.shape
    count = int(round((hi - lo) / step)) + 1
    axis = (lo + step * np.arange(count)).astype(np.float32)
    if dim == 1:
        w_grid = axis[None, :]
        reg = 0.5 * w_grid[0] ** 2
        planes = (y[:, None].astype(np.float32) * (w_grid * x[:, :1].astype(np.float32)))
    elif dim == 2:
        w1 = axis[:, None]
        w2 = axis[None, :]
        reg = 0.5 * (w1**2 + w2**2)
        planes = np.stack(
            [np.float32(y[i]) * (w1 * np.float32(x[i, 0]) + w2 * np.float32(x[i, 1])) for i in range(n)]
        )
    else:
        raise ValueError("grid oracle supports D <= 2 only")
    buf = np.empty_like(planes)
    best = np.inf
    c32 = np.float32(c)
    y32 = y.astype(np.float32)
    for b in axis:
        consts = (1.0 - y32 * b).reshape((n,) + (1,) * (planes.ndim - 1))
        np.subtract(consts, planes, out=buf)
        np.maximum(buf, np.float32(0.0), out=buf)
        total = buf.sum(axis=0)
        total *= c32
        total += reg
        best = min(best, float(total.min()))
    return best


# Fixed small training sets for the SVM oracle bound. Each is (X, y) with
# at most 8 points, D <= 2, and its objective minimum inside the grid box.
SVM_FIXTURES: dict[str, tuple[np.ndarray, np.ndarray]] = {
    "two-point-symmetric": (
        np.array([[-1.0, 0.0], [1.0, 0.0]]),
        np.array([-1.0, 1.0]),
    ),
    "six-point-separable": (
        np.array(
            [
                [1.0, 0.2],
                [1.2, -0.1],
                [0.8, 0.3],
                [-1.0, -0.2],
                [-1.1, 0.1],
                [-0.7, -0.3],
            ]
        ),
        np.array([1.0, 1.0, 1.0, -1.0, -1.0, -1.0]),
    ),
    "overlap-1d": (
        np.array([[0.5], [1.5], [-1.0], [0.7]]),
        np.array([1.0, 1.0, -1.0, -1.0]),
    ),
    "offset-1d": (
        np.array([[2.0], [1.0]]),
        np.array([1.0, -1.0]),
    ),
    "noisy-2d": (
        np.array(
            [
                [0.9, 0.9],
                [1.1, 0.4],
                [0.3, 1.2],
                [-0.2, 0.8],
                [-0.9, -0.7],
                [-1.2, -0.2],
                [-0.4, -1.1],
                [0.1, -0.9],
            ]
        ),
        np.array([1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0]),
    ),
    "symmetric-1d-overlap": (
        np.array([[0.5], [-0.2], [-0.5], [0.2]]),
        np.array([1.0, 1.0, -1.0, -1.0]),
    ),
}
