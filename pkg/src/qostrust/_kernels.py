"""Compiled inner loop of online gradient descent.

Parameters are packed into one flat buffer (``W_1, b_1, W_2, b_2, ...``,
row-major) and updated in place.
"""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def _epoch(params, sizes, X, levels, order, lr):
    depth = sizes.size - 1
    width = sizes.max()
    acts = np.zeros((depth + 1, width))
    delta = np.zeros(width)
    back = np.zeros(width)
    offsets = np.zeros(depth + 1, dtype=np.int64)
    for k in range(depth):
        offsets[k + 1] = offsets[k] + sizes[k + 1] * sizes[k] + sizes[k + 1]
    n_out = sizes[depth]
    for i in order:
        for j in range(sizes[0]):
            acts[0, j] = X[i, j]
        for k in range(depth):
            w0 = offsets[k]
            b0 = w0 + sizes[k + 1] * sizes[k]
            for r in range(sizes[k + 1]):
                o = params[b0 + r]
                for c in range(sizes[k]):
                    o += params[w0 + r * sizes[k] + c] * acts[k, c]
                acts[k + 1, r] = 1.0 / (1.0 + np.exp(-o))
        for r in range(n_out):
            v = acts[depth, r]
            t = 1.0 if r == levels[i] else 0.0
            delta[r] = (2.0 / n_out) * (v - t) * v * (1.0 - v)
        for k in range(depth - 1, -1, -1):
            w0 = offsets[k]
            b0 = w0 + sizes[k + 1] * sizes[k]
            if k > 0:
                for c in range(sizes[k]):
                    s = 0.0
                    for r in range(sizes[k + 1]):
                        s += params[w0 + r * sizes[k] + c] * delta[r]
                    back[c] = s
            for r in range(sizes[k + 1]):
                d = delta[r]
                for c in range(sizes[k]):
                    params[w0 + r * sizes[k] + c] -= lr * d * acts[k, c]
                params[b0 + r] -= lr * d
            if k > 0:
                for c in range(sizes[k]):
                    a = acts[k, c]
                    delta[c] = back[c] * a * (1.0 - a)
        for r in range(width):
            if not np.isfinite(delta[r]):
                return False
    return True


def sgd_epoch(weights, biases, X, levels, order, lr) -> bool:
    """Run one epoch over ``order``, writing the updates back into the lists."""
    sizes = np.array([weights[0].shape[1]] + [w.shape[0] for w in weights], dtype=np.int64)
    params = np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(weights, biases)])
    ok = _epoch(params, sizes, X, levels, np.asarray(order, dtype=np.int64), lr)
    pos = 0
    for k, w in enumerate(weights):
        weights[k] = params[pos : pos + w.size].reshape(w.shape).copy()
        pos += w.size
        biases[k] = params[pos : pos + biases[k].size].copy()
        pos += biases[k].size
    return bool(ok) and bool(np.all(np.isfinite(params)))
