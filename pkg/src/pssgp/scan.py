"""Work-efficient inclusive prefix scan over an associative combine.

Elements are batched: either one array or a tuple of arrays, all sharing a
leading axis of length ``N``. The combine function receives two batches of
equal length and must return the batch of pairwise combinations, which lets
each level of the scan tree run as a single vectorized call (optionally
split across threads).

The schedule is the classic up-sweep / down-sweep tree: ``ceil(log2 N)``
reduction levels followed by at most ``ceil(log2 N) - 1`` distribution
levels, with fewer than ``2N`` combines in total. The tree depends only on
``N``, so results are bit-identical for any worker count.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

__all__ = ["ScanStats", "prefix_scan", "tree_shape"]

#: below this length the scan is a plain left fold
SEQUENTIAL_THRESHOLD = 8
#: smallest batch worth handing to a separate thread
MIN_CHUNK = 1024


@dataclass
class ScanStats:
    """Instrumentation filled in by :func:`prefix_scan`.

    ``combines`` counts element-level combine applications; ``depth`` is the
    longest chain of dependent combines leading to any output; ``levels`` is
    the number of batched calls made.
    """

    combines: int = 0
    depth: int = 0
    levels: int = 0

    def merge(self, other):
        self.combines += other.combines
        self.depth = max(self.depth, other.depth)
        self.levels += other.levels


def _take(elems, idx):
    if isinstance(elems, tuple):
        return tuple(e[idx] for e in elems)
    return elems[idx]


def _put(elems, idx, vals):
    if isinstance(elems, tuple):
        for e, v in zip(elems, vals):
            e[idx] = v
    else:
        elems[idx] = vals


def _length(elems):
    return (elems[0] if isinstance(elems, tuple) else elems).shape[0]


def _copy(elems):
    if isinstance(elems, tuple):
        return tuple(np.array(e, copy=True) for e in elems)
    return np.array(elems, copy=True)


def _concat(parts):
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p, axis=0) for p in zip(*parts))
    return np.concatenate(parts, axis=0)


class _Runner:
    def __init__(self, combine, workers):
        self.combine = combine
        self.workers = max(1, int(workers or 1))
        self.pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None

    def __call__(self, left, right):
        n = _length(left)
        if self.pool is None or n < 2 * MIN_CHUNK:
            return self.combine(left, right)
        k = min(self.workers, n // MIN_CHUNK)
        bounds = np.linspace(0, n, k + 1).astype(int)
        futures = [
            self.pool.submit(self.combine, _take(left, slice(a, b)), _take(right, slice(a, b)))
            for a, b in zip(bounds[:-1], bounds[1:])
        ]
        return _concat([f.result() for f in futures])

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def tree_shape(n, sequential_threshold=SEQUENTIAL_THRESHOLD):
    """``(combines, depth)`` that :func:`prefix_scan` performs for length ``n``."""
    if n < 1:
        raise ValueError("scan length must be >= 1")
    if n <= sequential_threshold:
        return n - 1, n - 1
    depth = np.zeros(n, dtype=int)
    combines = 0
    for left, right in _schedule(n):
        depth[right] = np.maximum(depth[left], depth[right]) + 1
        combines += right.size
    return combines, int(depth.max())


def _schedule(n):
    """Yield ``(left, right)`` index pairs, one pair of arrays per tree level;
    each level performs ``x[right] = x[left] (+) x[right]``."""
    levels = max(1, math.ceil(math.log2(n)))
    for d in range(levels):
        step = 1 << (d + 1)
        right = np.arange(step - 1, n, step)
        if right.size:
            yield right - (step >> 1), right
    for d in range(levels - 2, -1, -1):
        step = 1 << (d + 1)
        right = np.arange(step - 1 + (step >> 1), n, step)
        if right.size:
            yield right - (step >> 1), right


def prefix_scan(elements, combine, *, reverse=False, workers=1, stats=None,
                sequential_threshold=SEQUENTIAL_THRESHOLD):
    """All inclusive prefix combinations of ``elements``.

    Forward: ``out[k] = e[0] (+) e[1] (+) ... (+) e[k]``.
    Reverse: ``out[k] = e[k] (+) e[k+1] (+) ... (+) e[N-1]``.

    ``combine(a, b)`` must be associative and act batch-wise. The input is
    not modified.
    """
    n = _length(elements)
    if n < 1:
        raise ValueError("cannot scan an empty sequence")
    if reverse:
        flipped = _take(elements, slice(None, None, -1))
        out = prefix_scan(flipped, lambda a, b: combine(b, a), workers=workers, stats=stats,
                          sequential_threshold=sequential_threshold)
        return _take(out, slice(None, None, -1))

    x = _copy(elements)
    local = ScanStats()
    if n <= sequential_threshold:
        for k in range(1, n):
            _put(x, slice(k, k + 1), combine(_take(x, slice(k - 1, k)), _take(x, slice(k, k + 1))))
        local.combines = local.depth = local.levels = n - 1
    else:
        run = _Runner(combine, workers)
        depth = np.zeros(n, dtype=int)
        try:
            for left, right in _schedule(n):
                _put(x, right, run(_take(x, left), _take(x, right)))
                depth[right] = np.maximum(depth[left], depth[right]) + 1
                local.combines += right.size
                local.levels += 1
        finally:
            run.close()
        local.depth = int(depth.max())
    if stats is not None:
        stats.merge(local)
    return x
