from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from calyx_assess.arrays import FloatArray, IntArray
from calyx_assess.constants import DEFAULT_RATIO_TEST
from calyx_assess.exceptions import DimensionMismatch

__all__ = ["match_descriptors"]


def match_descriptors(q_desc: FloatArray, r_desc: FloatArray, ratio: float = DEFAULT_RATIO_TEST) -> IntArray:
    """Mutual nearest-neighbour matching with a ratio test.

    A query descriptor matches its nearest reference descriptor when that reference's nearest query descriptor
    is the same one and the nearest distance is below ``ratio`` times the second nearest. With a single reference
    descriptor the ratio test always passes.

    :param q_desc: (Nq, d) query descriptors
    :param r_desc: (Nr, d) reference descriptors
    :param ratio: Ratio test threshold
    :returns: (M, 2) array of (query index, reference index) pairs sorted by query index
    """
    q = np.asarray(q_desc, dtype=np.float64)
    r = np.asarray(r_desc, dtype=np.float64)
    if not len(q) or not len(r):
        return np.empty((0, 2), dtype=np.int64)
    if q.shape[1] != r.shape[1]:
        raise DimensionMismatch(f"Descriptor dimensions differ: query {q.shape[1]}, reference {r.shape[1]}")

    dist = cdist(q, r)
    nn_q = np.argmin(dist, axis=1)
    nn_r = np.argmin(dist, axis=0)
    query_idx = np.arange(len(q))
    mutual = nn_r[nn_q] == query_idx
    best = dist[query_idx, nn_q]
    if len(r) > 1:
        second = np.partition(dist, 1, axis=1)[:, 1]
    else:
        second = np.full(len(q), np.inf)
    keep = mutual & (best < ratio * second)
    return np.stack([query_idx[keep], nn_q[keep]], axis=1).astype(np.int64)
