from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np

from calyx_assess.arrays import BoolArray, FloatArray, IntArray, frozen
from calyx_assess.constants import BVH_BOX_PADDING_MM, BVH_LEAF_SIZE
from calyx_assess.geometry.intersect import RayShear, intersect_pairs

logger = logging.getLogger(__name__)

TraversalMode = Literal["nearest", "any", "all"]


@dataclass(frozen=True, kw_only=True, slots=True)
class Bvh:
    """Axis-aligned bounding volume hierarchy over the faces of a triangle mesh, stored as flat arrays.

    Node 0 is the root. Internal nodes have left/right children; leaves reference the contiguous slice
    face_order[start:start + count].
    """

    node_lo: FloatArray
    node_hi: FloatArray
    left: IntArray
    right: IntArray
    start: IntArray
    count: IntArray
    face_order: IntArray

    @property
    def node_count(self) -> int:
        return len(self.left)


def build_bvh(v0: FloatArray, v1: FloatArray, v2: FloatArray, *, leaf_size: int = BVH_LEAF_SIZE) -> Bvh:
    """Build a BVH by median split along the longest centroid extent

    :param v0: (F, 3) first vertices of all faces
    :param v1: (F, 3) second vertices of all faces
    :param v2: (F, 3) third vertices of all faces
    :param leaf_size: Maximum number of faces stored in a leaf
    """
    n_faces = len(v0)
    face_lo = np.minimum(np.minimum(v0, v1), v2)
    face_hi = np.maximum(np.maximum(v0, v1), v2)
    centroids = (v0 + v1 + v2) / 3.0
    order = np.arange(n_faces, dtype=np.int64)

    lo_list: list[FloatArray] = []
    hi_list: list[FloatArray] = []
    left: list[int] = []
    right: list[int] = []
    start: list[int] = []
    count: list[int] = []

    def new_node() -> int:
        lo_list.append(np.full(3, np.inf))
        hi_list.append(np.full(3, -np.inf))
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        return len(left) - 1

    root = new_node()
    stack = [(root, 0, n_faces)]
    while stack:
        node, s, e = stack.pop()
        idx = order[s:e]
        if e > s:
            lo_list[node] = face_lo[idx].min(axis=0) - BVH_BOX_PADDING_MM
            hi_list[node] = face_hi[idx].max(axis=0) + BVH_BOX_PADDING_MM
        c = centroids[idx]
        if e - s <= leaf_size:
            start[node], count[node] = s, e - s
            continue
        extent = c.max(axis=0) - c.min(axis=0)
        axis = int(np.argmax(extent))
        if extent[axis] <= 0:
            # all centroids coincide; no split can separate them
            start[node], count[node] = s, e - s
            continue
        mid = (e - s) // 2
        part = np.argpartition(c[:, axis], mid, kind="introselect")
        order[s:e] = idx[part]
        lchild = new_node()
        rchild = new_node()
        left[node], right[node] = lchild, rchild
        stack.append((rchild, s + mid, e))
        stack.append((lchild, s, s + mid))

    bvh = Bvh(
        node_lo=frozen(np.asarray(lo_list, dtype=np.float64).reshape(-1, 3)),
        node_hi=frozen(np.asarray(hi_list, dtype=np.float64).reshape(-1, 3)),
        left=frozen(np.asarray(left, dtype=np.int64)),
        right=frozen(np.asarray(right, dtype=np.int64)),
        start=frozen(np.asarray(start, dtype=np.int64)),
        count=frozen(np.asarray(count, dtype=np.int64)),
        face_order=frozen(order),
    )
    logger.debug(f"Built BVH over {n_faces} faces with {bvh.node_count} nodes")
    return bvh


@dataclass(frozen=True, kw_only=True, slots=True)
class TraversalResult:
    """Outcome of a batched BVH traversal.

    nearest: face/t hold the closest hit per ray (-1/inf on a miss)
    any: occluded flags rays with at least one hit in (t_min, t_max)
    all: hit_rays/hit_t list every hit as (ray, t) pairs
    """

    face: IntArray | None = None
    t: FloatArray | None = None
    occluded: BoolArray | None = None
    hit_rays: IntArray | None = None
    hit_t: FloatArray | None = None


def traverse(
    bvh: Bvh,
    v0: FloatArray,
    v1: FloatArray,
    v2: FloatArray,
    origins: FloatArray,
    directions: FloatArray,
    *,
    t_min: float,
    t_max: FloatArray,
    mode: TraversalMode,
) -> TraversalResult:
    """Traverse the hierarchy for a batch of rays, breadth-first over (ray, node) pairs

    :param bvh: Hierarchy built over (v0, v1, v2)
    :param v0: (F, 3) first vertices of all faces
    :param v1: (F, 3) second vertices of all faces
    :param v2: (F, 3) third vertices of all faces
    :param origins: (R, 3) ray origins
    :param directions: (R, 3) unit ray directions
    :param t_min: Hits at or closer than this distance are ignored
    :param t_max: (R,) hits at or beyond this distance are ignored (strict upper bound)
    :param mode: Traversal mode
    """
    n_rays = len(origins)
    shear = RayShear(origins, directions)
    with np.errstate(divide="ignore"):
        inv_dir = 1.0 / directions

    best_t = t_max.astype(np.float64, copy=True)
    best_face = np.full(n_rays, -1, dtype=np.int64)
    occluded = np.zeros(n_rays, dtype=bool)
    hit_rays: list[IntArray] = []
    hit_t: list[FloatArray] = []

    n_faces = len(v0)
    rays = np.arange(n_rays, dtype=np.int64) if n_faces else np.empty(0, dtype=np.int64)
    nodes = np.zeros(len(rays), dtype=np.int64)

    while len(rays):
        o = origins[rays]
        inv = inv_dir[rays]
        with np.errstate(invalid="ignore"):
            t1 = (bvh.node_lo[nodes] - o) * inv
            t2 = (bvh.node_hi[nodes] - o) * inv
        undefined = np.isnan(t1) | np.isnan(t2)
        slab_near = np.where(undefined, -np.inf, np.minimum(t1, t2))
        slab_far = np.where(undefined, np.inf, np.maximum(t1, t2))
        t_near = slab_near.max(axis=1)
        t_far = slab_far.min(axis=1)
        bound = best_t[rays]
        keep = (t_near <= t_far) & (t_far > t_min) & (t_near <= bound)
        if mode == "any":
            keep &= ~occluded[rays]
        rays, nodes = rays[keep], nodes[keep]

        leaf = bvh.left[nodes] < 0
        leaf_rays, leaf_nodes = rays[leaf], nodes[leaf]
        inner_rays, inner_nodes = rays[~leaf], nodes[~leaf]

        if len(leaf_rays):
            counts = bvh.count[leaf_nodes]
            total = int(counts.sum())
            pair_rays = np.repeat(leaf_rays, counts)
            offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
            pair_faces = bvh.face_order[np.repeat(bvh.start[leaf_nodes], counts) + offsets]
            t = intersect_pairs(shear, pair_rays, v0, v1, v2, pair_faces)
            with np.errstate(invalid="ignore"):
                valid = (t > t_min) & (t < t_max[pair_rays])
            pair_rays, pair_faces, t = pair_rays[valid], pair_faces[valid], t[valid]
            if mode == "nearest":
                _update_nearest(best_t, best_face, pair_rays, pair_faces, t)
            elif mode == "any":
                occluded[pair_rays] = True
            else:
                hit_rays.append(pair_rays)
                hit_t.append(t)

        rays = np.concatenate([inner_rays, inner_rays])
        nodes = np.concatenate([bvh.left[inner_nodes], bvh.right[inner_nodes]])

    if mode == "nearest":
        best_t[best_face < 0] = np.inf
        return TraversalResult(face=best_face, t=best_t)
    if mode == "any":
        return TraversalResult(occluded=occluded)
    return TraversalResult(
        hit_rays=np.concatenate(hit_rays) if hit_rays else np.empty(0, dtype=np.int64),
        hit_t=np.concatenate(hit_t) if hit_t else np.empty(0),
    )


def _update_nearest(
    best_t: FloatArray, best_face: IntArray, rays: IntArray, faces: IntArray, t: FloatArray
) -> None:
    """Fold candidate hits into the running per-ray best. Ties on t go to the lowest face index"""
    if not len(rays):
        return
    order = np.lexsort((faces, t, rays))
    rays, faces, t = rays[order], faces[order], t[order]
    first = np.ones(len(rays), dtype=bool)
    first[1:] = rays[1:] != rays[:-1]
    rays, faces, t = rays[first], faces[first], t[first]
    cur_t = best_t[rays]
    cur_face = best_face[rays]
    better = (t < cur_t) | ((t == cur_t) & ((cur_face < 0) | (faces < cur_face)))
    best_t[rays[better]] = t[better]
    best_face[rays[better]] = faces[better]
