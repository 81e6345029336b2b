"""Vectorized triangle primitives shared by the BVH and the brute-force paths.

Both traversal strategies evaluate the exact same arithmetic per (ray, face) pair, so a hit found by one is
reported with a bit-identical distance by the other.
"""

from __future__ import annotations

import numpy as np

from calyx_assess.arrays import FloatArray, IntArray


class RayShear:
    """Per-ray constants of the watertight ray/triangle test"""

    __slots__ = ("kx", "ky", "kz", "origins", "sx", "sy", "sz")

    def __init__(self, origins: FloatArray, directions: FloatArray) -> None:
        kz = np.argmax(np.abs(directions), axis=1)
        kx = (kz + 1) % 3
        ky = (kx + 1) % 3
        rows = np.arange(len(directions))
        dz = directions[rows, kz]
        swap = dz < 0
        kx, ky = np.where(swap, ky, kx), np.where(swap, kx, ky)
        self.kx: IntArray = kx
        self.ky: IntArray = ky
        self.kz: IntArray = kz
        self.sx: FloatArray = directions[rows, kx] / dz
        self.sy: FloatArray = directions[rows, ky] / dz
        self.sz: FloatArray = 1.0 / dz
        self.origins = origins


def intersect_pairs(
    shear: RayShear, ray_idx: IntArray, v0: FloatArray, v1: FloatArray, v2: FloatArray, face_idx: IntArray
) -> FloatArray:
    """Intersect rays with triangles pairwise.

    :param shear: Precomputed ray constants
    :param ray_idx: (P,) ray index of each pair
    :param v0: (F, 3) first vertices of all faces
    :param v1: (F, 3) second vertices of all faces
    :param v2: (F, 3) third vertices of all faces
    :param face_idx: (P,) face index of each pair
    :returns: (P,) hit distance along the ray, NaN for a miss. Edge and vertex hits are inclusive
    """
    o = shear.origins[ray_idx]
    a = v0[face_idx] - o
    b = v1[face_idx] - o
    c = v2[face_idx] - o
    rows = np.arange(len(ray_idx))
    kx = shear.kx[ray_idx]
    ky = shear.ky[ray_idx]
    kz = shear.kz[ray_idx]
    sx = shear.sx[ray_idx]
    sy = shear.sy[ray_idx]
    sz = shear.sz[ray_idx]

    az, bz, cz = a[rows, kz], b[rows, kz], c[rows, kz]
    ax = a[rows, kx] - sx * az
    ay = a[rows, ky] - sy * az
    bx = b[rows, kx] - sx * bz
    by = b[rows, ky] - sy * bz
    cx = c[rows, kx] - sx * cz
    cy = c[rows, ky] - sy * cz

    u = cx * by - cy * bx
    v = ax * cy - ay * cx
    w = bx * ay - by * ax
    mixed = ((u < 0) | (v < 0) | (w < 0)) & ((u > 0) | (v > 0) | (w > 0))
    det = u + v + w
    t_scaled = u * (sz * az) + v * (sz * bz) + w * (sz * cz)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = t_scaled / det
    t[mixed | (det == 0)] = np.nan
    return t


def closest_points_on_triangles(p: FloatArray, a: FloatArray, b: FloatArray, c: FloatArray) -> FloatArray:
    """Return the closest point on each triangle (a, b, c) to the matching query point p (all (P, 3))"""
    ab = b - a
    ac = c - a
    ap = p - a
    bp = p - b
    cp = p - c
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = 1.0 / (va + vb + vc)
        result = a + ab * (vb * denom)[:, None] + ac * (vc * denom)[:, None]

        # Voronoi regions, assigned lowest priority first so that earlier regions win
        in_bc = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        result = np.where(in_bc[:, None], b + (c - b) * w_bc[:, None], result)

        in_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        w_ac = d2 / (d2 - d6)
        result = np.where(in_ac[:, None], a + ac * w_ac[:, None], result)

        result = np.where(((d6 >= 0) & (d5 <= d6))[:, None], c, result)

        in_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        v_ab = d1 / (d1 - d3)
        result = np.where(in_ab[:, None], a + ab * v_ab[:, None], result)

    result = np.where(((d3 >= 0) & (d4 <= d3))[:, None], b, result)
    result = np.where(((d1 <= 0) & (d2 <= 0))[:, None], a, result)
    return result
