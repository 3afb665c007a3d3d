"""Compiled inner loops. Signatures mirror ``_numpy`` one-to-one."""
import math
import os

import numba
import numpy as np
from numba import njit, prange

from sageicp.kernels._keys import KEY_BITS, KEY_MASK, KEY_OFFSET

if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    # an outdated system TBB only produces a warning; try the others first
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

ROLE_ORDINARY = 1
ROLE_CRITICAL = 2


# queries are independent, so the outer loop runs across threads
@njit(cache=True, parallel=True)
def semantic_nn(src, src_labels, sorted_keys, sorted_rows, slot_points, slot_labels, counts,
                voxel_size, gamma0):
    n = src.shape[0]
    nk = sorted_keys.shape[0]
    cap = slot_labels.shape[1]
    best_row = np.full(n, -1, dtype=np.int64)
    best_slot = np.full(n, -1, dtype=np.int64)
    best_dist = np.full(n, np.inf)
    for i in prange(n):
        px = src[i, 0]
        py = src[i, 1]
        pz = src[i, 2]
        vi = np.int64(np.floor(px / voxel_size))
        vj = np.int64(np.floor(py / voxel_size))
        vk = np.int64(np.floor(pz / voxel_size))
        la = src_labels[i]
        b_se = np.inf
        b_d = np.inf
        b_rank = -1
        b_r = -1
        b_s = -1
        # own cell first for an early bound; the rank keeps ties in lexicographic cell order
        for step in range(28):
            if step == 0:
                cell = 13
            elif step == 14:
                continue
            else:
                cell = step - 1
            dx = cell // 9 - 1
            dy = (cell // 3) % 3 - 1
            dz = cell % 3 - 1
            a = vi + dx + KEY_OFFSET
            b = vj + dy + KEY_OFFSET
            c = vk + dz + KEY_OFFSET
            if a < 0 or a > KEY_MASK or b < 0 or b > KEY_MASK or c < 0 or c > KEY_MASK:
                continue
            if step > 0:
                gx = max((vi + dx) * voxel_size - px, 0.0, px - (vi + dx + 1) * voxel_size)
                gy = max((vj + dy) * voxel_size - py, 0.0, py - (vj + dy + 1) * voxel_size)
                gz = max((vk + dz) * voxel_size - pz, 0.0, pz - (vk + dz + 1) * voxel_size)
                lower = gamma0 * math.sqrt(gx * gx + gy * gy + gz * gz)
                if lower > b_se * (1.0 + 1e-9) + 1e-12:
                    continue
            key = (a << (2 * KEY_BITS)) | (b << KEY_BITS) | c
            pos = np.searchsorted(sorted_keys, key)
            if pos >= nk or sorted_keys[pos] != key:
                continue
            r = sorted_rows[pos]
            for s in range(counts[r]):
                ex = slot_points[r, s, 0] - px
                ey = slot_points[r, s, 1] - py
                ez = slot_points[r, s, 2] - pz
                d = math.sqrt(ex * ex + ey * ey + ez * ez)
                lb = slot_labels[r, s]
                if lb == la or lb == 0 or la == 0:
                    dse = gamma0 * d
                else:
                    dse = d
                rank = cell * cap + s
                if dse < b_se or (dse == b_se and (d < b_d or (d == b_d and rank < b_rank))):
                    b_se = dse
                    b_d = d
                    b_rank = rank
                    b_r = r
                    b_s = s
        best_row[i] = b_r
        best_slot[i] = b_s
        best_dist[i] = b_d
    return best_row, best_slot, best_dist


@njit(cache=True)
def accumulate_system(src_world, targets, kappa):
    H = np.zeros((6, 6))
    g = np.zeros(6)
    J = np.zeros((3, 6))
    cost = 0.0
    k2 = kappa * kappa
    for i in range(src_world.shape[0]):
        x = src_world[i, 0]
        y = src_world[i, 1]
        z = src_world[i, 2]
        r0 = x - targets[i, 0]
        r1 = y - targets[i, 1]
        r2 = z - targets[i, 2]
        rr = r0 * r0 + r1 * r1 + r2 * r2
        q = k2 / (k2 + rr)
        w = q * q
        # J = [-skew(p) | I]
        J[0, 0] = 0.0
        J[0, 1] = z
        J[0, 2] = -y
        J[1, 0] = -z
        J[1, 1] = 0.0
        J[1, 2] = x
        J[2, 0] = y
        J[2, 1] = -x
        J[2, 2] = 0.0
        J[0, 3] = 1.0
        J[1, 4] = 1.0
        J[2, 5] = 1.0
        for a in range(6):
            g[a] += w * (J[0, a] * r0 + J[1, a] * r1 + J[2, a] * r2)
            for b in range(6):
                H[a, b] += w * (J[0, a] * J[0, b] + J[1, a] * J[1, b] + J[2, a] * J[2, b])
        cost += w * rr
    return H, g, cost


@njit(cache=True)
def insert_points(rows, roles, labels, points, slot_points, slot_labels, counts, n1, n2, adaptive):
    for i in range(rows.shape[0]):
        r = rows[i]
        n = counts[r]
        append = False
        if n < n1:
            append = True
        elif adaptive and n <= n2:
            if roles[i] == ROLE_ORDINARY:
                for s in range(n):
                    if slot_labels[r, s] == 0:
                        slot_points[r, s, 0] = points[i, 0]
                        slot_points[r, s, 1] = points[i, 1]
                        slot_points[r, s, 2] = points[i, 2]
                        slot_labels[r, s] = labels[i]
                        break
            elif roles[i] == ROLE_CRITICAL:
                append = True
        if append:
            slot_points[r, n, 0] = points[i, 0]
            slot_points[r, n, 1] = points[i, 1]
            slot_points[r, n, 2] = points[i, 2]
            slot_labels[r, n] = labels[i]
            counts[r] = n + 1
