"""Vectorized fallbacks for the compiled kernels.

The sequential per-point semantics are kept: the nearest-neighbour search sweeps
candidates in the same cell/slot order, and insertion processes the k-th
incoming point of every voxel in round k.
"""
import numpy as np

from sageicp.kernels._keys import KEY_MASK, KEY_OFFSET, neighbor_offsets, pack_keys

ROLE_ORDINARY = 1
ROLE_CRITICAL = 2


def _lookup_rows(keys, valid, sorted_keys, sorted_rows):
    rows = np.full(len(keys), -1, dtype=np.int64)
    if len(sorted_keys) == 0:
        return rows
    pos = np.searchsorted(sorted_keys, keys)
    clipped = np.minimum(pos, len(sorted_keys) - 1)
    hit = valid & (pos < len(sorted_keys)) & (sorted_keys[clipped] == keys)
    rows[hit] = sorted_rows[clipped[hit]]
    return rows


def semantic_nn(src, src_labels, sorted_keys, sorted_rows, slot_points, slot_labels, counts,
                voxel_size, gamma0):
    n = len(src)
    best_row = np.full(n, -1, dtype=np.int64)
    best_slot = np.full(n, -1, dtype=np.int64)
    best_dist = np.full(n, np.inf)
    best_se = np.full(n, np.inf)
    if n == 0:
        return best_row, best_slot, best_dist
    base = np.floor(src / voxel_size).astype(np.int64)
    la = np.asarray(src_labels, dtype=np.int64)
    for off in neighbor_offsets():
        cell = base + off + KEY_OFFSET
        valid = np.all((cell >= 0) & (cell <= KEY_MASK), axis=1)
        keys = np.zeros(n, dtype=np.int64)
        keys[valid] = pack_keys(cell[valid] - KEY_OFFSET)
        rows = _lookup_rows(keys, valid, sorted_keys, sorted_rows)
        cnt = np.where(rows >= 0, counts[np.maximum(rows, 0)], 0)
        for s in range(int(cnt.max(initial=0))):
            idx = np.nonzero(s < cnt)[0]
            r = rows[idx]
            diff = slot_points[r, s] - src[idx]
            ex, ey, ez = diff[:, 0], diff[:, 1], diff[:, 2]
            d = np.sqrt(ex * ex + ey * ey + ez * ez)
            lb = slot_labels[r, s].astype(np.int64)
            lsrc = la[idx]
            same = (lb == lsrc) | (lb == 0) | (lsrc == 0)
            dse = np.where(same, gamma0 * d, d)
            cur_se = best_se[idx]
            better = (dse < cur_se) | ((dse == cur_se) & (d < best_dist[idx]))
            upd = idx[better]
            best_se[upd] = dse[better]
            best_dist[upd] = d[better]
            best_row[upd] = r[better]
            best_slot[upd] = s
    return best_row, best_slot, best_dist


def accumulate_system(src_world, targets, kappa):
    p = np.asarray(src_world)
    r = p - targets
    rr = np.einsum("ij,ij->i", r, r)
    k2 = kappa * kappa
    w = (k2 / (k2 + rr)) ** 2
    J = np.zeros((len(p), 3, 6))
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    J[:, 0, 1], J[:, 0, 2] = z, -y
    J[:, 1, 0], J[:, 1, 2] = -z, x
    J[:, 2, 0], J[:, 2, 1] = y, -x
    J[:, 0, 3] = J[:, 1, 4] = J[:, 2, 5] = 1.0
    H = np.einsum("n,nia,nib->ab", w, J, J)
    g = np.einsum("n,nia,ni->a", w, J, r)
    return H, g, float(np.sum(w * rr))


def insert_points(rows, roles, labels, points, slot_points, slot_labels, counts, n1, n2, adaptive):
    if len(rows) == 0:
        return
    order = np.argsort(rows, kind="stable")
    sorted_rows = rows[order]
    starts = np.r_[0, np.flatnonzero(np.diff(sorted_rows)) + 1]
    group_len = np.diff(np.r_[starts, len(rows)])
    rank = np.empty(len(rows), dtype=np.int64)
    rank[order] = np.arange(len(rows)) - np.repeat(starts, group_len)
    cap = slot_labels.shape[1]
    slot_ids = np.arange(cap)
    for k in range(int(group_len.max())):
        sel = np.nonzero(rank == k)[0]
        r = rows[sel]
        n = counts[r]
        append = n < n1
        if adaptive:
            mid = (n >= n1) & (n <= n2)
            append |= mid & (roles[sel] == ROLE_CRITICAL)
            repl = np.nonzero(mid & (roles[sel] == ROLE_ORDINARY))[0]
            if len(repl):
                rr = r[repl]
                free = (slot_labels[rr] == 0) & (slot_ids[None, :] < counts[rr][:, None])
                has = free.any(axis=1)
                first = np.argmax(free, axis=1)
                tgt_rows, tgt_slots, src_idx = rr[has], first[has], sel[repl[has]]
                slot_points[tgt_rows, tgt_slots] = points[src_idx]
                slot_labels[tgt_rows, tgt_slots] = labels[src_idx]
        a = np.nonzero(append)[0]
        if len(a):
            ra, na = r[a], n[a]
            slot_points[ra, na] = points[sel[a]]
            slot_labels[ra, na] = labels[sel[a]]
            counts[ra] = na + 1
