"""Vectorized numpy versions of the compiled pair-sum kernels.

Used when the Cython extension is not built. Results match the compiled
kernels up to floating point summation order inside each output element.
"""

import numpy as np


def _kern(z, kind):
    inside = np.abs(z) <= 1.0
    if kind == 0:
        return np.where(inside, 0.5, 0.0)
    return np.where(inside, 0.75 * (1.0 - z * z), 0.0)


def _expand_ranges(starts, stops):
    """Owner index and flat position for a batch of half-open ranges."""
    lengths = np.maximum(stops - starts, 0)
    total = int(lengths.sum())
    owner = np.repeat(np.arange(len(starts)), lengths)
    if total == 0:
        return owner, np.zeros(0, dtype=np.int64)
    first = np.cumsum(lengths) - lengths
    pos = np.arange(total) - np.repeat(first, lengths) + np.repeat(starts, lengths)
    return owner, pos


def upper_pairs(points, order, cell_start, cell_of, ncell, offsets, r_min, r_max):
    n, dim = points.shape
    cidx = np.empty((n, dim), dtype=np.int64)
    c = cell_of.copy()
    for ax in range(dim - 1, -1, -1):
        cidx[:, ax] = c % ncell[ax]
        c //= ncell[ax]
    out_i, out_j, out_d = [], [], []
    for off in offsets:
        nbr = cidx + off
        valid = np.all((nbr >= 0) & (nbr < ncell), axis=1)
        flat = np.zeros(n, dtype=np.int64)
        for ax in range(dim):
            flat = flat * ncell[ax] + nbr[:, ax]
        src = np.nonzero(valid)[0]
        owner, pos = _expand_ranges(cell_start[flat[src]], cell_start[flat[src] + 1])
        i = src[owner]
        j = order[pos]
        keep = j > i
        i, j = i[keep], j[keep]
        d = np.sqrt(np.sum((points[j] - points[i]) ** 2, axis=1))
        keep = (d * d > r_min * r_min) & (d * d < r_max * r_max)
        out_i.append(i[keep])
        out_j.append(j[keep])
        out_d.append(d[keep])
    if not out_i:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy(), np.zeros(0)
    return np.concatenate(out_i), np.concatenate(out_j), np.concatenate(out_d)


DIRECT_MAX = 256


def kernel_sums(t, d_sorted, weights, b, kind):
    lo = np.searchsorted(d_sorted, t - b, side="left")
    hi = np.searchsorted(d_sorted, t + b, side="right")
    inv_b = 1.0 / b
    out = np.zeros(len(t))
    small = hi - lo <= DIRECT_MAX
    idx = np.nonzero(small)[0]
    owner, pos = _expand_ranges(lo[idx], hi[idx])
    vals = _kern((t[idx][owner] - d_sorted[pos]) * inv_b, kind) * inv_b * weights[pos]
    out[idx] = np.bincount(owner, weights=vals, minlength=len(idx))
    big = np.nonzero(~small)[0]
    if big.size:
        # quadratic kernels: windowed sums from prefix sums of w, w d, w d^2
        c0 = np.concatenate([[0.0], np.cumsum(weights)])
        l, h, tm = lo[big], hi[big], t[big]
        s0 = c0[h] - c0[l]
        if kind == 0:
            out[big] = 0.5 * inv_b * s0
        else:
            c1 = np.concatenate([[0.0], np.cumsum(weights * d_sorted)])
            c2 = np.concatenate([[0.0], np.cumsum(weights * d_sorted * d_sorted)])
            s1 = c1[h] - c1[l]
            s2 = c2[h] - c2[l]
            out[big] = 0.75 * inv_b * (s0 - (tm * tm * s0 - 2.0 * tm * s1 + s2) * inv_b * inv_b)
    return out


def incident_sums(t, q_u, q_v, inc_ptr, inc_dist, inc_w, b, kind):
    # full segments; entries outside the kernel support contribute zero
    out = np.zeros(len(t))
    inv_b = 1.0 / b
    for ends in (q_u, q_v):
        owner, pos = _expand_ranges(inc_ptr[ends], inc_ptr[ends + 1])
        vals = _kern((t[owner] - inc_dist[pos]) * inv_b, kind) * inv_b * inc_w[pos]
        out += np.bincount(owner, weights=vals, minlength=len(t))
    return out
