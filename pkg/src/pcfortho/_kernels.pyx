# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pair-sum kernels.

Same call signatures as :mod:`pcfortho._kernels_py`; the backend is chosen in
:mod:`pcfortho._backend`.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef inline double _kern(double z, int kind) noexcept nogil:
    # z already scaled by 1/b; kind 0 = uniform, 1 = epanechnikov
    if z < -1.0 or z > 1.0:
        return 0.0
    if kind == 0:
        return 0.5
    return 0.75 * (1.0 - z * z)


def upper_pairs(const double[:, ::1] points, const long[::1] order,
                const long[::1] cell_start, const long[::1] cell_of,
                const long[::1] ncell, const long[:, ::1] offsets,
                double r_min, double r_max):
    """Unordered pairs i < j with r_min < |x_j - x_i| < r_max from a cell grid.

    ``order`` lists point indices sorted by cell, ``cell_start`` is the CSR
    offset of each flattened cell, ``cell_of`` the flattened cell of each
    point (per-axis index packed row-major with strides from ``ncell``).
    """
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t dim = points.shape[1]
    cdef Py_ssize_t noff = offsets.shape[0]
    cdef Py_ssize_t i, j, a, o, s, cap, count = 0
    cdef long c, rem, nb, stride, ax
    cdef double dist2, diff, lo2 = r_min * r_min, hi2 = r_max * r_max
    cdef long cidx[8]
    cdef bint ok

    cap = max(16, 8 * n)
    out_i = np.empty(cap, dtype=np.int64)
    out_j = np.empty(cap, dtype=np.int64)
    out_d = np.empty(cap, dtype=np.float64)
    cdef long[::1] vi = out_i
    cdef long[::1] vj = out_j
    cdef double[::1] vd = out_d

    for i in range(n):
        # unpack the cell coordinates of point i
        c = cell_of[i]
        for ax in range(dim - 1, -1, -1):
            cidx[ax] = c % ncell[ax]
            c = c // ncell[ax]
        for o in range(noff):
            nb = 0
            ok = True
            for ax in range(dim):
                rem = cidx[ax] + offsets[o, ax]
                if rem < 0 or rem >= ncell[ax]:
                    ok = False
                    break
                nb = nb * ncell[ax] + rem
            if not ok:
                continue
            for s in range(cell_start[nb], cell_start[nb + 1]):
                j = order[s]
                if j <= i:
                    continue
                dist2 = 0.0
                for a in range(dim):
                    diff = points[j, a] - points[i, a]
                    dist2 += diff * diff
                if dist2 <= lo2 or dist2 >= hi2:
                    continue
                if count == cap:
                    cap *= 2
                    out_i = np.resize(out_i, cap)
                    out_j = np.resize(out_j, cap)
                    out_d = np.resize(out_d, cap)
                    vi = out_i
                    vj = out_j
                    vd = out_d
                vi[count] = i
                vj[count] = j
                vd[count] = sqrt(dist2)
                count += 1
    return out_i[:count].copy(), out_j[:count].copy(), out_d[:count].copy()


DIRECT_MAX = 256


def kernel_sums(const double[::1] t, const double[::1] d_sorted,
                const double[::1] weights,
                double b, int kind):
    """out[m] = sum_p k_b(t[m] - d_p) * weights[p] for sorted distances.

    Windows holding more than DIRECT_MAX pairs are summed from prefix sums of
    w, w d and w d^2 (both kernels are quadratic in d on their support).
    """
    cdef Py_ssize_t m, p, lo, hi, mid, nt = t.shape[0], npair = d_sorted.shape[0]
    cdef Py_ssize_t direct_max = DIRECT_MAX
    cdef double acc, tm, s0, s1, s2, inv_b = 1.0 / b
    out = np.zeros(nt, dtype=np.float64)
    cdef double[::1] vo = out
    c0_arr = np.zeros(npair + 1)
    c1_arr = np.zeros(npair + 1)
    c2_arr = np.zeros(npair + 1)
    cdef double[::1] c0 = c0_arr
    cdef double[::1] c1 = c1_arr
    cdef double[::1] c2 = c2_arr
    with nogil:
        for p in range(npair):
            c0[p + 1] = c0[p] + weights[p]
            c1[p + 1] = c1[p] + weights[p] * d_sorted[p]
            c2[p + 1] = c2[p] + weights[p] * d_sorted[p] * d_sorted[p]
        for m in range(nt):
            tm = t[m]
            lo = 0
            hi = npair
            while lo < hi:
                mid = (lo + hi) // 2
                if d_sorted[mid] < tm - b:
                    lo = mid + 1
                else:
                    hi = mid
            # first index beyond tm + b
            p = lo
            hi = npair
            while p < hi:
                mid = (p + hi) // 2
                if d_sorted[mid] <= tm + b:
                    p = mid + 1
                else:
                    hi = mid
            hi = p
            if hi - lo <= direct_max:
                acc = 0.0
                for p in range(lo, hi):
                    acc += _kern((tm - d_sorted[p]) * inv_b, kind) * inv_b * weights[p]
            else:
                s0 = c0[hi] - c0[lo]
                if kind == 0:
                    acc = 0.5 * inv_b * s0
                else:
                    s1 = c1[hi] - c1[lo]
                    s2 = c2[hi] - c2[lo]
                    acc = 0.75 * inv_b * (s0 - (tm * tm * s0 - 2.0 * tm * s1 + s2) * inv_b * inv_b)
            vo[m] = acc
    return out


def incident_sums(const double[::1] t, const long[::1] q_u, const long[::1] q_v,
                  const long[::1] inc_ptr, const double[::1] inc_dist,
                  const double[::1] inc_w, double b, int kind):
    """For each query q: kernel sum over pairs incident to q_u plus pairs incident to q_v.

    ``inc_dist`` must be sorted within each point's segment so the kernel
    support is located by binary search. Pairs touching both endpoints are
    counted twice; callers subtract them.
    """
    cdef Py_ssize_t q, s, lo, hi, mid, nq = t.shape[0]
    cdef long pt
    cdef int side
    cdef double acc, tq, left, right, inv_b = 1.0 / b
    out = np.zeros(nq, dtype=np.float64)
    cdef double[::1] vo = out
    with nogil:
        for q in range(nq):
            tq = t[q]
            left = tq - b
            right = tq + b
            acc = 0.0
            for side in range(2):
                pt = q_u[q] if side == 0 else q_v[q]
                lo = inc_ptr[pt]
                hi = inc_ptr[pt + 1]
                while lo < hi:
                    mid = (lo + hi) // 2
                    if inc_dist[mid] < left:
                        lo = mid + 1
                    else:
                        hi = mid
                s = lo
                hi = inc_ptr[pt + 1]
                while s < hi and inc_dist[s] <= right:
                    acc += _kern((tq - inc_dist[s]) * inv_b, kind) * inv_b * inc_w[s]
                    s += 1
            vo[q] = acc
    return out
