"""Hot inner loops, each in a numba and a numpy flavour.

The public names at the bottom are bound to one flavour according to
``setdepth._accel.USE_NUMBA``. Both flavours stay importable so tests and the
benchmark can compare them directly; they must agree bit-for-bit.
"""
import numpy as np
from scipy import ndimage

from ._accel import USE_NUMBA, njit

INF = np.inf


# --------------------------------------------------------------------------
# exact squared Euclidean distance transform
# --------------------------------------------------------------------------

@njit
def _edt_1d(f, d, v, z):
    n = f.shape[0]
    k = 0
    v[0] = 0
    z[0] = -INF
    z[1] = INF
    # first finite sample anchors the envelope
    first = -1
    for q in range(n):
        if f[q] < INF:
            first = q
            break
    if first < 0:
        for q in range(n):
            d[q] = INF
        return
    v[0] = first
    for q in range(first + 1, n):
        if f[q] == INF:
            continue
        p = v[k]
        s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p)
        # z[0] = -inf, so the pop loop always stops at k >= 0
        while s <= z[k]:
            k -= 1
            p = v[k]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p)
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = INF
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        d[q] = (q - p) * (q - p) + f[p]


@njit
def _sq_edt_numba(mask):
    h, w = mask.shape
    out = np.empty((h, w), dtype=np.float64)
    n = max(h, w)
    f = np.empty(n, dtype=np.float64)
    d = np.empty(n, dtype=np.float64)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1, dtype=np.float64)
    for c in range(w):
        for r in range(h):
            f[r] = 0.0 if mask[r, c] else INF
        _edt_1d(f[:h], d[:h], v, z)
        for r in range(h):
            out[r, c] = d[r]
    for r in range(h):
        for c in range(w):
            f[c] = out[r, c]
        _edt_1d(f[:w], d[:w], v, z)
        for c in range(w):
            out[r, c] = d[c]
    return out


def _sq_edt_numpy(mask):
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return np.full(mask.shape, INF)
    _, (ir, ic) = ndimage.distance_transform_edt(~mask, return_indices=True)
    rr, cc = np.indices(mask.shape)
    # integer arithmetic keeps the result identical to the numba path
    return ((rr - ir) ** 2 + (cc - ic) ** 2).astype(np.float64)


# --------------------------------------------------------------------------
# sandwich counting: lower <= probe <= upper on packed bit rows
# --------------------------------------------------------------------------

@njit
def _sandwich_counts_numba(lower, upper, probes):
    s, cl, w = lower.shape
    cu = upper.shape[1]
    k_n = probes.shape[0]
    counts = np.zeros(k_n, dtype=np.int64)
    for k in range(k_n):
        f = probes[k]
        total = 0
        for j in range(s):
            found = False
            for c in range(cl):
                ok = True
                for t in range(w):
                    if lower[j, c, t] & ~f[t]:
                        ok = False
                        break
                if ok:
                    found = True
                    break
            if not found:
                continue
            found = False
            for c in range(cu):
                ok = True
                for t in range(w):
                    if f[t] & ~upper[j, c, t]:
                        ok = False
                        break
                if ok:
                    found = True
                    break
            if found:
                total += 1
        counts[k] = total
    return counts


def _sandwich_counts_numpy(lower, upper, probes):
    counts = np.zeros(probes.shape[0], dtype=np.int64)
    for k, f in enumerate(probes):
        low_ok = ~(lower & ~f).any(axis=2)
        up_ok = ~(f & ~upper).any(axis=2)
        counts[k] = np.count_nonzero(low_ok.any(axis=1) & up_ok.any(axis=1))
    return counts


# --------------------------------------------------------------------------
# dilation of a boolean image by a list of integer shifts
# --------------------------------------------------------------------------

@njit
def _dilate_points_numba(src, shifts, out_h, out_w):
    out = np.zeros((out_h, out_w), dtype=np.bool_)
    h, w = src.shape
    for r in range(h):
        for c in range(w):
            if src[r, c]:
                for t in range(shifts.shape[0]):
                    out[r + shifts[t, 0], c + shifts[t, 1]] = True
    return out


def _dilate_points_numpy(src, shifts, out_h, out_w):
    out = np.zeros((out_h, out_w), dtype=bool)
    h, w = src.shape
    for dr, dc in shifts:
        out[dr:dr + h, dc:dc + w] |= src
    return out


# --------------------------------------------------------------------------
# per-pixel two-sided rank counts from pool-wide dense ranks
# --------------------------------------------------------------------------

def dense_ranks(values):
    """Per-row dense ranks of a (P, K) array: equal values share a rank, starting at 0."""
    order = np.argsort(values, axis=1, kind="stable")
    srt = np.take_along_axis(values, order, axis=1)
    steps = np.zeros(srt.shape, dtype=np.int32)
    steps[:, 1:] = np.diff(srt, axis=1) > 0
    ranks = np.empty_like(steps)
    np.put_along_axis(ranks, order, np.cumsum(steps, axis=1, dtype=np.int32), axis=1)
    return ranks


@njit
def _rank_depth_counts_numba(ranks, ref, probes):
    # ranks: (P, K) dense ranks over the pool; ref, probes index its columns.
    # Returns sum over pixels of min(#ref <= probe, #ref >= probe) per probe.
    p_n, k_n = ranks.shape
    m = ref.shape[0]
    out = np.zeros(probes.shape[0], dtype=np.int64)
    cum = np.zeros(k_n + 1, dtype=np.int64)
    for p in range(p_n):
        row = ranks[p]
        cum[:] = 0
        for i in range(m):
            cum[row[ref[i]] + 1] += 1
        for r in range(k_n):
            cum[r + 1] += cum[r]
        for j in range(probes.shape[0]):
            r = row[probes[j]]
            le = cum[r + 1]
            ge = m - cum[r]
            out[j] += le if le < ge else ge
    return out


def _rank_depth_counts_numpy(ranks, ref, probes):
    p_n, k_n = ranks.shape
    m = len(ref)
    flat = (np.arange(p_n)[:, None] * (k_n + 1) + ranks[:, ref] + 1).ravel()
    cum = np.bincount(flat, minlength=p_n * (k_n + 1)).reshape(p_n, k_n + 1).cumsum(axis=1)
    r = ranks[:, probes]
    le = np.take_along_axis(cum, r + 1, axis=1)
    ge = m - np.take_along_axis(cum, r, axis=1)
    return np.minimum(le, ge).sum(axis=0)


if USE_NUMBA:
    sq_edt = _sq_edt_numba
    sandwich_counts = _sandwich_counts_numba
    dilate_points = _dilate_points_numba
    rank_depth_counts = _rank_depth_counts_numba
else:
    sq_edt = _sq_edt_numpy
    sandwich_counts = _sandwich_counts_numpy
    dilate_points = _dilate_points_numpy
    rank_depth_counts = _rank_depth_counts_numpy


def pack_rows(rows):
    """Pack a (k, p) boolean array into (k, ceil(p/64)) uint64 words."""
    rows = np.ascontiguousarray(rows, dtype=bool)
    k, p = rows.shape
    nbytes = -(-p // 8)
    nwords = max(1, -(-nbytes // 8))
    packed = np.zeros((k, nwords * 8), dtype=np.uint8)
    if p:
        packed[:, :nbytes] = np.packbits(rows, axis=1)
    return packed.view(np.uint64)
