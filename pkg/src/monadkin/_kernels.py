"""Hot inner loops, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports and ``MONADKIN_DISABLE_NUMBA`` is
unset (or ``0``).  Both paths are always defined so that the benchmark and
the tests can compare them directly.
"""
import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("MONADKIN_DISABLE_NUMBA", "0") not in ("1", "true", "yes")

# 4th-order stencils.  Interior rows use offsets -2..2; the closure rows use
# nodes 0..5 counted from the wall and are mirrored at the right edge (with a
# sign flip for the odd derivative).
_INTERIOR = {
    1: np.array([1.0, -8.0, 0.0, 8.0, -1.0]),
    2: np.array([-1.0, 16.0, -30.0, 16.0, -1.0]),
}
_CLOSURE = {
    1: np.array(
        [
            [-25.0, 48.0, -36.0, 16.0, -3.0, 0.0],
            [-3.0, -10.0, 18.0, -6.0, 1.0, 0.0],
        ]
    ),
    2: np.array(
        [
            [45.0, -154.0, 214.0, -156.0, 61.0, -10.0],
            [10.0, -15.0, -4.0, 14.0, -6.0, 1.0],
        ]
    ),
}


def _wrap_numpy(d, period):
    if period > 0.0:
        return d - period * np.round(d / period)
    return d


def fd4_lines_numpy(lines, h, order, period):
    n = lines.shape[1]
    denom = 12.0 * h**order
    interior = _INTERIOR[order]
    closure = _CLOSURE[order]
    sign = -1.0 if order % 2 else 1.0
    out = np.empty_like(lines)

    center = lines[:, 2 : n - 2]
    acc = np.zeros_like(center)
    for k, c in enumerate(interior):
        if c == 0.0:
            continue
        off = k - 2
        d = _wrap_numpy(lines[:, 2 + off : n - 2 + off] - center, period)
        acc += c * d
    out[:, 2 : n - 2] = acc / denom

    flipped = lines[:, ::-1]
    for row in range(2):
        d = _wrap_numpy(lines[:, :6] - lines[:, row : row + 1], period)
        out[:, row] = d @ closure[row] / denom
        d = _wrap_numpy(flipped[:, :6] - flipped[:, row : row + 1], period)
        out[:, n - 1 - row] = sign * (d @ closure[row]) / denom
    return out


def bin_moments_numpy(bin_idx, v, nbins):
    """Per-bin count, mean and raw sums of central-velocity products.

    Returns ``counts, mean, c2, c3, c4, c6`` where ``c2[b]`` is the summed
    outer product of the peculiar velocity ``c = v - mean``, ``c3[b]`` the
    summed ``|c|^2 c``, ``c4[b]`` the summed ``|c|^4`` and ``c6[b]`` the
    summed ``(|c|^2 c)**2`` per component.  Samples with ``bin_idx < 0`` are
    ignored.
    """
    dim = v.shape[1]
    ok = bin_idx >= 0
    idx = bin_idx[ok]
    vv = v[ok]
    counts = np.bincount(idx, minlength=nbins).astype(np.int64)
    mean = np.zeros((nbins, dim))
    safe = np.maximum(counts, 1)
    for a in range(dim):
        mean[:, a] = np.bincount(idx, weights=vv[:, a], minlength=nbins) / safe
    c = vv - mean[idx]
    c_sq = np.sum(c * c, axis=1)
    c2 = np.zeros((nbins, dim, dim))
    c3 = np.zeros((nbins, dim))
    c6 = np.zeros((nbins, dim))
    for a in range(dim):
        for b in range(dim):
            c2[:, a, b] = np.bincount(idx, weights=c[:, a] * c[:, b], minlength=nbins)
        q = c_sq * c[:, a]
        c3[:, a] = np.bincount(idx, weights=q, minlength=nbins)
        c6[:, a] = np.bincount(idx, weights=q * q, minlength=nbins)
    c4 = np.bincount(idx, weights=c_sq * c_sq, minlength=nbins)
    return counts, mean, c2, c3, c4, c6


def cell_affine_numpy(cell_idx, v_old, v_new, ncells):
    """Shift and scale ``v_new`` per cell to the momentum and energy of ``v_old``."""
    dim = v_old.shape[1]
    counts = np.bincount(cell_idx, minlength=ncells)
    safe = np.maximum(counts, 1)
    m_old = np.zeros((ncells, dim))
    m_new = np.zeros((ncells, dim))
    for a in range(dim):
        m_old[:, a] = np.bincount(cell_idx, weights=v_old[:, a], minlength=ncells) / safe
        m_new[:, a] = np.bincount(cell_idx, weights=v_new[:, a], minlength=ncells) / safe
    d_old = v_old - m_old[cell_idx]
    d_new = v_new - m_new[cell_idx]
    ss_old = np.bincount(cell_idx, weights=np.sum(d_old * d_old, axis=1), minlength=ncells)
    ss_new = np.bincount(cell_idx, weights=np.sum(d_new * d_new, axis=1), minlength=ncells)
    scale = np.zeros(ncells)
    good = (counts >= 2) & (ss_new > 0.0)
    scale[good] = np.sqrt(ss_old[good] / ss_new[good])
    out = m_old[cell_idx] + scale[cell_idx, None] * d_new
    collapse = (counts >= 2) & (ss_new == 0.0) & (ss_old == 0.0)
    skip = ~(good | collapse)
    keep = skip[cell_idx]
    out[keep] = v_old[keep]
    return out


def reflect_numpy(x, v, lo, length, periodic):
    """Periodic wrap or elastic-wall folding of positions, in place."""
    for a in range(x.shape[1]):
        if periodic[a]:
            x[:, a] = lo[a] + np.mod(x[:, a] - lo[a], length[a])
            continue
        t = (x[:, a] - lo[a]) / length[a]
        k = np.floor(t)
        frac = t - k
        odd = np.mod(k, 2.0) == 1.0
        x[:, a] = lo[a] + length[a] * np.where(odd, 1.0 - frac, frac)
        v[:, a] = np.where(odd, -v[:, a], v[:, a])
    return x, v


if HAS_NUMBA:

    @njit(cache=True)
    def _wrap_nb(d, period):
        if period > 0.0:
            return d - period * np.round(d / period)
        return d

    @njit(cache=True)
    def fd4_lines_numba(lines, h, order, period):
        nl, n = lines.shape
        out = np.empty_like(lines)
        if order == 1:
            interior = np.array([1.0, -8.0, 0.0, 8.0, -1.0])
            closure = np.array(
                [[-25.0, 48.0, -36.0, 16.0, -3.0, 0.0], [-3.0, -10.0, 18.0, -6.0, 1.0, 0.0]]
            )
            sign = -1.0
        else:
            interior = np.array([-1.0, 16.0, -30.0, 16.0, -1.0])
            closure = np.array(
                [[45.0, -154.0, 214.0, -156.0, 61.0, -10.0], [10.0, -15.0, -4.0, 14.0, -6.0, 1.0]]
            )
            sign = 1.0
        denom = 12.0 * h**order
        for r in range(nl):
            for i in range(2, n - 2):
                ref = lines[r, i]
                acc = 0.0
                for k in range(5):
                    c = interior[k]
                    if c != 0.0:
                        acc += c * _wrap_nb(lines[r, i + k - 2] - ref, period)
                out[r, i] = acc / denom
            for row in range(2):
                ref = lines[r, row]
                acc = 0.0
                for k in range(6):
                    acc += closure[row, k] * _wrap_nb(lines[r, k] - ref, period)
                out[r, row] = acc / denom
                ref = lines[r, n - 1 - row]
                acc = 0.0
                for k in range(6):
                    acc += closure[row, k] * _wrap_nb(lines[r, n - 1 - k] - ref, period)
                out[r, n - 1 - row] = sign * acc / denom
        return out

    @njit(cache=True)
    def bin_moments_numba(bin_idx, v, nbins):
        n, dim = v.shape
        counts = np.zeros(nbins, dtype=np.int64)
        mean = np.zeros((nbins, dim))
        for p in range(n):
            b = bin_idx[p]
            if b < 0:
                continue
            counts[b] += 1
            for a in range(dim):
                mean[b, a] += v[p, a]
        for b in range(nbins):
            if counts[b] > 0:
                for a in range(dim):
                    mean[b, a] /= counts[b]
        c2 = np.zeros((nbins, dim, dim))
        c3 = np.zeros((nbins, dim))
        c4 = np.zeros(nbins)
        c6 = np.zeros((nbins, dim))
        c = np.empty(dim)
        for p in range(n):
            b = bin_idx[p]
            if b < 0:
                continue
            c_sq = 0.0
            for a in range(dim):
                c[a] = v[p, a] - mean[b, a]
                c_sq += c[a] * c[a]
            for a in range(dim):
                for q in range(dim):
                    c2[b, a, q] += c[a] * c[q]
                t = c_sq * c[a]
                c3[b, a] += t
                c6[b, a] += t * t
            c4[b] += c_sq * c_sq
        return counts, mean, c2, c3, c4, c6

    @njit(cache=True)
    def cell_affine_numba(cell_idx, v_old, v_new, ncells):
        n, dim = v_old.shape
        counts = np.zeros(ncells, dtype=np.int64)
        m_old = np.zeros((ncells, dim))
        m_new = np.zeros((ncells, dim))
        for p in range(n):
            c = cell_idx[p]
            counts[c] += 1
            for a in range(dim):
                m_old[c, a] += v_old[p, a]
                m_new[c, a] += v_new[p, a]
        for c in range(ncells):
            if counts[c] > 0:
                for a in range(dim):
                    m_old[c, a] /= counts[c]
                    m_new[c, a] /= counts[c]
        ss_old = np.zeros(ncells)
        ss_new = np.zeros(ncells)
        for p in range(n):
            c = cell_idx[p]
            for a in range(dim):
                d0 = v_old[p, a] - m_old[c, a]
                d1 = v_new[p, a] - m_new[c, a]
                ss_old[c] += d0 * d0
                ss_new[c] += d1 * d1
        out = np.empty_like(v_old)
        for p in range(n):
            c = cell_idx[p]
            if counts[c] >= 2 and ss_new[c] > 0.0:
                s = np.sqrt(ss_old[c] / ss_new[c])
                for a in range(dim):
                    out[p, a] = m_old[c, a] + s * (v_new[p, a] - m_new[c, a])
            elif counts[c] >= 2 and ss_new[c] == 0.0 and ss_old[c] == 0.0:
                for a in range(dim):
                    out[p, a] = m_old[c, a]
            else:
                for a in range(dim):
                    out[p, a] = v_old[p, a]
        return out

    @njit(cache=True)
    def reflect_numba(x, v, lo, length, periodic):
        n, dim = x.shape
        for p in range(n):
            for a in range(dim):
                if periodic[a]:
                    x[p, a] = lo[a] + np.mod(x[p, a] - lo[a], length[a])
                else:
                    t = (x[p, a] - lo[a]) / length[a]
                    k = np.floor(t)
                    frac = t - k
                    if np.mod(k, 2.0) == 1.0:
                        x[p, a] = lo[a] + length[a] * (1.0 - frac)
                        v[p, a] = -v[p, a]
                    else:
                        x[p, a] = lo[a] + length[a] * frac
        return x, v


def fd4_lines(lines, h, order, period=0.0):
    lines = np.ascontiguousarray(lines, dtype=np.float64)
    if USE_NUMBA:
        return fd4_lines_numba(lines, float(h), int(order), float(period))
    return fd4_lines_numpy(lines, float(h), int(order), float(period))


def bin_moments(bin_idx, v, nbins):
    bin_idx = np.ascontiguousarray(bin_idx, dtype=np.int64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    if USE_NUMBA:
        return bin_moments_numba(bin_idx, v, int(nbins))
    return bin_moments_numpy(bin_idx, v, int(nbins))


def cell_affine(cell_idx, v_old, v_new, ncells):
    cell_idx = np.ascontiguousarray(cell_idx, dtype=np.int64)
    v_old = np.ascontiguousarray(v_old, dtype=np.float64)
    v_new = np.ascontiguousarray(v_new, dtype=np.float64)
    if USE_NUMBA:
        return cell_affine_numba(cell_idx, v_old, v_new, int(ncells))
    return cell_affine_numpy(cell_idx, v_old, v_new, int(ncells))


def reflect(x, v, lo, length, periodic):
    x = np.ascontiguousarray(x, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    length = np.asarray(length, dtype=np.float64)
    periodic = np.asarray(periodic, dtype=np.bool_)
    if USE_NUMBA:
        return reflect_numba(x, v, lo, length, periodic)
    return reflect_numpy(x, v, lo, length, periodic)
