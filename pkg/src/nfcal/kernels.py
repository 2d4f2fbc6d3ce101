"""
Hot numeric kernels.

Every kernel exists twice: a numba ``@njit`` loop and a vectorised numpy
version. The public names at the bottom dispatch to numba when it is
available (see :mod:`nfcal._accel`), otherwise to numpy. Both variants sum
in a fixed order, so results are deterministic for a given backend.
"""
import numpy as np

from ._accel import HAVE_NUMBA, njit

_CHUNK = 2048


# --------------------------------------------------------------------------
# numpy reference implementations
# --------------------------------------------------------------------------

def near_field_numpy(px, py, ex, ey, w, k, dz):
    """Sum of cosine-pattern spherical waves from elements at depth ``dz``.

    Element ``e`` sits at ``(ex[e], ey[e], -dz)``; the probe at
    ``(px[i], py[i], 0)``. Returns ``sum_e w_e (dz/r) exp(-j k r) / r``.
    """
    out = np.empty(px.shape[0], dtype=np.complex128)
    dz2 = dz * dz
    for s in range(0, px.shape[0], _CHUNK):
        sl = slice(s, s + _CHUNK)
        rx = px[sl, None] - ex[None, :]
        ry = py[sl, None] - ey[None, :]
        r = np.sqrt(rx * rx + ry * ry + dz2)
        g = (dz / (r * r)) * np.exp(-1j * k * r)
        out[sl] = g @ w
    return out


def far_field_numpy(kx, ky, ex, ey, w):
    """Array factor ``sum_e w_e exp(+j (kx x_e + ky y_e))`` at each (kx, ky)."""
    out = np.empty(kx.shape[0], dtype=np.complex128)
    for s in range(0, kx.shape[0], _CHUNK):
        sl = slice(s, s + _CHUNK)
        ph = kx[sl, None] * ex[None, :] + ky[sl, None] * ey[None, :]
        out[sl] = np.exp(1j * ph) @ w
    return out


def window_sums_numpy(amp, mask):
    """Sum of ``amp`` under ``mask`` for every in-bounds translation."""
    mx, my = mask.shape
    nx = amp.shape[0] - mx + 1
    ny = amp.shape[1] - my + 1
    out = np.zeros((nx, ny))
    for i, j in zip(*np.nonzero(mask)):
        out += amp[i:i + nx, j:j + ny]
    return out


def _pair_distances(p):
    m = np.mod(p[:, None] - p[None, :] + 360.0, 360.0)
    return np.minimum(m, 360.0 - m)


def prune_numpy(phases, threshold):
    """Boolean keep-mask after iterative max-distance pruning."""
    n = phases.shape[0]
    keep = np.ones(n, dtype=np.bool_)
    if n < 2:
        return keep
    d = _pair_distances(phases)
    upper = np.triu(np.ones((n, n), dtype=np.bool_), 1)
    while True:
        valid = upper & keep[:, None] & keep[None, :]
        masked = np.where(valid, d, -1.0)
        flat = int(np.argmax(masked))
        dmax = masked.flat[flat]
        if dmax <= threshold:
            break
        i, j = divmod(flat, n)
        others = keep.copy()
        others[i] = False
        others[j] = False
        si = d[i, others].sum()
        sj = d[j, others].sum()
        keep[i if si > sj else j] = False
    return keep


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def near_field_numba(px, py, ex, ey, w, k, dz):
        n = px.shape[0]
        ne = ex.shape[0]
        out = np.empty(n, dtype=np.complex128)
        dz2 = dz * dz
        for i in range(n):
            acc_re = 0.0
            acc_im = 0.0
            for e in range(ne):
                rx = px[i] - ex[e]
                ry = py[i] - ey[e]
                r = np.sqrt(rx * rx + ry * ry + dz2)
                amp = dz / (r * r)
                c = np.cos(k * r) * amp
                s = -np.sin(k * r) * amp
                acc_re += w[e].real * c - w[e].imag * s
                acc_im += w[e].real * s + w[e].imag * c
            out[i] = complex(acc_re, acc_im)
        return out

    @njit(cache=True)
    def far_field_numba(kx, ky, ex, ey, w):
        n = kx.shape[0]
        ne = ex.shape[0]
        out = np.empty(n, dtype=np.complex128)
        for i in range(n):
            acc_re = 0.0
            acc_im = 0.0
            for e in range(ne):
                ph = kx[i] * ex[e] + ky[i] * ey[e]
                c = np.cos(ph)
                s = np.sin(ph)
                acc_re += w[e].real * c - w[e].imag * s
                acc_im += w[e].real * s + w[e].imag * c
            out[i] = complex(acc_re, acc_im)
        return out

    @njit(cache=True)
    def window_sums_numba(amp, mask):
        mx, my = mask.shape
        nx = amp.shape[0] - mx + 1
        ny = amp.shape[1] - my + 1
        out = np.zeros((nx, ny))
        for a in range(mx):
            for b in range(my):
                if mask[a, b]:
                    for i in range(nx):
                        for j in range(ny):
                            out[i, j] += amp[i + a, j + b]
        return out

    @njit(cache=True)
    def prune_numba(phases, threshold):
        n = phases.shape[0]
        keep = np.ones(n, dtype=np.bool_)
        if n < 2:
            return keep
        d = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                m = (phases[i] - phases[j] + 360.0) % 360.0
                d[i, j] = min(m, 360.0 - m)
        while True:
            dmax = -1.0
            bi = -1
            bj = -1
            for i in range(n):
                if not keep[i]:
                    continue
                for j in range(i + 1, n):
                    if keep[j] and d[i, j] > dmax:
                        dmax = d[i, j]
                        bi = i
                        bj = j
            if dmax <= threshold:
                break
            si = 0.0
            sj = 0.0
            for l in range(n):
                if keep[l] and l != bi and l != bj:
                    si += d[bi, l]
                    sj += d[bj, l]
            if si > sj:
                keep[bi] = False
            else:
                keep[bj] = False
        return keep

else:
    near_field_numba = None
    far_field_numba = None
    window_sums_numba = None
    prune_numba = None


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def _as(a, dtype):
    return np.ascontiguousarray(a, dtype=dtype)


def near_field(px, py, ex, ey, w, k, dz):
    args = (_as(px, np.float64), _as(py, np.float64), _as(ex, np.float64),
            _as(ey, np.float64), _as(w, np.complex128), float(k), float(dz))
    if HAVE_NUMBA:
        return near_field_numba(*args)
    return near_field_numpy(*args)


def far_field(kx, ky, ex, ey, w):
    args = (_as(kx, np.float64), _as(ky, np.float64), _as(ex, np.float64),
            _as(ey, np.float64), _as(w, np.complex128))
    if HAVE_NUMBA:
        return far_field_numba(*args)
    return far_field_numpy(*args)


def window_sums(amp, mask):
    args = (_as(amp, np.float64), _as(mask, np.bool_))
    if HAVE_NUMBA:
        return window_sums_numba(*args)
    return window_sums_numpy(*args)


def prune(phases, threshold):
    args = (_as(phases, np.float64), float(threshold))
    if HAVE_NUMBA:
        return prune_numba(*args)
    return prune_numpy(*args)
