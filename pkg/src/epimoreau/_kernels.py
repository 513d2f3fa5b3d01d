"""Hot numeric kernels with optional numba acceleration.

Every kernel exists twice: a pure-numpy vectorized implementation and a
numba ``@njit`` loop version.  The numba path is used when numba imports
cleanly and the environment variable ``EPIMOREAU_PURE_NUMPY`` is unset;
setting ``EPIMOREAU_PURE_NUMPY=1`` forces the numpy path.  Both paths
implement identical formulas (no fastmath), so results agree to rounding.

``benchmarks/bench_kernels.py`` times the two paths against each other.
"""

import os

import numpy as np

try:
    import numba as nb

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    nb = None
    HAS_NUMBA = False

_FORCE_NUMPY = os.environ.get("EPIMOREAU_PURE_NUMPY", "").strip().lower() in {
    "1",
    "true",
    "yes",
}
USE_NUMBA = HAS_NUMBA and not _FORCE_NUMPY


def backend() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return "numba" if USE_NUMBA else "numpy"


# -- fast Walsh-Hadamard ------------------------------------------------

def _fwht_np(a):
    # a: (rows, bs) with bs a power of two; in-place butterflies, unnormalized
    rows, bs = a.shape
    h = 1
    while h < bs:
        b = a.reshape(rows, -1, 2, h)
        x = b[:, :, 0, :].copy()
        y = b[:, :, 1, :]
        b[:, :, 0, :] = x + y
        b[:, :, 1, :] = x - y
        h *= 2
    return a


if HAS_NUMBA:

    @nb.njit(cache=True)
    def _fwht_nb(a):  # pragma: no cover - measured via dispatch tests
        rows, bs = a.shape
        for r in range(rows):
            h = 1
            while h < bs:
                for i0 in range(0, bs, 2 * h):
                    for j in range(i0, i0 + h):
                        x = a[r, j]
                        y = a[r, j + h]
                        a[r, j] = x + y
                        a[r, j + h] = x - y
                h *= 2
        return a


def fwht_blocks(x, block_size):
    """Orthonormal Walsh-Hadamard transform applied per contiguous block.

    ``x.size`` must be a multiple of ``block_size`` (a power of two).
    Returns a new array; the transform matrix is symmetric orthonormal,
    so this routine is its own adjoint.
    """
    bs = int(block_size)
    assert bs & (bs - 1) == 0, "block size must be a power of two"
    a = np.array(x, dtype=np.float64).reshape(-1, bs)
    if USE_NUMBA:
        _fwht_nb(a)
    else:
        _fwht_np(a)
    if bs > 1:
        a /= np.sqrt(bs)
    return a.ravel()


# -- two-column spectral kernels ----------------------------------------
#
# Blocks are (r x 2) matrices stored as mats[i] with shape (r, 2).  The
# singular pair comes from the 2x2 Gram matrix in closed form; the block
# is then recombined as  M @ (r1 v1 v1^T + r2 v2 v2^T)  where r_i are the
# per-singular-value shrink ratios.  V degenerates to the identity when
# the Gram matrix is (numerically) diagonal.


def _gram_spectrum_np(mats):
    g11 = np.einsum("ij,ij->i", mats[:, :, 0], mats[:, :, 0])
    g22 = np.einsum("ij,ij->i", mats[:, :, 1], mats[:, :, 1])
    g12 = np.einsum("ij,ij->i", mats[:, :, 0], mats[:, :, 1])
    t = g11 + g22
    det = np.maximum(g11 * g22 - g12 * g12, 0.0)
    disc = np.sqrt(np.maximum(t * t - 4.0 * det, 0.0))
    lam1 = 0.5 * (t + disc)
    lam2 = np.maximum(0.5 * (t - disc), 0.0)
    return g11, g22, g12, t, np.sqrt(lam1), np.sqrt(lam2)


def _recombine_np(mats, g11, g22, g12, t, s1, s2, s1_new, s2_new):
    r1 = np.where(s1 > 0.0, s1_new / np.maximum(s1, 1e-300), 0.0)
    r2 = np.where(s2 > 0.0, s2_new / np.maximum(s2, 1e-300), 0.0)
    lam1 = s1 * s1
    # eigenvector of the Gram matrix for lam1; diagonal fallback
    diag = np.abs(g12) <= 2.2e-16 * np.maximum(t, 1e-300)
    vx = np.where(diag, np.where(g11 >= g22, 1.0, 0.0), g12)
    vy = np.where(diag, np.where(g11 >= g22, 0.0, 1.0), lam1 - g11)
    nrm = np.sqrt(vx * vx + vy * vy)
    bad = nrm <= 0.0
    vx = np.where(bad, 1.0, vx / np.where(bad, 1.0, nrm))
    vy = np.where(bad, 0.0, vy / np.where(bad, 1.0, nrm))
    # K = r1 v v^T + r2 v_perp v_perp^T, with v_perp = (-vy, vx)
    k00 = r1 * vx * vx + r2 * vy * vy
    k01 = (r1 - r2) * vx * vy
    k11 = r1 * vy * vy + r2 * vx * vx
    out = np.empty_like(mats)
    out[:, :, 0] = mats[:, :, 0] * k00[:, None] + mats[:, :, 1] * k01[:, None]
    out[:, :, 1] = mats[:, :, 0] * k01[:, None] + mats[:, :, 1] * k11[:, None]
    return out


def _epi_l1_pair_np(s1, s2, xi):
    """Exact epigraph projection of (s1 >= s2 >= 0, xi) for the l1 norm."""
    feas = s1 + s2 <= xi
    gA = (s1 + s2 - xi) / 3.0
    useA = ~feas & (gA <= s2)
    gB = (s1 - xi) / 2.0
    useB = ~feas & ~useA & (gB <= s1)
    gC = -xi
    g = np.where(feas, 0.0, np.where(useA, gA, np.where(useB, gB, gC)))
    s1n = np.maximum(s1 - g, 0.0)
    s2n = np.maximum(s2 - g, 0.0)
    xin = np.where(feas, xi, xi + g)
    return s1n, s2n, xin


def _batch_shrink_col2_np(mats, gamma):
    g11, g22, g12, t, s1, s2 = _gram_spectrum_np(mats)
    s1n = np.maximum(s1 - gamma, 0.0)
    s2n = np.maximum(s2 - gamma, 0.0)
    return _recombine_np(mats, g11, g22, g12, t, s1, s2, s1n, s2n)


def _batch_epi_col2_np(mats, xi):
    g11, g22, g12, t, s1, s2 = _gram_spectrum_np(mats)
    s1n, s2n, xin = _epi_l1_pair_np(s1, s2, xi)
    out = _recombine_np(mats, g11, g22, g12, t, s1, s2, s1n, s2n)
    return out, xin


if HAS_NUMBA:

    @nb.njit(cache=True)
    def _col2_core_nb(mats, xi, gamma, epi, out_mats, out_xi):  # pragma: no cover
        n = mats.shape[0]
        r = mats.shape[1]
        for i in range(n):
            g11 = 0.0
            g22 = 0.0
            g12 = 0.0
            for j in range(r):
                a = mats[i, j, 0]
                b = mats[i, j, 1]
                g11 += a * a
                g22 += b * b
                g12 += a * b
            t = g11 + g22
            det = g11 * g22 - g12 * g12
            if det < 0.0:
                det = 0.0
            disc2 = t * t - 4.0 * det
            disc = np.sqrt(disc2) if disc2 > 0.0 else 0.0
            lam1 = 0.5 * (t + disc)
            lam2 = 0.5 * (t - disc)
            if lam2 < 0.0:
                lam2 = 0.0
            s1 = np.sqrt(lam1)
            s2 = np.sqrt(lam2)
            if epi:
                x = xi[i]
                if s1 + s2 <= x:
                    g = 0.0
                    out_xi[i] = x
                else:
                    g = (s1 + s2 - x) / 3.0
                    if g > s2:
                        g = (s1 - x) / 2.0
                        if g > s1:
                            g = -x
                    out_xi[i] = x + g
            else:
                g = gamma
            s1n = s1 - g
            if s1n < 0.0:
                s1n = 0.0
            s2n = s2 - g
            if s2n < 0.0:
                s2n = 0.0
            r1 = s1n / s1 if s1 > 0.0 else 0.0
            r2 = s2n / s2 if s2 > 0.0 else 0.0
            tfloor = t if t > 1e-300 else 1e-300
            if abs(g12) <= 2.2e-16 * tfloor:
                vx = 1.0 if g11 >= g22 else 0.0
                vy = 0.0 if g11 >= g22 else 1.0
            else:
                vx = g12
                vy = lam1 - g11
                nrm = np.sqrt(vx * vx + vy * vy)
                if nrm > 0.0:
                    vx /= nrm
                    vy /= nrm
                else:
                    vx = 1.0
                    vy = 0.0
            k00 = r1 * vx * vx + r2 * vy * vy
            k01 = (r1 - r2) * vx * vy
            k11 = r1 * vy * vy + r2 * vx * vx
            for j in range(r):
                a = mats[i, j, 0]
                b = mats[i, j, 1]
                out_mats[i, j, 0] = a * k00 + b * k01
                out_mats[i, j, 1] = a * k01 + b * k11


def batch_shrink_col2(mats, gamma):
    """Singular-value soft threshold applied to each (r x 2) block."""
    mats = np.ascontiguousarray(mats, dtype=np.float64)
    if gamma == 0.0:
        return mats.copy()
    if USE_NUMBA:
        out = np.empty_like(mats)
        dummy = np.empty(mats.shape[0])
        _col2_core_nb(mats, dummy, float(gamma), False, out, dummy)
        return out
    return _batch_shrink_col2_np(mats, float(gamma))


def batch_epi_col2(mats, xi):
    """Project each ((r x 2) block, scalar) pair onto the nuclear-norm epigraph."""
    mats = np.ascontiguousarray(mats, dtype=np.float64)
    xi = np.ascontiguousarray(xi, dtype=np.float64)
    if USE_NUMBA:
        out = np.empty_like(mats)
        out_xi = np.empty_like(xi)
        _col2_core_nb(mats, xi, 0.0, True, out, out_xi)
        return out, out_xi
    return _batch_epi_col2_np(mats, xi)


# -- blockwise l2 epigraph projection ------------------------------------


def _batch_epi_l2_np(vecs, xi, tau):
    nrm = np.sqrt(np.einsum("ij,ij->i", vecs, vecs))
    feas = tau * nrm <= xi
    zero = ~feas & (nrm < -tau * xi)
    mid = ~feas & ~zero
    alpha = np.where(
        mid, (1.0 + tau * xi / np.maximum(nrm, 1e-300)) / (1.0 + tau * tau), 0.0
    )
    out = np.where(feas[:, None], vecs, alpha[:, None] * vecs)
    out_xi = np.where(feas, xi, np.where(zero, 0.0, alpha * tau * nrm))
    return out, out_xi


if HAS_NUMBA:

    @nb.njit(cache=True)
    def _batch_epi_l2_nb(vecs, xi, tau, out, out_xi):  # pragma: no cover
        n, k = vecs.shape
        for i in range(n):
            s = 0.0
            for j in range(k):
                s += vecs[i, j] * vecs[i, j]
            nrm = np.sqrt(s)
            x = xi[i]
            if tau * nrm <= x:
                for j in range(k):
                    out[i, j] = vecs[i, j]
                out_xi[i] = x
            elif nrm < -tau * x:
                for j in range(k):
                    out[i, j] = 0.0
                out_xi[i] = 0.0
            else:
                alpha = (1.0 + tau * x / nrm) / (1.0 + tau * tau)
                for j in range(k):
                    out[i, j] = alpha * vecs[i, j]
                out_xi[i] = alpha * tau * nrm
        return out


def batch_epi_l2(vecs, xi, tau=1.0):
    """Project each ((k,) vector, scalar) pair onto the epigraph of tau*l2."""
    vecs = np.ascontiguousarray(vecs, dtype=np.float64)
    xi = np.ascontiguousarray(xi, dtype=np.float64)
    if USE_NUMBA:
        out = np.empty_like(vecs)
        out_xi = np.empty_like(xi)
        _batch_epi_l2_nb(vecs, xi, float(tau), out, out_xi)
        return out, out_xi
    return _batch_epi_l2_np(vecs, xi, float(tau))


def warmup():
    """Compile (or no-op) every dispatched kernel once; used before timing."""
    fwht_blocks(np.arange(8.0), 8)
    m = np.arange(12.0).reshape(2, 3, 2)
    batch_shrink_col2(m, 0.5)
    batch_epi_col2(m, np.array([0.5, 0.5]))
    batch_epi_l2(np.arange(6.0).reshape(3, 2), np.array([1.0, 1.0, 1.0]))
