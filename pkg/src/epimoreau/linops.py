"""Matrix-free linear operators for the imaging models.

Every operator is a pair of callables (forward, adjoint) on flat float64
vectors plus its dimensions.  Images are stored planar channel-major and
column-major within a channel: pixel (row i, col j) of channel c in an
n-by-n image lives at flat index c*n*n + i + j*n.  All constructors here
follow that convention, and the test suite checks each fast path against
a dense materialization at small sizes.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._kernels import fwht_blocks


def _f64(x):
    return np.asarray(x, dtype=np.float64).ravel()


class LinearOperator:
    """A linear map between flat vectors, given by matching closures.

    Parameters
    ----------
    in_dim, out_dim : int
        Domain and codomain dimensions.
    forward, adjoint : callable
        Implementations of the map and its transpose.  They must satisfy
        <forward(x), y> == <x, adjoint(y)> for all x, y.
    tag : str
        Human-readable label used in error messages and reports.
    """

    def __init__(self, in_dim, out_dim, forward, adjoint, tag=""):
        assert in_dim > 0 and out_dim > 0
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self._forward = forward
        self._adjoint = adjoint
        self.tag = tag
        self.diag = None  # set for diagonal operators
        self.is_zero = False
        self.perm = None  # set for permutation operators

    def forward(self, x):
        x = _f64(x)
        assert x.size == self.in_dim, (
            f"{self.tag or 'operator'}: expected input of size {self.in_dim}, "
            f"got {x.size}"
        )
        return self._forward(x)

    def adjoint(self, y):
        y = _f64(y)
        assert y.size == self.out_dim, (
            f"{self.tag or 'operator'}: expected output-side size {self.out_dim}, "
            f"got {y.size}"
        )
        return self._adjoint(y)

    def gram(self, x):
        """Apply adjoint(forward(x)) in one call."""
        return self.adjoint(self.forward(x))

    def __repr__(self):
        return f"LinearOperator({self.tag or 'anon'}: {self.in_dim}->{self.out_dim})"


@dataclass
class Image:
    """Planar image container.

    data holds the channels concatenated, each channel vectorized
    column-major; values are expected to stay in [0, 1] after any
    projection step.
    """

    width: int
    height: int
    channels: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        assert self.channels in (1, 3)
        self.data = _f64(self.data)
        assert self.data.size == self.width * self.height * self.channels

    @property
    def n_pixels(self):
        return self.width * self.height

    def planes(self):
        """View the data as (channels, height, width) column-major planes."""
        per = self.n_pixels
        return [
            self.data[c * per : (c + 1) * per].reshape(
                (self.height, self.width), order="F"
            )
            for c in range(self.channels)
        ]

    def clipped(self):
        """Copy with samples clamped into [0, 1]."""
        return Image(self.width, self.height, self.channels, np.clip(self.data, 0.0, 1.0))


def identity_op(n, tag="identity"):
    op = LinearOperator(n, n, lambda x: x.copy(), lambda y: y.copy(), tag)
    op.diag = np.ones(n)
    return op


def scaled_identity_op(n, c, tag="scaled-identity"):
    return diag_op(np.full(n, float(c)), tag)


def diag_op(d, tag="diag"):
    d = _f64(d)
    op = LinearOperator(d.size, d.size, lambda x: d * x, lambda y: d * y, tag)
    op.diag = d
    op.is_zero = bool(np.all(d == 0.0))
    return op


def zero_op(in_dim, out_dim=None, tag="zero"):
    out_dim = in_dim if out_dim is None else out_dim
    op = LinearOperator(
        in_dim,
        out_dim,
        lambda x: np.zeros(out_dim),
        lambda y: np.zeros(in_dim),
        tag,
    )
    op.is_zero = True
    if in_dim == out_dim:
        op.diag = np.zeros(in_dim)
    return op


def slice_op(in_dim, offset, length, tag="slice"):
    """Extract x[offset : offset+length]; the adjoint scatters back into zeros."""
    assert 0 <= offset and offset + length <= in_dim

    def adj(y):
        out = np.zeros(in_dim)
        out[offset : offset + length] = y
        return out

    return LinearOperator(
        in_dim, length, lambda x: x[offset : offset + length].copy(), adj, tag
    )


def permutation_op(perm, tag="permutation"):
    """Operator x -> x[perm]; the adjoint is the inverse permutation."""
    perm = np.asarray(perm, dtype=np.int64)
    n = perm.size
    assert np.array_equal(np.sort(perm), np.arange(n)), "not a permutation"
    inv = np.argsort(perm)
    op = LinearOperator(n, n, lambda x: x[perm], lambda y: y[inv], tag)
    op.perm = perm
    return op


# -- difference operators -------------------------------------------------

def make_diff_d0(n):
    """1-D forward difference with a zero last row.

    Row i maps x to x_i - x_{i+1}; the final row is identically zero so
    the operator is square.
    """
    if n < 2:
        raise ValueError("difference operator needs dimension >= 2")

    def fwd(x):
        out = np.zeros(n)
        out[: n - 1] = x[: n - 1] - x[1:]
        return out

    def adj(y):
        z = y.copy()
        z[n - 1] = 0.0
        out = z.copy()
        out[1:] -= z[: n - 1]
        return out

    return LinearOperator(n, n, fwd, adj, f"diff-d0({n})")


def make_dvh(n):
    """Vertical and horizontal differences of an n-by-n image plane.

    Input is one plane (n*n, column-major); output stacks the vertical
    difference plane then the horizontal one (2*n*n total).  Matches the
    Kronecker forms I(x)D0 and D0(x)I under column-major vectorization.
    """
    if n < 2:
        raise ValueError("image side must be >= 2")
    nn = n * n

    def fwd(x):
        X = x.reshape((n, n), order="F")
        dv = np.zeros((n, n))
        dv[: n - 1, :] = X[: n - 1, :] - X[1:, :]
        dh = np.zeros((n, n))
        dh[:, : n - 1] = X[:, : n - 1] - X[:, 1:]
        return np.concatenate([dv.ravel(order="F"), dh.ravel(order="F")])

    def adj(y):
        U = y[:nn].reshape((n, n), order="F").copy()
        V = y[nn:].reshape((n, n), order="F").copy()
        U[n - 1, :] = 0.0
        V[:, n - 1] = 0.0
        a = U.copy()
        a[1:, :] -= U[: n - 1, :]
        b = V.copy()
        b[:, 1:] -= V[:, : n - 1]
        return (a + b).ravel(order="F")

    return LinearOperator(nn, 2 * nn, fwd, adj, f"dvh({n})")


# -- color decorrelation --------------------------------------------------

_C0 = np.array(
    [
        [1.0, 1.0, 1.0],
        [1.0, 0.0, -1.0],
        [1.0, -2.0, 1.0],
    ]
) / np.sqrt([3.0, 2.0, 6.0])[:, None]


def make_color_decorrelation(n):
    """Orthonormal 3-point DCT across the channels of an n-by-n RGB image.

    Output channels are luma then two chroma planes; a gray input pixel
    (r=g=b=v) maps to luma sqrt(3)*v with zero chroma.
    """
    if n < 1:
        raise ValueError("image side must be >= 1")
    nn = n * n

    def fwd(x):
        X = x.reshape((nn, 3), order="F")
        return (X @ _C0.T).ravel(order="F")

    def adj(y):
        Y = y.reshape((nn, 3), order="F")
        return (Y @ _C0).ravel(order="F")

    return LinearOperator(3 * nn, 3 * nn, fwd, adj, f"color-dct({n})")


# -- patch machinery ------------------------------------------------------

def _plane_patch_indices(n, w, overlap):
    # Returns (src, weights, n_patches): out[p*w*w + q] = weights[...] * x[src[...]]
    w2 = w * w
    if overlap:
        off = (w - 1) // 2
        p = np.arange(n * n)
        ai = p % n
        aj = p // n
        q = np.arange(w2)
        di = q % w
        dj = q // w
        ri = ai[:, None] + (di[None, :] - off)
        cj = aj[:, None] + (dj[None, :] - off)
        valid = (ri >= 0) & (ri < n) & (cj >= 0) & (cj < n)
        src = np.where(valid, ri + cj * n, 0).astype(np.int64)
        wts = valid.astype(np.float64) / w2
        return src.ravel(), wts.ravel(), n * n
    if n % w != 0:
        raise ValueError("non-overlapping patches require the patch size to divide the side")
    nb = n // w
    p = np.arange(nb * nb)
    bi = p % nb
    bj = p // nb
    q = np.arange(w2)
    di = q % w
    dj = q // w
    ri = bi[:, None] * w + di[None, :]
    cj = bj[:, None] * w + dj[None, :]
    src = (ri + cj * n).astype(np.int64)
    return src.ravel(), np.ones(nb * nb * w2), nb * nb


def make_patch_expansion(n, w, overlap):
    """Expand a gradient field (two n*n planes) into per-patch samples.

    Non-overlapping mode tiles the plane (requires w | n) and is a pure
    permutation.  Overlapping mode anchors a w-by-w patch at every pixel
    with zero padding at the border; every duplicated sample is scaled by
    1/w**2, so interior samples appear w**2 times at weight 1/w**2.
    Output layout: vertical plane's patches then horizontal plane's,
    patches column-major by anchor, samples column-major within a patch.
    """
    if not (1 <= w <= n):
        raise ValueError("patch size must satisfy 1 <= w <= n")
    nn = n * n
    src, wts, n_patches = _plane_patch_indices(n, w, overlap)
    plane_out = n_patches * w * w

    if not overlap:
        full = np.concatenate([src, src + nn])
        return permutation_op(full, tag=f"patch-tile({n},{w})")

    def fwd(x):
        a = x[:nn][src] * wts
        b = x[nn:][src] * wts
        return np.concatenate([a, b])

    def adj(y):
        a = np.bincount(src, weights=y[:plane_out] * wts, minlength=nn)
        b = np.bincount(src, weights=y[plane_out:] * wts, minlength=nn)
        return np.concatenate([a, b])

    return LinearOperator(2 * nn, 2 * plane_out, fwd, adj, f"patch-overlap({n},{w})")


def make_grad_patch_permutation(n, w, channels, overlap=False):
    """Regroup expanded gradients into per-patch local gradient matrices.

    Input: `channels` copies of a patch-expansion output, concatenated.
    Output: for each patch, the column-major vectorization of the
    (channels*w*w)-by-2 matrix whose first column holds the vertical
    samples (channel-major) and the second the horizontal ones.
    """
    n_patches = n * n if overlap else (n // w) ** 2
    w2 = w * w
    dim = channels * 2 * n_patches * w2
    idx = np.arange(dim).reshape(channels, 2, n_patches, w2)
    # out[p, col, ch, q] = in[ch, col, p, q]
    gather = idx.transpose(2, 1, 0, 3).ravel()
    return permutation_op(gather, tag=f"grad-blocks({n},{w},{channels})")


# -- spectral operators ---------------------------------------------------

def make_dft_pairing(m, n):
    """Column-wise orthonormal DFT split into interleaved (real, imag) pairs.

    Input: an m-by-n matrix, column-major.  Output: 2mn values where the
    block for column j lists (Re, Im) per frequency; pair norms are the
    amplitude spectrum of that column.
    """
    if m < 1 or n < 1:
        raise ValueError("matrix dimensions must be positive")

    def fwd(x):
        X = x.reshape((m, n), order="F")
        F = np.fft.fft(X, axis=0, norm="ortho")
        out = np.empty((2 * m, n))
        out[0::2, :] = F.real
        out[1::2, :] = F.imag
        return out.ravel(order="F")

    def adj(y):
        Y = y.reshape((2 * m, n), order="F")
        Z = Y[0::2, :] + 1j * Y[1::2, :]
        return np.fft.ifft(Z, axis=0, norm="ortho").real.ravel(order="F")

    return LinearOperator(m * n, 2 * m * n, fwd, adj, f"dft-pairs({m},{n})")


def make_sensing(n, ratio, seed):
    """Randomly subsampled fast orthonormal sensing operator.

    A random sign modulation followed by a blockwise orthonormal
    Walsh-Hadamard transform (block size = the largest power of two
    dividing n), then a uniform sorted row subsample keeping
    floor(ratio*n) rows.  Deterministic per seed.
    """
    if not (0.0 < ratio <= 1.0):
        raise ValueError("sampling ratio must lie in (0, 1]")
    bs = n & (-n)  # largest power of two dividing n
    rng = np.random.default_rng(seed)
    signs = rng.choice(np.array([-1.0, 1.0]), size=n)
    m = int(np.floor(ratio * n))
    rows = np.sort(rng.permutation(n)[:m])

    def fwd(x):
        return fwht_blocks(x * signs, bs)[rows]

    def adj(y):
        z = np.zeros(n)
        z[rows] = y
        return fwht_blocks(z, bs) * signs

    op = LinearOperator(n, m, fwd, adj, f"sensing({n},{ratio})")
    op.rows = rows
    return op


def make_sum_pair(n):
    """Observation map (a, b) -> a + b for additive decomposition models."""
    return LinearOperator(
        2 * n,
        n,
        lambda x: x[:n] + x[n:],
        lambda y: np.concatenate([y, y]),
        f"sum-pair({n})",
    )


# -- combinators ----------------------------------------------------------

def compose(*ops):
    """Operator product: compose(A, B, C) applies C first, i.e. x -> A(B(C(x)))."""
    assert len(ops) >= 1
    for left, right in zip(ops[:-1], ops[1:]):
        if left.in_dim != right.out_dim:
            raise ValueError(
                f"compose dimension mismatch: {left.tag} expects {left.in_dim}, "
                f"{right.tag} produces {right.out_dim}"
            )
    if len(ops) == 1:
        return ops[0]

    def fwd(x):
        for op in reversed(ops):
            x = op.forward(x)
        return x

    def adj(y):
        for op in ops:
            y = op.adjoint(y)
        return y

    tag = "*".join(op.tag or "?" for op in ops)
    return LinearOperator(ops[-1].in_dim, ops[0].out_dim, fwd, adj, tag)


def stack(*ops):
    """Vertical stack: shared input, concatenated outputs."""
    assert len(ops) >= 1
    in_dim = ops[0].in_dim
    for op in ops:
        if op.in_dim != in_dim:
            raise ValueError("stacked operators must share the input dimension")
    splits = np.cumsum([op.out_dim for op in ops])[:-1]

    def fwd(x):
        return np.concatenate([op.forward(x) for op in ops])

    def adj(y):
        out = np.zeros(in_dim)
        for op, part in zip(ops, np.split(y, splits)):
            out += op.adjoint(part)
        return out

    tag = ";".join(op.tag or "?" for op in ops)
    return LinearOperator(in_dim, int(sum(op.out_dim for op in ops)), fwd, adj, tag)


def block_diag(*ops):
    """Direct sum: concatenated inputs map to concatenated outputs."""
    assert len(ops) >= 1
    in_splits = np.cumsum([op.in_dim for op in ops])[:-1]
    out_splits = np.cumsum([op.out_dim for op in ops])[:-1]

    def fwd(x):
        return np.concatenate(
            [op.forward(part) for op, part in zip(ops, np.split(x, in_splits))]
        )

    def adj(y):
        return np.concatenate(
            [op.adjoint(part) for op, part in zip(ops, np.split(y, out_splits))]
        )

    out = LinearOperator(
        int(sum(op.in_dim for op in ops)),
        int(sum(op.out_dim for op in ops)),
        fwd,
        adj,
        "+".join(op.tag or "?" for op in ops),
    )
    if all(op.diag is not None for op in ops):
        out.diag = np.concatenate([op.diag for op in ops])
    out.is_zero = all(op.is_zero for op in ops)
    return out


# -- diagnostics ----------------------------------------------------------

def op_norm_estimate(op, tol=1e-6, max_iters=1000):
    """Largest eigenvalue of op^T op (the squared operator norm).

    Power iteration from a fixed-seed start; returns the converged
    Rayleigh quotient, which is at least (1-tol) times the true maximum.
    Emits a warning and returns the best estimate on non-convergence.
    """
    rng = np.random.default_rng(1234)
    b = rng.standard_normal(op.in_dim)
    b /= np.linalg.norm(b)
    lam = 0.0
    for _ in range(max_iters):
        ab = op.adjoint(op.forward(b))
        nrm = np.linalg.norm(ab)
        if nrm <= 1e-300:
            return 0.0
        lam_new = float(b @ ab)
        b = ab / nrm
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-30):
            return lam_new
        lam = lam_new
    warnings.warn(
        f"operator norm estimate for {op.tag or 'operator'} did not converge "
        f"in {max_iters} iterations; returning best value",
        RuntimeWarning,
    )
    return lam


def to_dense(op, limit=4096):
    """Materialize an operator column by column (test oracles, small B builds)."""
    if max(op.in_dim, op.out_dim) > limit:
        raise ValueError(
            f"refusing to materialize {op.tag or 'operator'} of size "
            f"{op.out_dim}x{op.in_dim} (limit {limit})"
        )
    cols = np.zeros((op.out_dim, op.in_dim))
    e = np.zeros(op.in_dim)
    for j in range(op.in_dim):
        e[j] = 1.0
        cols[:, j] = op.forward(e)
        e[j] = 0.0
    return cols
