"""Proximity operators, projections, and blockwise product families.

The free functions implement the closed-form catalogue used by the
solver; ProxFamily wires them over named slices of a stacked vector so
the separable prox of a product function is one dispatch call.  Batched
two-column spectral cases are delegated to the kernels module.
"""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import batch_epi_col2, batch_epi_l2, batch_shrink_col2

FEAS_TOL = 1e-10


def _f64(x):
    return np.asarray(x, dtype=np.float64).ravel()


def prox_l1(x, gamma):
    """Soft threshold: sign(x) * max(|x| - gamma, 0)."""
    x = _f64(x)
    if gamma == 0.0:
        return x.copy()
    return np.sign(x) * np.maximum(np.abs(x) - gamma, 0.0)


def prox_l2(x, gamma):
    """Block soft threshold (1 - gamma/max(||x||, gamma)) * x."""
    x = _f64(x)
    if gamma == 0.0:
        return x.copy()
    nrm = np.linalg.norm(x)
    return (1.0 - gamma / max(nrm, gamma)) * x


def project_l1_ball(x, eps):
    """Euclidean projection onto the l1 ball of radius eps."""
    x = _f64(x)
    if eps < 0.0:
        raise ValueError("l1-ball radius must be nonnegative")
    a = np.abs(x)
    if a.sum() <= eps:
        return x.copy()
    if eps == 0.0:
        return np.zeros_like(x)
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, u.size + 1)
    idx = np.nonzero(u > (css - eps) / j)[0]
    if idx.size == 0:
        # eps below the float resolution of the data; same as eps = 0
        return np.zeros_like(x)
    rho = idx[-1]
    theta = (css[rho] - eps) / (rho + 1.0)
    return np.sign(x) * np.maximum(a - theta, 0.0)


def prox_linf(x, gamma):
    """Via the Moreau identity: x - gamma * P_l1ball(x / gamma)."""
    x = _f64(x)
    if gamma == 0.0:
        return x.copy()
    return x - gamma * project_l1_ball(x / gamma, 1.0)


def prox_l21_blocks(x, gamma, block_size):
    """prox_l2 applied independently to contiguous blocks."""
    x = _f64(x)
    if x.size % block_size != 0:
        raise ValueError("block size must divide the input dimension")
    if gamma == 0.0:
        return x.copy()
    V = x.reshape(-1, block_size)
    nrm = np.sqrt(np.einsum("ij,ij->i", V, V))
    f = 1.0 - gamma / np.maximum(nrm, gamma)
    return (V * f[:, None]).ravel()


def prox_nuclear(X, gamma):
    """Soft threshold on singular values."""
    X = np.asarray(X, dtype=np.float64)
    if gamma == 0.0:
        return X.copy()
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    return (U * np.maximum(s - gamma, 0.0)) @ Vt


def project_box(x, a, b):
    """Elementwise clamp into [a, b]."""
    if a > b:
        raise ValueError("box bounds must satisfy a <= b")
    return np.clip(_f64(x), a, b)


def project_epi_l2(x, xi, tau):
    """Project (x, xi) onto the epigraph of tau*||.||_2 (three-case formula)."""
    assert tau > 0.0
    x = _f64(x)
    nrm = np.linalg.norm(x)
    if tau * nrm <= xi:
        return x.copy(), float(xi)
    if nrm < -tau * xi:
        return np.zeros_like(x), 0.0
    alpha = (1.0 + tau * xi / nrm) / (1.0 + tau * tau)
    return alpha * x, alpha * tau * nrm


def _epi_l1_threshold(a, xi):
    # positive root of phi(g) = ||T_g(a)||_1 - g - xi for sorted |a| (any order ok)
    s = np.sort(a)[::-1]
    css = np.concatenate([[0.0], np.cumsum(s)])
    n = s.size
    # segment k uses k active entries: g = (css[k] - xi) / (k + 1),
    # valid while s_{k+1} <= g <= s_k (s_0 = +inf, s_{n+1} = 0 loosened below)
    best = None
    for k in range(n, -1, -1):
        g = (css[k] - xi) / (k + 1.0)
        lo = s[k] if k < n else 0.0
        hi = s[k - 1] if k >= 1 else np.inf
        if lo <= g <= hi:
            return g
        if g >= 0.0:
            # rounding can push the root off both sides of a shared
            # breakpoint; keep the candidate closest to a true root
            phi = np.maximum(a - g, 0.0).sum() - g - xi
            if best is None or abs(phi) < best[0]:
                best = (abs(phi), g)
    assert best is not None, "epigraph root bracketing failed"  # phi strictly decreasing
    return best[1]


def project_epi_l1(x, xi):
    """Project (x, xi) onto the epigraph of the l1 norm (exact segment solve)."""
    x = _f64(x)
    a = np.abs(x)
    if a.sum() <= xi:
        return x.copy(), float(xi)
    g = _epi_l1_threshold(a, xi)
    out = np.sign(x) * np.maximum(a - g, 0.0)
    phi = np.abs(out).sum() - g - xi
    assert abs(phi) <= 1e-10, "epigraph root residual too large"
    return out, float(xi + g)


def project_epi_nuclear(X, xi):
    """Project (X, xi) onto the epigraph of the nuclear norm."""
    X = np.asarray(X, dtype=np.float64)
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    s_new, xi_new = project_epi_l1(s, xi)
    return (U * s_new) @ Vt, xi_new


def prox_weighted_l1_l21(z, gamma, luma_len, weight=0.5):
    """Weighted mixed norm prox: weight*l1 on the luma slice, pairwise l2 after.

    The chroma remainder must have even length; its contiguous 2-blocks
    get the plain group soft threshold at gamma.
    """
    z = _f64(z)
    if (z.size - luma_len) % 2 != 0:
        raise ValueError("chroma slice must consist of pairs")
    out = np.empty_like(z)
    out[:luma_len] = prox_l1(z[:luma_len], gamma * weight)
    if z.size > luma_len:
        out[luma_len:] = prox_l21_blocks(z[luma_len:], gamma, 2)
    return out


def project_identity_set(x, y):
    """Project (x, y) onto the diagonal {x = y}: both become the average."""
    x = _f64(x)
    y = _f64(y)
    if x.size != y.size:
        raise ValueError("identity-set slices must have equal length")
    m = 0.5 * (x + y)
    return m, m.copy()


# -- blockwise product families -------------------------------------------

_NORM_KINDS = {"l1", "l2", "linf", "l21", "nuclear", "weighted_l1_l21"}
_INDICATOR_KINDS = {"box", "l1_ball", "epi_l2", "epi_l1", "epi_nuclear", "identity_set"}


@dataclass
class Block:
    """One slice of a ProxFamily layout.

    Epigraph and identity-set kinds occupy two slices: the main one at
    (offset, length) and the paired scalars (or twin vector) at
    (offset2, length2).  `scale` multiplies gamma for norm kinds, so a
    block can carry a per-term weight such as a sparsity tradeoff.
    """

    kind: str
    offset: int
    length: int
    offset2: int = -1
    length2: int = 0
    scale: float = 1.0
    params: dict = field(default_factory=dict)

    def slices(self):
        out = [(self.offset, self.length)]
        if self.length2 > 0:
            out.append((self.offset2, self.length2))
        return out


class ProxFamily:
    """Separable function given by per-block kinds over a stacked vector.

    prox(x, gamma) dispatches each block to the catalogue; value(x)
    evaluates the function (indicator blocks contribute 0 or +inf);
    violation(x) is the worst feasibility residual of the indicator
    blocks; epigraph_gaps(x) reports (bound - inner value) per epigraph
    sub-block for tightness diagnostics.
    """

    def __init__(self, dim, blocks):
        self.dim = int(dim)
        self.blocks = list(blocks)
        spans = sorted(s for b in self.blocks for s in b.slices())
        cursor = 0
        for off, length in spans:
            if off != cursor:
                raise ValueError(
                    f"prox layout gap or overlap at offset {off} (expected {cursor})"
                )
            cursor = off + length
        if cursor != self.dim:
            raise ValueError(f"prox layout covers {cursor} of {self.dim} entries")
        self.gamma_scalable = any(b.kind in _NORM_KINDS for b in self.blocks)

    def prox(self, x, gamma):
        x = _f64(x)
        assert x.size == self.dim
        out = x.copy()
        for b in self.blocks:
            _apply_block(b, x, gamma, out)
        return out

    def value(self, x):
        x = _f64(x)
        total = 0.0
        for b in self.blocks:
            if b.kind in _NORM_KINDS:
                total += b.scale * _norm_value(b, x)
                tilt = b.params.get("tilt", 0.0)
                if tilt != 0.0:
                    total += tilt * float(_main(b, x).sum())
            elif b.kind != "pass":
                if _block_violation(b, x) > 1e-9:
                    return np.inf
        return total

    def violation(self, x):
        x = _f64(x)
        worst = 0.0
        for b in self.blocks:
            if b.kind in _INDICATOR_KINDS:
                worst = max(worst, _block_violation(b, x))
        return worst

    def epigraph_gaps(self, x):
        x = _f64(x)
        out = []
        for b in self.blocks:
            if b.kind in ("epi_l2", "epi_l1", "epi_nuclear"):
                bounds = x[b.offset2 : b.offset2 + b.length2]
                out.append((b.kind, bounds - _inner_values(b, x), bounds))
        return out


def prox_product(families, x, gamma):
    """Apply a ProxFamily blockwise (free-function form of family.prox)."""
    return families.prox(x, gamma)


def _main(b, x):
    return x[b.offset : b.offset + b.length]


def _vectors(b, x):
    # sub-block vectors as rows of a (count, k) array
    k = b.params["k"]
    data = _main(b, x)
    if b.params.get("planar", False):
        return np.ascontiguousarray(data.reshape(k, -1).T)
    return data.reshape(-1, k)


def _put_vectors(b, out, V):
    if b.params.get("planar", False):
        out[b.offset : b.offset + b.length] = V.T.ravel()
    else:
        out[b.offset : b.offset + b.length] = V.ravel()


def _mats(b, x):
    # column-major (rows x cols) blocks as a (count, rows, cols) array
    r, c = b.params["rows"], b.params["cols"]
    return np.ascontiguousarray(_main(b, x).reshape(-1, c, r).transpose(0, 2, 1))


def _put_mats(b, out, M):
    out[b.offset : b.offset + b.length] = M.transpose(0, 2, 1).ravel()


def _apply_block(b, x, gamma, out):
    g = gamma * b.scale
    kind = b.kind
    if kind == "pass":
        return
    lo, hi = b.offset, b.offset + b.length
    data = x[lo:hi]
    if kind == "l1":
        out[lo:hi] = prox_l1(data, g)
    elif kind == "l2":
        out[lo:hi] = prox_l2(data, g)
    elif kind == "linf":
        out[lo:hi] = prox_linf(data, g)
    elif kind == "weighted_l1_l21":
        out[lo:hi] = prox_weighted_l1_l21(
            data, g, b.params["luma_len"], b.params.get("weight", 0.5)
        )
    elif kind == "l21":
        if g == 0.0:
            return
        V = _vectors(b, x)
        nrm = np.sqrt(np.einsum("ij,ij->i", V, V))
        f = 1.0 - g / np.maximum(nrm, g)
        _put_vectors(b, out, V * f[:, None])
    elif kind == "nuclear":
        # optional linear tilt: seed is scale*||Z||_* + tilt*<1, Z>, whose
        # prox is singular-value shrinkage of the shifted input; on the
        # nonnegative cone the tilt coincides with an l1 addition, which
        # restores the strict-increase property the nuclear norm lacks
        tilt = b.params.get("tilt", 0.0)
        if g == 0.0 and tilt == 0.0:
            return
        M = _mats(b, x)
        if tilt != 0.0:
            M = M - gamma * tilt
        if b.params["cols"] == 2:
            _put_mats(b, out, batch_shrink_col2(M, g))
        else:
            _put_mats(b, out, np.stack([prox_nuclear(m, g) for m in M]))
    elif kind == "box":
        out[lo:hi] = np.clip(data, b.params["a"], b.params["b"])
    elif kind == "l1_ball":
        out[lo:hi] = project_l1_ball(data, b.params["eps"])
    elif kind == "identity_set":
        twin = x[b.offset2 : b.offset2 + b.length2]
        m = 0.5 * (data + twin)
        out[lo:hi] = m
        out[b.offset2 : b.offset2 + b.length2] = m
    elif kind == "epi_l2":
        V = _vectors(b, x)
        xi = x[b.offset2 : b.offset2 + b.length2]
        Vn, xin = batch_epi_l2(V, xi, b.params.get("tau", 1.0))
        _put_vectors(b, out, Vn)
        out[b.offset2 : b.offset2 + b.length2] = xin
    elif kind == "epi_l1":
        xi = x[b.offset2]
        vec, xin = project_epi_l1(data, xi)
        out[lo:hi] = vec
        out[b.offset2] = xin
    elif kind == "epi_nuclear":
        M = _mats(b, x)
        xi = x[b.offset2 : b.offset2 + b.length2]
        if b.params["cols"] == 2:
            Mn, xin = batch_epi_col2(M, xi)
        else:
            pairs = [project_epi_nuclear(m, s) for m, s in zip(M, xi)]
            Mn = np.stack([p[0] for p in pairs])
            xin = np.array([p[1] for p in pairs])
        _put_mats(b, out, Mn)
        out[b.offset2 : b.offset2 + b.length2] = xin
    else:
        raise ValueError(f"unknown prox kind: {kind}")


def _norm_value(b, x):
    kind = b.kind
    data = _main(b, x)
    if kind == "l1":
        return float(np.abs(data).sum())
    if kind == "l2":
        return float(np.linalg.norm(data))
    if kind == "linf":
        return float(np.max(np.abs(data))) if data.size else 0.0
    if kind == "l21":
        V = _vectors(b, x)
        return float(np.sqrt(np.einsum("ij,ij->i", V, V)).sum())
    if kind == "weighted_l1_l21":
        ll = b.params["luma_len"]
        w = b.params.get("weight", 0.5)
        pairs = data[ll:].reshape(-1, 2)
        return float(
            w * np.abs(data[:ll]).sum()
            + np.sqrt(np.einsum("ij,ij->i", pairs, pairs)).sum()
        )
    if kind == "nuclear":
        return float(sum(np.linalg.svd(m, compute_uv=False).sum() for m in _mats(b, x)))
    raise ValueError(kind)


def _inner_values(b, x):
    # the inner norm each epigraph bound must dominate
    if b.kind == "epi_l2":
        V = _vectors(b, x)
        return b.params.get("tau", 1.0) * np.sqrt(np.einsum("ij,ij->i", V, V))
    if b.kind == "epi_l1":
        return np.array([np.abs(_main(b, x)).sum()])
    if b.kind == "epi_nuclear":
        return np.array(
            [np.linalg.svd(m, compute_uv=False).sum() for m in _mats(b, x)]
        )
    raise ValueError(b.kind)


def _block_violation(b, x):
    kind = b.kind
    data = _main(b, x)
    if kind == "box":
        return float(
            max(
                np.max(b.params["a"] - data, initial=0.0),
                np.max(data - b.params["b"], initial=0.0),
            )
        )
    if kind == "l1_ball":
        return float(max(np.abs(data).sum() - b.params["eps"], 0.0))
    if kind == "identity_set":
        twin = x[b.offset2 : b.offset2 + b.length2]
        return float(np.max(np.abs(data - twin), initial=0.0))
    if kind in ("epi_l2", "epi_l1", "epi_nuclear"):
        gaps = x[b.offset2 : b.offset2 + b.length2] - _inner_values(b, x)
        return float(max(-np.min(gaps, initial=0.0), 0.0))
    return 0.0
