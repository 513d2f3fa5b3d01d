"""Adjoint identities and dense cross-checks for every operator factory.

Each operator must satisfy <Ax, y> == <x, A^T y> to 1e-8 on random
vectors, and agree with its dense materialization to 1e-10 at small
sizes; both bounds are interface guarantees, not numerics luck.
"""

import numpy as np
import pytest

from epimoreau import linops as L


def _adjoint_gap(op, rng, trials=5):
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.in_dim)
        y = rng.standard_normal(op.out_dim)
        lhs = float(op.forward(x) @ y)
        rhs = float(x @ op.adjoint(y))
        scale = max(1.0, abs(lhs), abs(rhs))
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def _dense_gap(op, rng, trials=4):
    D = L.to_dense(op)
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.in_dim)
        y = rng.standard_normal(op.out_dim)
        worst = max(worst, float(np.max(np.abs(op.forward(x) - D @ x))))
        worst = max(worst, float(np.max(np.abs(op.adjoint(y) - D.T @ y))))
    return worst


def _small_ops():
    # every factory at a size where n^2 stays trivial ("side <= 8" contract)
    d = np.linspace(0.5, 2.0, 6)
    perm = np.array([2, 0, 1, 4, 3])
    return {
        "identity": L.identity_op(6),
        "scaled": L.scaled_identity_op(6, -1.7),
        "diag": L.diag_op(d),
        "zero": L.zero_op(5, 3),
        "slice": L.slice_op(8, 2, 4),
        "permutation": L.permutation_op(perm),
        "diff_d0": L.make_diff_d0(5),
        "dvh": L.make_dvh(4),
        "decorrelate": L.make_color_decorrelation(4),
        "patch": L.make_patch_expansion(4, 2, False),
        "patch_overlap": L.make_patch_expansion(4, 2, True),
        "grad_patch": L.make_grad_patch_permutation(4, 2, 3),
        "dft_pairing": L.make_dft_pairing(4, 3),
        "sensing": L.make_sensing(8, 0.5, 7),
        "sum_pair": L.make_sum_pair(6),
        "compose": L.compose(L.make_diff_d0(4), L.diag_op(np.ones(4) * 0.5)),
        "stack": L.stack(L.identity_op(6), L.make_diff_d0(6)),
        "block_diag": L.block_diag(L.identity_op(3), L.make_dvh(2)),
    }


@pytest.mark.parametrize("name", sorted(_small_ops()))
def test_adjoint_identity(name, rng):
    assert _adjoint_gap(_small_ops()[name], rng) <= 1e-8


@pytest.mark.parametrize("name", sorted(_small_ops()))
def test_dense_equivalence(name, rng):
    assert _dense_gap(_small_ops()[name], rng) <= 1e-10


def test_compose_associativity(rng):
    a = L.diag_op(np.linspace(-1.0, 1.0, 27))
    b = L.make_color_decorrelation(3)
    c = L.diag_op(np.linspace(1.0, 2.0, 27))
    x = rng.standard_normal(27)
    left = L.compose(L.compose(a, b), c)
    right = L.compose(a, L.compose(b, c))
    assert np.allclose(left.forward(x), right.forward(x), atol=1e-12)


def test_compose_rejects_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        L.compose(L.identity_op(3), L.identity_op(4))


def test_dft_pairing_is_isometry(rng):
    op = L.make_dft_pairing(8, 5)
    x = rng.standard_normal(40)
    assert np.isclose(np.linalg.norm(op.forward(x)), np.linalg.norm(x))
    # orthonormal: adjoint inverts
    assert np.allclose(op.adjoint(op.forward(x)), x, atol=1e-12)


def test_dft_pair_norms_are_column_amplitudes(rng):
    m, n = 8, 3
    op = L.make_dft_pairing(m, n)
    X = rng.standard_normal((m, n))
    out = op.forward(X.ravel(order="F")).reshape(2 * m, n, order="F")
    amp = np.hypot(out[0::2, :], out[1::2, :])
    assert np.allclose(amp, np.abs(np.fft.fft(X, axis=0, norm="ortho")), atol=1e-12)


def test_sensing_rows_are_orthonormal(rng):
    op = L.make_sensing(16, 0.5, 3)
    D = L.to_dense(op)
    assert np.allclose(D @ D.T, np.eye(op.out_dim), atol=1e-12)


def test_sensing_block_structure_for_odd_multiples():
    # 24 = 3 * 8: the transform must fall back to length-8 blocks
    op = L.make_sensing(24, 1.0, 0)
    D = L.to_dense(op)
    assert np.allclose(D @ D.T, np.eye(24), atol=1e-12)


def test_sensing_is_deterministic_per_seed(rng):
    x = rng.standard_normal(16)
    a = L.make_sensing(16, 0.4, 11).forward(x)
    b = L.make_sensing(16, 0.4, 11).forward(x)
    assert np.array_equal(a, b)
    c = L.make_sensing(16, 0.4, 12).forward(x)
    assert not np.allclose(a, c)


def test_sum_pair_forward_and_adjoint(rng):
    op = L.make_sum_pair(4)
    a, b = rng.standard_normal(4), rng.standard_normal(4)
    assert np.allclose(op.forward(np.concatenate([a, b])), a + b)
    y = rng.standard_normal(4)
    assert np.allclose(op.adjoint(y), np.concatenate([y, y]))


def test_patch_expansion_covers_every_pixel_once():
    # non-overlapping w=2 on a 4x4 plane: each pixel appears exactly once
    op = L.make_patch_expansion(4, 2, False)
    counts = op.adjoint(np.ones(op.out_dim))
    assert np.allclose(counts, 1.0)


def test_patch_expansion_requires_divisible_width():
    with pytest.raises(ValueError):
        L.make_patch_expansion(5, 2, False)


def test_op_norm_estimate_matches_dense(rng):
    # returns the largest eigenvalue of op^T op, i.e. the squared norm
    op = L.make_dvh(4)
    D = L.to_dense(op)
    est = L.op_norm_estimate(op)
    assert abs(est - np.linalg.norm(D, 2) ** 2) <= 1e-4 * max(1.0, est)


def test_diff_d0_forward_difference_with_zero_last_row():
    op = L.make_diff_d0(4)
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.allclose(op.forward(x), np.array([-1.0, -1.0, -1.0, 0.0]))


def test_image_planes_round_trip(rng):
    data = rng.random(2 * 3 * 3)
    img = L.Image(3, 3, 1, np.tile(data[:9], 1))
    (p,) = img.planes()
    assert np.allclose(p.ravel(order="F"), img.data)
    clipped = L.Image(3, 3, 1, data[:9] * 4.0 - 1.0).clipped()
    assert clipped.data.min() >= 0.0 and clipped.data.max() <= 1.0


def test_operator_input_size_is_checked():
    op = L.identity_op(4)
    with pytest.raises(AssertionError, match="expected input of size 4"):
        op.forward(np.zeros(5))
