"""Every catalogue operator against an independent conic-program minimizer.

50 random instances per operator, dimension at most 5, agreement within
1e-4 (the oracle's own accuracy floor).  Projections additionally must
be idempotent and feasible to 1e-10.
"""

import numpy as np
import pytest

from epimoreau import prox as P

from _oracles import prox_oracle, projection_oracle

N_INSTANCES = 50
ATOL = 1e-4
FEAS = 1e-10


def _rngs():
    return [np.random.default_rng(9000 + i) for i in range(N_INSTANCES)]


@pytest.mark.parametrize("kind", ["l1", "l2", "linf"])
def test_vector_norm_prox_matches_oracle(kind):
    fn = {"l1": P.prox_l1, "l2": P.prox_l2, "linf": P.prox_linf}[kind]
    for rng in _rngs():
        n = int(rng.integers(1, 6))
        x = rng.standard_normal(n) * rng.uniform(0.5, 3.0)
        g = rng.uniform(0.05, 2.0)
        assert np.allclose(fn(x, g), prox_oracle(kind, x, g), atol=ATOL)


def test_l21_block_prox_matches_oracle():
    for rng in _rngs():
        k = int(rng.integers(1, 3))
        n = k * int(rng.integers(1, 3))  # at most 4 entries
        x = rng.standard_normal(n) * 2.0
        g = rng.uniform(0.05, 2.0)
        got = P.prox_l21_blocks(x, g, k)
        assert np.allclose(got, prox_oracle("l21", x, g, block_size=k), atol=ATOL)


def test_nuclear_prox_matches_oracle():
    for rng in _rngs():
        r, c = int(rng.integers(1, 3)), 2
        X = rng.standard_normal((r, c)) * 2.0
        g = rng.uniform(0.05, 2.0)
        assert np.allclose(P.prox_nuclear(X, g), prox_oracle("nuclear", X, g), atol=ATOL)


def test_weighted_mixed_prox_matches_oracle():
    for rng in _rngs():
        ll = int(rng.integers(1, 4))
        n = ll + 2  # one chroma pair keeps dim <= 5
        x = rng.standard_normal(n) * 2.0
        g = rng.uniform(0.05, 2.0)
        got = P.prox_weighted_l1_l21(x, g, ll)
        want = prox_oracle("weighted_l1_l21", x, g, luma_len=ll)
        assert np.allclose(got, want, atol=ATOL)


def test_box_projection_matches_oracle_and_is_idempotent():
    for rng in _rngs():
        x = rng.standard_normal(int(rng.integers(1, 6))) * 3.0
        a, b = sorted(rng.uniform(-2.0, 2.0, size=2))
        got = P.project_box(x, a, b)
        assert np.allclose(got, projection_oracle("box", x, a=a, b=b), atol=ATOL)
        assert np.all(got >= a - FEAS) and np.all(got <= b + FEAS)
        assert np.allclose(P.project_box(got, a, b), got, atol=FEAS)


def test_l1_ball_projection_matches_oracle_and_is_idempotent():
    for rng in _rngs():
        x = rng.standard_normal(int(rng.integers(1, 6))) * 3.0
        eps = rng.uniform(0.1, 3.0)
        got = P.project_l1_ball(x, eps)
        assert np.allclose(got, projection_oracle("l1_ball", x, eps=eps), atol=ATOL)
        assert np.abs(got).sum() <= eps + FEAS
        assert np.allclose(P.project_l1_ball(got, eps), got, atol=FEAS)


def test_epi_l2_projection_matches_oracle_and_is_idempotent():
    for rng in _rngs():
        x = rng.standard_normal(int(rng.integers(1, 5))) * 2.0
        xi = rng.uniform(-3.0, 3.0)
        tau = rng.uniform(0.3, 2.5)
        px, pxi = P.project_epi_l2(x, xi, tau)
        ox, oxi = projection_oracle("epi_l2", x, xi=xi, tau=tau)
        assert np.allclose(px, ox, atol=ATOL) and abs(pxi - oxi) <= ATOL
        assert tau * np.linalg.norm(px) <= pxi + FEAS
        qx, qxi = P.project_epi_l2(px, pxi, tau)
        assert np.allclose(qx, px, atol=FEAS) and abs(qxi - pxi) <= FEAS


def test_epi_l1_projection_matches_oracle_and_is_idempotent():
    for rng in _rngs():
        x = rng.standard_normal(int(rng.integers(1, 5))) * 2.0
        xi = rng.uniform(-3.0, 3.0)
        px, pxi = P.project_epi_l1(x, xi)
        ox, oxi = projection_oracle("epi_l1", x, xi=xi)
        assert np.allclose(px, ox, atol=ATOL) and abs(pxi - oxi) <= ATOL
        assert np.abs(px).sum() <= pxi + FEAS
        qx, qxi = P.project_epi_l1(px, pxi)
        assert np.allclose(qx, px, atol=FEAS) and abs(qxi - pxi) <= FEAS


def test_epi_nuclear_projection_matches_oracle_and_is_idempotent():
    for rng in _rngs():
        X = rng.standard_normal((2, 2)) * 2.0
        xi = rng.uniform(-2.0, 3.0)
        PX, pxi = P.project_epi_nuclear(X, xi)
        OX, oxi = projection_oracle("epi_nuclear", X, xi=xi)
        assert np.allclose(PX, OX, atol=ATOL) and abs(pxi - oxi) <= ATOL
        assert np.linalg.svd(PX, compute_uv=False).sum() <= pxi + FEAS
        QX, qxi = P.project_epi_nuclear(PX, pxi)
        assert np.allclose(QX, PX, atol=FEAS) and abs(qxi - pxi) <= FEAS


def test_identity_projection_matches_oracle_and_is_idempotent():
    for rng in _rngs():
        n = int(rng.integers(1, 3))
        x, y = rng.standard_normal(n), rng.standard_normal(n)
        px, py = P.project_identity_set(x, y)
        ox, oy = projection_oracle("identity_set", x, twin=y)
        assert np.allclose(px, ox, atol=ATOL) and np.allclose(py, oy, atol=ATOL)
        assert np.max(np.abs(px - py), initial=0.0) <= FEAS
        qx, qy = P.project_identity_set(px, py)
        assert np.allclose(qx, px, atol=FEAS)


def test_blockwise_family_matches_monolithic_oracle():
    # the dispatched product prox equals the joint minimizer of the sum
    fam = P.ProxFamily(
        4, [P.Block("l1", 0, 2), P.Block("box", 2, 2, params={"a": 0.0, "b": 1.0})]
    )
    for rng in _rngs()[:10]:
        x = rng.standard_normal(4) * 2.0
        g = rng.uniform(0.1, 1.5)
        got = fam.prox(x, g)
        assert np.allclose(got[:2], prox_oracle("l1", x[:2], g), atol=ATOL)
        assert np.allclose(got[2:], projection_oracle("box", x[2:], a=0.0, b=1.0), atol=ATOL)
