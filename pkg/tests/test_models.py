"""Variant wiring: configs, convexity condition, references, evaluation."""

import cvxpy as cp
import numpy as np
import pytest

from epimoreau import models as M
from epimoreau.linops import identity_op, make_sum_pair, to_dense
from epimoreau.models import (
    ReferenceData,
    VariantConfig,
    apply_goe,
    build_B_er,
    build_B_ligme,
    build_model,
    compute_reference,
    eval_regularizer,
    ligme_penalty,
    variant_label,
)


def _asnn_cfg(**kw):
    base = dict(regularizer="asnn", m_rows=6, n_cols=4, lam1=0.3)
    base.update(kw)
    return VariantConfig(**base)


def _dstv_cfg(**kw):
    base = dict(regularizer="dstv", n=4, w=2)
    base.update(kw)
    return VariantConfig(**base)


def test_variant_label():
    assert variant_label("nn", "moreau") == "l-nn"
    assert variant_label("asnn", "er_moreau") == "el-asnn"
    assert variant_label("dvtv", "plain") == "dvtv"


def test_config_rejects_unsupported_combinations():
    with pytest.raises(ValueError, match="unsupported combination"):
        VariantConfig("nn", "er_moreau", m_rows=4, n_cols=4)
    with pytest.raises(ValueError, match="unsupported combination"):
        VariantConfig("dstv", "moreau", n=4)


def test_config_parameter_validation():
    with pytest.raises(ValueError, match="mu"):
        _asnn_cfg(mu=0.0)
    with pytest.raises(ValueError, match="theta"):
        _asnn_cfg(theta=-0.1)
    with pytest.raises(ValueError, match="rho"):
        _asnn_cfg(enhancement="er_moreau", theta=0.5, rho=0.0)
    with pytest.raises(ValueError, match="eps_inc"):
        _asnn_cfg(eps_inc=-1e-3)
    with pytest.raises(ValueError, match="m_rows"):
        VariantConfig("nn")
    with pytest.raises(ValueError, match="side length"):
        VariantConfig("dvtv", n=1)
    with pytest.raises(ValueError, match="B construction"):
        _dstv_cfg(b_mode="other")


def test_config_rejects_theta_above_rho():
    # the simplified overall-convexity condition: accepted at equality,
    # rejected the moment theta exceeds rho
    _asnn_cfg(enhancement="er_moreau", theta=1.0, rho=1.0)
    with pytest.raises(ValueError, match="exceeds rho"):
        _asnn_cfg(enhancement="er_moreau", theta=1.0 + 1e-9, rho=1.0)


def test_build_requires_reference_for_er(rng):
    cfg = _asnn_cfg(enhancement="er_moreau", theta=0.5, rho=1.0)
    phi = make_sum_pair(24)
    with pytest.raises(ValueError, match="reference data"):
        build_model(cfg, phi, rng.random(24))


def _dense_convexity_floor(spec):
    Ph = to_dense(spec.phi_hat)
    BL = to_dense(spec.B) @ to_dense(spec.frakL)
    G = Ph.T @ Ph - spec.mu * BL.T @ BL
    return float(np.linalg.eigvalsh(G)[0])


@pytest.mark.parametrize("theta,rho", [(1.0, 1.0), (0.25, 1.0), (3.5, 3.5)])
def test_er_build_satisfies_convexity_condition(rng, theta, rho):
    cfg = _asnn_cfg(enhancement="er_moreau", theta=min(theta, rho), rho=rho, mu=1.0)
    mn = cfg.m_rows * cfg.n_cols
    spec = build_model(cfg, make_sum_pair(mn), rng.random(mn), z_R=rng.random(mn))
    assert spec.layout.total <= 512
    assert _dense_convexity_floor(spec) >= -1e-8


def test_er_build_convexity_image_variant(rng):
    cfg = VariantConfig("dvtv", "er_moreau", n=4, theta=3.5, rho=3.5, mu=0.2)
    spec = build_model(cfg, identity_op(48), rng.random(48), z_R=rng.random(32))
    assert spec.layout.total <= 512
    assert _dense_convexity_floor(spec) >= -1e-8


def test_build_B_er_diag_values():
    lay = M.ModelLayout(10, {"x": (0, 6), "z": (6, 4)})
    B = build_B_er(lay, 0.5, 2.0)
    want = np.concatenate([np.zeros(6), np.full(4, np.sqrt(0.25))])
    assert np.allclose(B.diag, want)
    assert np.allclose(build_B_er(lay, 0.0, 1.0).forward(np.ones(10)), 0.0)
    with pytest.raises(ValueError):
        build_B_er(lay, -0.1, 1.0)
    with pytest.raises(ValueError):
        build_B_er(lay, 0.5, 0.0)


@pytest.mark.parametrize("mode", ["scaled_identity", "chen_svd"])
def test_build_B_ligme_preserves_convexity(rng, mode):
    # denoising geometry (phi = I): the direct construction must keep
    # phi^T phi - mu L^T B^T B L positive semidefinite for theta < 1
    cfg = VariantConfig("dvtv", "moreau", n=4, theta=0.9, mu=0.7, b_mode=mode)
    spec = build_model(cfg, identity_op(48), rng.random(48))
    assert _dense_convexity_floor(spec) >= -1e-8


def test_apply_goe_appends_weighted_rows(rng):
    cfg = _asnn_cfg()
    mn = cfg.m_rows * cfg.n_cols
    phi = make_sum_pair(mn)
    spec = build_model(cfg, phi, rng.random(mn))
    z_R = rng.random(mn)
    ext = apply_goe(spec, z_R, rho=0.25)
    assert ext.phi_hat.out_dim == phi.out_dim + mn
    assert np.allclose(ext.y_hat[phi.out_dim :], 0.5 * z_R)
    p = rng.standard_normal(spec.layout.total)
    off, ln = spec.layout.slice("z")
    assert np.allclose(ext.phi_hat.forward(p)[phi.out_dim :], 0.5 * p[off : off + ln])
    with pytest.raises(ValueError, match="rho"):
        apply_goe(spec, z_R, rho=0.0)
    with pytest.raises(ValueError, match="size"):
        apply_goe(spec, z_R[:-1], rho=1.0)
    plain_nn = build_model(
        VariantConfig("nn", m_rows=6, n_cols=4), phi, rng.random(mn)
    )
    with pytest.raises(ValueError, match="relaxed"):
        apply_goe(plain_nn, z_R, rho=1.0)


def test_er_build_shapes_and_feasible_start(rng):
    cfg = _asnn_cfg(enhancement="er_moreau", theta=1.0, rho=1.0, eps_s=2.0)
    mn = cfg.m_rows * cfg.n_cols
    spec = build_model(cfg, make_sum_pair(mn), rng.random(mn), z_R=rng.random(mn))
    assert spec.tag == "el-asnn"
    for name in ("x", "z", "l", "s"):
        assert spec.layout.has(name)
    assert spec.meta["rho"] == 1.0
    # the initial point satisfies every hard constraint, epigraphs included
    assert spec.constraint_prox.violation(spec.C.forward(spec.x0)) <= 1e-9


def test_plain_builds_feasible_start(rng):
    for cfg in (_dstv_cfg(), VariantConfig("nn", m_rows=5, n_cols=4, eps_s=1.5)):
        dim = 3 * 16 if cfg.regularizer == "dstv" else 2 * 20
        phi = identity_op(dim) if cfg.regularizer == "dstv" else make_sum_pair(20)
        y = rng.random(phi.out_dim)
        spec = build_model(cfg, phi, y)
        assert spec.constraint_prox.violation(spec.C.forward(spec.x0)) <= 1e-9


def test_compute_reference_alpha_rule(rng):
    cfg = _asnn_cfg()
    mn = cfg.m_rows * cfg.n_cols
    phi = make_sum_pair(mn)
    y = rng.random(mn)
    grab = lambda spec: spec.x0  # stand-in for a converged solve
    assert compute_reference(cfg, phi, y, 0.5, grab).alpha == 2.0
    assert compute_reference(cfg, phi, y, 2.0, grab).alpha == 1.5
    assert compute_reference(cfg, phi, y, 1.0, grab).alpha == 2.0
    ref = compute_reference(cfg, phi, y, 1.0, grab, alpha=1.0)
    assert ref.alpha == 1.0
    assert ref.source.startswith("phase1:")
    base = M._build_er_plain(cfg, phi, y)
    off, ln = base.layout.slice("x")
    assert np.allclose(ref.z_R, base.meta["inner_eval"](base.x0[off : off + ln]))
    with pytest.raises(ValueError, match="rho"):
        compute_reference(cfg, phi, y, 0.0, grab)


def test_asnn_value_invariant_to_circular_column_shifts(rng):
    cfg = _asnn_cfg(m_rows=8, n_cols=5, lam1=1.0)
    m, n = cfg.m_rows, cfg.n_cols
    for _ in range(20):
        L = rng.random((m, n))
        x = np.concatenate([L.ravel(order="F"), rng.random(m * n)])
        v0, amp0 = eval_regularizer(cfg, x)
        shifts = rng.integers(0, m, size=n)
        L2 = np.stack([np.roll(L[:, j], shifts[j]) for j in range(n)], axis=1)
        x2 = np.concatenate([L2.ravel(order="F"), x[m * n :]])
        v1, amp1 = eval_regularizer(cfg, x2)
        assert abs(v1 - v0) <= 1e-10
        assert np.allclose(amp1, amp0, atol=1e-10)


def test_nn_value_is_scaled_nuclear_norm(rng):
    cfg = VariantConfig("nn", m_rows=5, n_cols=3, lam1=0.7)
    L = rng.standard_normal((5, 3))
    x = np.concatenate([L.ravel(order="F"), rng.standard_normal(15)])
    value, inner = eval_regularizer(cfg, x)
    assert np.isclose(value, 0.7 * np.linalg.svd(L, compute_uv=False).sum())
    assert inner.size == 0


def test_dstv_inner_matches_dense_svd_route(rng):
    cfg = _dstv_cfg()
    x = rng.random(48)
    value, inner = eval_regularizer(cfg, x)
    A = M._ER_PARTS["dstv"](cfg)[0]
    g = to_dense(A) @ x
    nb = (cfg.n // cfg.w) ** 2
    w2 = cfg.w * cfg.w
    per = 2 * nb * w2
    ref = []
    for ch in range(3):
        blocks = g[ch * per : (ch + 1) * per].reshape(-1, 2, w2)
        ref.extend(np.linalg.svd(b, compute_uv=False).sum() for b in blocks)
    assert np.allclose(inner, ref, atol=1e-10)
    chroma = np.hypot(inner[nb : 2 * nb], inner[2 * nb :])
    assert np.isclose(value, 0.5 * inner[:nb].sum() + chroma.sum())


def test_seed_value_carries_strict_increase_tilt(rng):
    z = rng.random(24)
    p = np.concatenate([rng.standard_normal(48), z])
    flat = build_model(_asnn_cfg(), make_sum_pair(24), rng.random(24))
    tilted = build_model(_asnn_cfg(eps_inc=0.003), make_sum_pair(24), rng.random(24))
    diff = tilted.seed_prox.value(p) - flat.seed_prox.value(p)
    assert np.isclose(diff, 0.003 * z.sum())


def test_ligme_penalty_matches_numeric_envelope(rng):
    cfg = VariantConfig("nn", "moreau", m_rows=2, n_cols=2, lam1=0.8, theta=0.5, eps_s=1.0)
    spec = build_model(cfg, make_sum_pair(4), rng.random(4))
    p = rng.standard_normal(8)
    got = ligme_penalty(spec, p)
    Pl = p[:4].reshape(2, 2, order="F")
    c2 = 0.5  # theta / mu on the enhanced slice
    V = cp.Variable((2, 2))
    prob = cp.Problem(
        cp.Minimize(0.8 * cp.normNuc(V) + 0.5 * c2 * cp.sum_squares(V - Pl))
    )
    prob.solve()
    want = 0.8 * np.linalg.svd(Pl, compute_uv=False).sum() - prob.value
    assert abs(got - want) <= 1e-6
    assert ligme_penalty(spec, np.zeros(8)) == 0.0
    assert 0.0 <= got <= spec.seed_prox.value(p) + 1e-12
