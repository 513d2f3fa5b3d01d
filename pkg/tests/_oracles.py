"""Independent numeric minimizers for prox/projection cross-checks.

Each helper solves argmin_y gamma*f(y) + 0.5*||y - x||^2 (or the
projection counterpart) as a small conic program, giving a reference
that shares no code with the closed-form catalogue.
"""

import cvxpy as cp
import numpy as np


def _solve(objective, *constraints):
    prob = cp.Problem(cp.Minimize(objective), list(constraints))
    prob.solve()
    if prob.status not in ("optimal", "optimal_inaccurate"):
        prob.solve(solver=cp.SCS, eps=1e-9)
    assert prob.status in ("optimal", "optimal_inaccurate"), prob.status
    return prob


def prox_oracle(kind, x, gamma, **kw):
    """Numeric prox of the named seed function at (x, gamma)."""
    x = np.asarray(x, dtype=np.float64)
    if kind == "nuclear":
        Y = cp.Variable(x.shape)
        f = cp.normNuc(Y)
    else:
        Y = cp.Variable(x.size)
        if kind == "l1":
            f = cp.norm1(Y)
        elif kind == "l2":
            f = cp.norm2(Y)
        elif kind == "linf":
            f = cp.norm_inf(Y)
        elif kind == "l21":
            k = kw["block_size"]
            f = sum(cp.norm2(Y[i : i + k]) for i in range(0, x.size, k))
        elif kind == "weighted_l1_l21":
            ll = kw["luma_len"]
            w = kw.get("weight", 0.5)
            f = w * cp.norm1(Y[:ll]) + sum(
                cp.norm2(Y[i : i + 2]) for i in range(ll, x.size, 2)
            )
        else:
            raise ValueError(kind)
    _solve(gamma * f + 0.5 * cp.sum_squares(Y - x))
    return np.asarray(Y.value, dtype=np.float64)


def projection_oracle(kind, x, **kw):
    """Numeric Euclidean projection onto the named set."""
    x = np.asarray(x, dtype=np.float64)
    if kind == "epi_nuclear":
        Y = cp.Variable(x.shape)
        xi = cp.Variable()
        _solve(
            0.5 * cp.sum_squares(Y - x) + 0.5 * cp.square(xi - kw["xi"]),
            cp.normNuc(Y) <= xi,
        )
        return np.asarray(Y.value), float(xi.value)
    Y = cp.Variable(x.size)
    quad = 0.5 * cp.sum_squares(Y - x)
    if kind == "box":
        _solve(quad, Y >= kw["a"], Y <= kw["b"])
        return np.asarray(Y.value)
    if kind == "l1_ball":
        _solve(quad, cp.norm1(Y) <= kw["eps"])
        return np.asarray(Y.value)
    if kind == "epi_l2":
        xi = cp.Variable()
        _solve(
            quad + 0.5 * cp.square(xi - kw["xi"]),
            kw["tau"] * cp.norm2(Y) <= xi,
        )
        return np.asarray(Y.value), float(xi.value)
    if kind == "epi_l1":
        xi = cp.Variable()
        _solve(quad + 0.5 * cp.square(xi - kw["xi"]), cp.norm1(Y) <= xi)
        return np.asarray(Y.value), float(xi.value)
    if kind == "identity_set":
        z = np.asarray(kw["twin"], dtype=np.float64)
        Z = cp.Variable(z.size)
        _solve(quad + 0.5 * cp.sum_squares(Z - z), Y == Z)
        return np.asarray(Y.value), np.asarray(Z.value)
    raise ValueError(kind)
