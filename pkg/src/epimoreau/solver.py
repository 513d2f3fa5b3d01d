"""Primal-dual solver for the built models.

One iteration updates the primal x against the smooth data term, the
Moreau auxiliary v through the seed prox at step mu/tau, and the stacked
dual w through the residual map of the gamma=1 seed-and-constraint prox,
with the usual 2x_{k+1} - x_k extrapolation.  Termination is on the
fixed-point residual ||p_k - p_{k-1}||_2 over the stacked (x, v, w).
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .linops import compose, op_norm_estimate, stack, to_dense
from .models import ligme_penalty


class SolverDivergenceError(RuntimeError):
    """Raised when iterates blow up or go non-finite."""


@dataclass
class SolverConfig:
    kappa: float = 1.1
    eps_stop: float = 1e-3
    max_iters: int = 10000
    sigma: float = None
    tau: float = None
    record_history: bool = False
    trace_path: str = None

    def __post_init__(self):
        assert self.kappa > 1.0, "the step safety factor must exceed 1"
        assert self.eps_stop > 0.0
        if self.sigma is not None:
            assert self.sigma > 0.0
        if self.tau is not None:
            assert self.tau > 0.0


@dataclass
class SolverState:
    x: np.ndarray
    v: np.ndarray
    w: np.ndarray
    k: int
    residual: list = field(default_factory=list)


def default_steps(spec, kappa=1.1):
    """Conservative admissible step parameters (sigma, tau).

    sigma bounds the x-block curvature: lam(phi_hat^T phi_hat) plus
    mu*lam((B frakL)^T B frakL) plus lam(frakL^T frakL + C^T C); tau bounds
    the v-block: mu*lam(B^T B) plus the same stacked-analysis term.
    """
    assert kappa > 1.0
    lam_phi = op_norm_estimate(spec.phi_hat)
    lam_lc = op_norm_estimate(stack(spec.frakL, spec.C))
    if spec.B.is_zero:
        lam_bl = 0.0
        lam_b = 0.0
    else:
        lam_bl = op_norm_estimate(compose(spec.B, spec.frakL))
        lam_b = op_norm_estimate(spec.B)
    sigma = kappa * (lam_phi + spec.mu * lam_bl + lam_lc)
    tau = kappa * (spec.mu * lam_b + lam_lc)
    return sigma, tau


def objective_value(spec, x):
    """Data term plus mu * Psi_B at x; NaN when B has no diagonal form."""
    r = spec.phi_hat.forward(x) - spec.y_hat
    data = 0.5 * float(r @ r)
    lx = spec.frakL.forward(x)
    if spec.B.is_zero:
        return data + spec.mu * spec.seed_prox.value(lx)
    if spec.B.diag is None:
        return np.nan
    return data + spec.mu * ligme_penalty(spec, lx)


def solve(spec, cfg=None, x0=None, v0=None, w0=None):
    """Run the iteration; returns (solution, report fragment).

    The report carries iteration count, convergence flag, the final
    residual, step sizes, wall time, the final (v, w) for restarts, and
    optional histories.  Divergence (10x residual growth over a
    100-iteration window) and non-finite iterates abort with
    SolverDivergenceError.
    """
    cfg = cfg or SolverConfig()
    q = spec.frakL.out_dim
    x = np.array(spec.x0 if x0 is None else x0, dtype=np.float64)
    v = np.zeros(q) if v0 is None else np.array(v0, dtype=np.float64)
    w = (
        np.zeros(q + spec.C.out_dim)
        if w0 is None
        else np.array(w0, dtype=np.float64)
    )
    assert x.size == spec.layout.total and v.size == q
    assert w.size == q + spec.C.out_dim

    if cfg.sigma is not None and cfg.tau is not None:
        sigma, tau = cfg.sigma, cfg.tau
    else:
        sigma, tau = default_steps(spec, cfg.kappa)

    mu = spec.mu
    has_b = not spec.B.is_zero
    residuals = []
    objectives = []
    tracing = cfg.trace_path is not None
    trace = open(cfg.trace_path, "w") if tracing else None
    started = time.perf_counter()
    converged = False
    k = 0

    try:
        if tracing:
            trace.write("k,residual,objective,max_epigraph_gap\n")
        for k in range(1, cfg.max_iters + 1):
            # primal step
            grad = spec.phi_hat.adjoint(spec.phi_hat.forward(x) - spec.y_hat)
            if has_b:
                lx = spec.frakL.forward(x)
                grad += mu * spec.frakL.adjoint(
                    spec.B.adjoint(spec.B.forward(v - lx))
                )
            w1 = w[:q]
            w2 = w[q:]
            grad += mu * (spec.frakL.adjoint(w1) + spec.C.adjoint(w2))
            x_new = x - grad / sigma

            # Moreau auxiliary
            e = 2.0 * x_new - x
            le = spec.frakL.forward(e)
            if has_b:
                arg = v + (mu / tau) * spec.B.adjoint(spec.B.forward(le - v))
            else:
                arg = v
            v_new = spec.seed_prox.prox(arg, mu / tau)

            # dual step at unit prox scale
            u1 = le + w1
            u2 = spec.C.forward(e) + w2
            w_new = np.concatenate(
                [
                    u1 - spec.seed_prox.prox(u1, 1.0),
                    u2 - spec.constraint_prox.prox(u2, 1.0),
                ]
            )

            with np.errstate(over="ignore"):  # inf here is caught as divergence
                res = float(
                    np.sqrt(
                        np.sum((x_new - x) ** 2)
                        + np.sum((v_new - v) ** 2)
                        + np.sum((w_new - w) ** 2)
                    )
                )
            x, v, w = x_new, v_new, w_new

            if not np.isfinite(res):
                raise SolverDivergenceError(
                    f"{spec.tag}: non-finite residual at iteration {k}"
                )
            residuals.append(res)
            if len(residuals) > 100 and res > 10.0 * residuals[-101]:
                raise SolverDivergenceError(
                    f"{spec.tag}: residual grew 10x over 100 iterations "
                    f"({residuals[-101]:.3e} -> {res:.3e} at k={k})"
                )

            if cfg.record_history or tracing:
                obj = objective_value(spec, x)
                objectives.append(obj)
                if tracing:
                    gaps = spec.constraint_prox.epigraph_gaps(spec.C.forward(x))
                    max_gap = max(
                        (float(np.max(g)) for _, g, _ in gaps), default=0.0
                    )
                    trace.write(f"{k},{res:.12e},{obj:.12e},{max_gap:.12e}\n")

            if res <= cfg.eps_stop:
                converged = True
                break
    finally:
        if tracing:
            trace.close()

    report = {
        "iterations": k,
        "converged": converged,
        "residual": residuals[-1] if residuals else 0.0,
        "sigma": sigma,
        "tau": tau,
        "wall_time": time.perf_counter() - started,
        "v": v,
        "w": w,
    }
    if cfg.record_history:
        report["residual_history"] = np.array(residuals)
        report["objective_history"] = np.array(objectives)
    return x, report


def check_overall_convexity(spec):
    """Convexity condition report.

    Relaxed-with-guide builds get the analytic theta <= rho check; any
    build small enough is also verified by a dense eigenvalue bound on
    phi_hat^T phi_hat - mu (B frakL)^T (B frakL).
    """
    cfg = spec.meta.get("cfg")
    report = {"analytic_ok": None, "lambda_min": None, "method": "none", "ok": True}
    if spec.meta.get("er") and "rho" in spec.meta and cfg is not None:
        report["analytic_ok"] = bool(cfg.theta <= spec.meta["rho"] + 1e-12)
        report["method"] = "analytic"
        report["ok"] = report["analytic_ok"]
    if spec.layout.total <= 512:
        phid = to_dense(spec.phi_hat)
        quad = phid.T @ phid
        if not spec.B.is_zero:
            bl = to_dense(compose(spec.B, spec.frakL))
            quad = quad - spec.mu * (bl.T @ bl)
        lam_min = float(np.linalg.eigvalsh(quad)[0])
        report["lambda_min"] = lam_min
        report["method"] = "dense" if report["method"] == "none" else "both"
        report["ok"] = bool(lam_min >= -1e-8) and (report["analytic_ok"] is not False)
    report["violation"] = not report["ok"]
    return report


def tightness_report(spec, solution):
    """Per-epigraph slack of a relaxed build's solution.

    For every epigraph block, reports the largest (bound - inner value)
    raw and relative to the block's largest bound magnitude; at a tight
    solution both vanish (up to solver tolerance).
    """
    if not spec.meta.get("er"):
        raise ValueError("tightness requires an epigraph-relaxed build")
    cx = spec.C.forward(np.asarray(solution, dtype=np.float64).ravel())
    blocks = []
    for kind, gaps, bounds in spec.constraint_prox.epigraph_gaps(cx):
        raw = float(np.max(gaps)) if gaps.size else 0.0
        scale = float(np.max(np.abs(bounds))) if bounds.size else 0.0
        blocks.append(
            {
                "kind": kind,
                "max_gap": raw,
                "relative": raw / max(scale, 1e-12),
            }
        )
    return {
        "blocks": blocks,
        "max_gap": max((b["max_gap"] for b in blocks), default=0.0),
        "max_relative": max((b["relative"] for b in blocks), default=0.0),
    }
