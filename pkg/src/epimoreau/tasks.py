"""Experiment drivers, synthetic data, degradation model, and metrics.

Three desk-scale recovery studies: color-image denoising, compressed
sensing reconstruction, and principal-component extraction from banded
matrices with sparse outliers.  Each grid point builds one model
(two-phase for the guided relaxed variants), solves it, and emits a
RunReport; solver failures are captured per point so a sweep always
returns one report per requested point.

Grid points are independent and may run in a process pool; workers
rebuild operators from the primitive task description, so reports are
identical whatever the worker count.  Step sizes are memoized per
variant inside each worker process (they do not depend on mu or lam1:
the Moreau operator carries 1/sqrt(mu), so every mu-weighted spectral
bound is constant along the grid).
"""

import csv
import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._kernels import warmup
from .linops import Image, identity_op, make_dvh, make_sensing, make_sum_pair
from .models import VariantConfig, build_model, compute_reference, variant_label
from .solver import (
    SolverConfig,
    default_steps,
    objective_value,
    solve,
    tightness_report,
)

PSNR_CAP = 99.0

MU_GRID = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5)
LAM1_GRID = (0.05, 0.25, 0.5, 0.75, 1.0, 1.25)

DENOISE_VARIANTS = (
    ("dvtv", "plain"),
    ("dvtv", "moreau"),
    ("dvtv", "er_moreau"),
    ("stv", "plain"),
    ("stv", "moreau"),
    ("stv", "er_moreau"),
    ("dstv", "plain"),
    ("dstv", "er_moreau"),
)
CS_VARIANTS = (
    ("dvtv", "plain"),
    ("dvtv", "er_moreau"),
    ("stv", "plain"),
    ("stv", "er_moreau"),
    ("dstv", "plain"),
    ("dstv", "er_moreau"),
)
RPCA_VARIANTS = (
    ("nn", "plain"),
    ("nn", "moreau"),
    ("asnn", "plain"),
    ("asnn", "er_moreau"),
)


# -- report container ---------------------------------------------------------

@dataclass
class RunReport:
    """Outcome of one grid point.

    hist_* fields are filled for image tasks only; the epigraph gap
    fields only for relaxed builds.  estimate/estimate_sparse stay empty
    unless the driver was asked to keep solutions (they are excluded
    from the serialized forms).
    """

    task: str
    variant: str
    regularizer: str
    enhancement: str
    mu: float
    theta: float
    rho: float
    lam1: float
    seed: int
    psnr_db: float = math.nan
    iterations: int = 0
    converged: bool = False
    residual: float = math.nan
    objective: float = math.nan
    max_epigraph_gap: float = math.nan
    max_relative_gap: float = math.nan
    hist_edges: tuple = ()
    hist_truth: tuple = ()
    hist_est: tuple = ()
    hist_truth_mean: float = math.nan
    hist_est_mean: float = math.nan
    error: str = ""
    wall_time: float = 0.0
    estimate: tuple = ()
    estimate_sparse: tuple = ()


# flat CSV column order (arrays live in the JSON form only)
REPORT_COLUMNS = (
    "task", "variant", "regularizer", "enhancement",
    "mu", "theta", "rho", "lam1", "seed",
    "psnr_db", "iterations", "converged", "residual", "objective",
    "max_epigraph_gap", "max_relative_gap",
    "hist_truth_mean", "hist_est_mean",
    "error", "wall_time",
)

_SERIAL_EXCLUDE = ("estimate", "estimate_sparse")


# -- degradation and synthetic data -------------------------------------------

def degrade(x, phi, sigma_noise, seed):
    """Observation y = phi(x) + white Gaussian noise, deterministic per seed."""
    if sigma_noise < 0:
        raise ValueError("sigma_noise must be nonnegative")
    y = phi.forward(np.asarray(x, dtype=np.float64).ravel())
    if sigma_noise == 0.0:
        return y
    rng = np.random.default_rng(seed)
    return y + rng.normal(0.0, sigma_noise, y.size)


def synth_rpca_data(s, p_noise, seed):
    """Banded rank-deficient matrix, outliers on its zero support, their sum.

    Column j (0-based) of the structured component carries ones on the
    eight rows s*j .. s*j+7 of the 32-row frame; shifts 0 and 1 use 25
    columns, shift 2 uses 13, so the band ends exactly at the last row.
    Outliers are independent 1s on the zero support of the structured
    component, with the rate sized so the expected outlier mass equals
    M*N*p_noise (the radius of the l1 ball the solvers constrain S to).
    """
    if s not in (0, 1, 2):
        raise ValueError("shift must be 0, 1, or 2")
    m_rows = 32
    n_cols = 13 if s == 2 else 25
    low = np.zeros((m_rows, n_cols))
    for j in range(n_cols):
        low[s * j : s * j + 8, j] = 1.0
    rng = np.random.default_rng(seed)
    zero_count = int((low == 0.0).sum())
    p_eff = m_rows * n_cols * p_noise / float(zero_count)
    outliers = ((rng.random((m_rows, n_cols)) < p_eff) & (low == 0.0)).astype(
        np.float64
    )
    return low, outliers, low + outliers


def psnr(u, u_org):
    """10 log10(N / squared error), capped at the 99 dB sentinel."""
    u = np.asarray(u, dtype=np.float64).ravel()
    ref = np.asarray(u_org, dtype=np.float64).ravel()
    if u.size != ref.size:
        raise ValueError("signal lengths differ")
    err = float(np.sum((u - ref) ** 2))
    if err <= 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(u.size / err), PSNR_CAP)


@dataclass
class Histogram:
    counts: np.ndarray
    edges: np.ndarray
    mean: float


def _grad_magnitude(img):
    """Per-pixel l1 magnitude of the stacked difference field."""
    if img.width != img.height:
        raise ValueError("square images only")
    d = make_dvh(img.width)
    per = img.n_pixels
    mag = np.zeros(per)
    for c in range(img.channels):
        g = d.forward(img.data[c * per : (c + 1) * per])
        mag += np.abs(g[:per]) + np.abs(g[per:])
    return mag


def grad_histogram(x_est, x_org, threshold=1.0, bins=20):
    """(truth, estimate) gradient-magnitude histograms over strong pixels.

    Pixels qualify where the ground-truth magnitude is at least the
    threshold; both histograms share uniform bins over [threshold,
    max(truth)].  Estimate values are clipped into that range for
    counting, so each count vector sums to the number of qualifying
    pixels, while the reported means are unclipped.  No qualifying
    pixels yields empty histograms with NaN means.
    """
    if (x_est.width, x_est.height, x_est.channels) != (
        x_org.width,
        x_org.height,
        x_org.channels,
    ):
        raise ValueError("image geometry mismatch")
    truth = _grad_magnitude(x_org)
    est = _grad_magnitude(x_est)
    mask = truth >= threshold
    if not np.any(mask):
        empty = np.zeros(0)
        return (
            Histogram(empty.astype(np.int64), empty, math.nan),
            Histogram(empty.astype(np.int64), empty, math.nan),
        )
    truth = truth[mask]
    est = est[mask]
    hi = float(truth.max())
    t_counts, edges = np.histogram(truth, bins=bins, range=(threshold, hi))
    e_counts, _ = np.histogram(
        np.clip(est, threshold, hi), bins=bins, range=(threshold, hi)
    )
    return (
        Histogram(t_counts, edges, float(truth.mean())),
        Histogram(e_counts, edges, float(est.mean())),
    )


def synth_piecewise_image(n, n_regions, seed):
    """Axis-aligned piecewise-constant color image, deterministic per seed.

    Regions are grown by repeatedly splitting the largest rectangle at a
    random interior position; colors sit near the corners of [0.1, 0.9]
    so that region boundaries usually clear the gradient-histogram
    threshold.
    """
    if n < 8:
        raise ValueError("side must be at least 8")
    if n_regions < 1:
        raise ValueError("need at least one region")
    rng = np.random.default_rng(seed)

    def color():
        base = np.where(rng.integers(0, 2, 3) == 1, 0.85, 0.15)
        return base + rng.uniform(-0.05, 0.05, 3)

    rects = [(0, 0, n, n, color())]
    while len(rects) < n_regions:
        order = sorted(
            range(len(rects)), key=lambda i: -(rects[i][2] * rects[i][3])
        )
        pick = next((i for i in order if max(rects[i][2], rects[i][3]) >= 4), None)
        if pick is None:
            break
        r0, c0, h, w, col = rects.pop(pick)
        if h >= w:
            cut = int(rng.integers(2, h - 1))
            parts = [(r0, c0, cut, w, col), (r0 + cut, c0, h - cut, w, color())]
        else:
            cut = int(rng.integers(2, w - 1))
            parts = [(r0, c0, h, cut, col), (r0, c0 + cut, h, w - cut, color())]
        rects.extend(parts)

    arr = np.zeros((n, n, 3))
    for r0, c0, h, w, col in rects:
        arr[r0 : r0 + h, c0 : c0 + w, :] = col
    data = np.concatenate([arr[:, :, c].ravel(order="F") for c in range(3)])
    return Image(n, n, 3, data)


def matrix_to_image(mat):
    """Wrap a 2-D array as a single-channel image (values as-is)."""
    mat = np.asarray(mat, dtype=np.float64)
    return Image(mat.shape[1], mat.shape[0], 1, mat.ravel(order="F"))


# -- PPM I/O -------------------------------------------------------------------

def write_ppm(path, img):
    """8-bit binary P6; samples are clipped into [0, 1] before quantizing."""
    arr = np.stack(img.clipped().planes(), axis=-1)
    if img.channels == 1:
        arr = np.repeat(arr, 3, axis=-1)
    raw = np.round(arr * 255.0).astype(np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (img.width, img.height))
        fh.write(raw)


def read_ppm(path):
    """Read 8-bit binary P6 into the planar container, scaled to [0, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4 and pos < len(blob):
        if blob[pos : pos + 1].isspace():
            pos += 1
            continue
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    pos += 1  # the single whitespace byte after maxval
    if len(fields) < 4 or fields[0] != b"P6":
        raise OSError(f"{path}: not a binary PPM")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise OSError(f"{path}: only 8-bit data is supported")
    need = width * height * 3
    raw = np.frombuffer(blob[pos : pos + need], dtype=np.uint8)
    if raw.size != need:
        raise OSError(f"{path}: truncated pixel data")
    arr = raw.reshape(height, width, 3).astype(np.float64) / 255.0
    data = np.concatenate([arr[:, :, c].ravel(order="F") for c in range(3)])
    return Image(width, height, 3, data)


# -- grid execution ------------------------------------------------------------

_STEP_MEMO = {}


def _memo_steps(key, spec):
    got = _STEP_MEMO.get(key)
    if got is None:
        got = default_steps(spec)
        _STEP_MEMO[key] = got
    return got


def _variant_params(enhancement, theta, rho, theta_er):
    if enhancement == "plain":
        return 0.0, 0.0
    if enhancement == "moreau":
        return float(theta), 0.0
    er_theta = float(rho) if theta_er is None else float(theta_er)
    return er_theta, float(rho)


def _solve_point(t, rep, chain=None):
    task = t["task"]
    if task == "rpca":
        if "low" in t:
            low, obs = t["low"], t["obs"]
        else:
            low, _, obs = synth_rpca_data(t["shift"], t["p_noise"], t["seed"])
        phi = make_sum_pair(low.size)
        y = obs.ravel(order="F")
        truth = low.ravel(order="F")
        cfg = VariantConfig(
            t["regularizer"],
            t["enhancement"],
            mu=t["mu"],
            theta=t["theta"],
            rho=t["rho"],
            lam1=t["lam1"],
            eps_s=t["eps_s"],
            eps_inc=t.get("eps_inc", 0.0),
            m_rows=low.shape[0],
            n_cols=low.shape[1],
        )
    elif task in ("denoise", "cs"):
        truth = t["x_org"]
        y = t["y"]
        if task == "cs":
            phi = make_sensing(truth.size, t["sampling"], t["sensing_seed"])
        else:
            phi = identity_op(truth.size)
        cfg = VariantConfig(
            t["regularizer"],
            t["enhancement"],
            mu=t["mu"],
            theta=t["theta"],
            rho=t["rho"],
            w=t["w"],
            overlap=t["overlap"],
            n=t["n"],
        )
    else:
        raise ValueError(f"unknown task: {task}")

    key = (
        task,
        t["regularizer"],
        t["enhancement"],
        t["theta"],
        t["rho"],
        t.get("n"),
        t.get("w"),
        t.get("overlap"),
        t.get("sampling"),
        t.get("sensing_seed"),
        t.get("shift"),
    )
    solver_args = {"eps_stop": t["eps_stop"], "max_iters": t["max_iters"]}
    cache_key = (t["regularizer"], t["mu"], t["lam1"])
    if t["enhancement"] == "er_moreau":

        def phase1(spec):
            if chain is not None:
                hit = chain["phase1"].get(cache_key)
                if hit is not None and hit.size == spec.layout.total:
                    return hit
            s1, t1 = _memo_steps(("bounds",) + key, spec)
            p_warm = chain.get("phase1_warm") if chain is not None else None
            x0, v0, w0 = p_warm if p_warm is not None else (None, None, None)
            sol, rep1 = solve(
                spec, SolverConfig(sigma=s1, tau=t1, **solver_args), x0, v0, w0
            )
            if chain is not None:
                chain["phase1_warm"] = (sol, rep1["v"], rep1["w"])
                chain["phase1"][cache_key] = sol
            return sol

        ref = compute_reference(
            cfg, phi, y, t["rho"], phase1, alpha=t.get("ref_alpha")
        )
        spec = build_model(cfg, phi, y, z_R=ref)
    else:
        spec = build_model(cfg, phi, y)

    sg, ta = _memo_steps(key, spec)
    warm = chain.get("warm") if chain is not None else None
    x0, v0, w0 = warm if warm is not None else (None, None, None)
    x, sol_rep = solve(
        spec,
        SolverConfig(
            sigma=sg, tau=ta, trace_path=t.get("trace_path"), **solver_args
        ),
        x0,
        v0,
        w0,
    )
    if chain is not None:
        chain["warm"] = (x, sol_rep["v"], sol_rep["w"])
        if spec.layout.has("z") and t["enhancement"] == "plain":
            chain["phase1"].setdefault(cache_key, x)

    name = "l" if task == "rpca" else "x"
    off, ln = spec.layout.slice(name)
    est = x[off : off + ln]
    rep.psnr_db = psnr(est, truth)
    rep.iterations = sol_rep["iterations"]
    rep.converged = sol_rep["converged"]
    rep.residual = sol_rep["residual"]
    rep.objective = float(objective_value(spec, x))
    if spec.meta.get("er"):
        tight = tightness_report(spec, x)
        rep.max_epigraph_gap = tight["max_gap"]
        rep.max_relative_gap = tight["max_relative"]
    if task != "rpca":
        n = t["n"]
        truth_h, est_h = grad_histogram(
            Image(n, n, 3, est),
            Image(n, n, 3, truth),
            threshold=t["hist_threshold"],
            bins=t["bins"],
        )
        rep.hist_edges = tuple(map(float, truth_h.edges))
        rep.hist_truth = tuple(map(int, truth_h.counts))
        rep.hist_est = tuple(map(int, est_h.counts))
        rep.hist_truth_mean = truth_h.mean
        rep.hist_est_mean = est_h.mean
    if t.get("keep_estimate"):
        rep.estimate = tuple(map(float, est))
        if task == "rpca":
            soff, sln = spec.layout.slice("s")
            rep.estimate_sparse = tuple(map(float, x[soff : soff + sln]))


def _run_point(t, chain=None):
    warmup()
    started = time.perf_counter()
    rep = RunReport(
        task=t["label_task"],
        variant=t["label"],
        regularizer=t["regularizer"],
        enhancement=t["enhancement"],
        mu=t["mu"],
        theta=t["theta"],
        rho=t["rho"],
        lam1=t["lam1"],
        seed=t["seed"],
    )
    try:
        _solve_point(t, rep, chain)
    except Exception as exc:  # per-point capture: the sweep must go on
        rep.error = f"{type(exc).__name__}: {exc}"
    rep.wall_time = time.perf_counter() - started
    return rep


def _execute(tasks, jobs):
    if jobs is None:
        jobs = os.cpu_count() or 1
    jobs = max(1, int(jobs))
    if jobs == 1 or len(tasks) <= 1:
        return [_run_point(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(_run_point, tasks))


def _image_tasks(
    task,
    image,
    y,
    variants,
    mu_values,
    seed,
    theta,
    rho,
    theta_er,
    w,
    overlap,
    eps_stop,
    max_iters,
    hist_threshold,
    bins,
    keep_estimates,
    trace_dir,
    extra,
):
    if image.channels != 3 or image.width != image.height:
        raise ValueError("image tasks need square color images")
    x_org = np.asarray(image.data, dtype=np.float64).ravel()
    out = []
    for reg, enh in variants:
        th, rh = _variant_params(enh, theta, rho, theta_er)
        label = variant_label(reg, enh)
        for mu in mu_values:
            t = {
                "task": task,
                "label_task": task,
                "regularizer": reg,
                "enhancement": enh,
                "label": label,
                "mu": float(mu),
                "theta": th,
                "rho": rh,
                "lam1": 1.0,
                "seed": int(seed),
                "n": image.width,
                "w": int(w),
                "overlap": bool(overlap),
                "x_org": x_org,
                "y": y,
                "eps_stop": float(eps_stop),
                "max_iters": int(max_iters),
                "hist_threshold": float(hist_threshold),
                "bins": int(bins),
                "keep_estimate": bool(keep_estimates),
            }
            t.update(extra)
            if trace_dir is not None:
                t["trace_path"] = os.path.join(
                    trace_dir, f"trace-{len(out):03d}.csv"
                )
            out.append(t)
    return out


def run_denoise(
    image,
    *,
    variants=DENOISE_VARIANTS,
    mu_values=MU_GRID,
    sigma_noise=0.1,
    seed=0,
    theta=0.99,
    rho=3.5,
    theta_er=None,
    w=3,
    overlap=False,
    eps_stop=1e-3,
    max_iters=20000,
    hist_threshold=1.0,
    bins=20,
    jobs=1,
    keep_estimates=False,
    trace_dir=None,
):
    """Denoising grid on one color image; one report per (variant, mu)."""
    phi = identity_op(image.data.size)
    y = degrade(image.data, phi, sigma_noise, seed)
    tasks = _image_tasks(
        "denoise", image, y, variants, mu_values, seed, theta, rho, theta_er,
        w, overlap, eps_stop, max_iters, hist_threshold, bins, keep_estimates,
        trace_dir, {},
    )
    return _execute(tasks, jobs)


def run_cs(
    image,
    *,
    variants=CS_VARIANTS,
    mu_values=MU_GRID,
    sampling=0.4,
    sigma_noise=0.1,
    seed=0,
    sensing_seed=None,
    theta=0.99,
    rho=4.0,
    theta_er=None,
    w=3,
    overlap=True,
    eps_stop=1e-3,
    max_iters=20000,
    hist_threshold=1.0,
    bins=20,
    jobs=1,
    keep_estimates=False,
    trace_dir=None,
):
    """Compressed-sensing grid on one color image."""
    s_seed = int(seed if sensing_seed is None else sensing_seed)
    phi = make_sensing(image.data.size, sampling, s_seed)
    y = degrade(image.data, phi, sigma_noise, seed)
    extra = {"sampling": float(sampling), "sensing_seed": s_seed}
    tasks = _image_tasks(
        "cs", image, y, variants, mu_values, seed, theta, rho, theta_er,
        w, overlap, eps_stop, max_iters, hist_threshold, bins, keep_estimates,
        trace_dir, extra,
    )
    return _execute(tasks, jobs)


def run_rpca(
    shift,
    *,
    variants=RPCA_VARIANTS,
    lam1_values=LAM1_GRID,
    mu=1.0,
    p_noise=0.1,
    seed=0,
    theta=0.10,
    rho=1.0,
    theta_er=None,
    eps_stop=1e-5,
    max_iters=30000,
    eps_inc=0.003,
    ref_alpha=1.0,
    jobs=None,
    keep_estimates=False,
    trace_dir=None,
):
    """Component-extraction grid at one shift; one report per (variant, lam1).

    Each variant's grid runs as one chain in descending lam1 order, every
    solve warm-started from the previous one; two-phase variants fetch
    their phase-1 solution from the plain solves of the same sweep when
    the matching plain variant ran first (otherwise phase 1 is solved in
    the same chained fashion).  Reports come back in (variant, ascending
    lam1) order regardless.  eps_inc tilts the spectral relaxations so
    their bound variables cannot drift above the amplitudes; ref_alpha
    scales the phase-1 reference (values above 1 are known to let the
    bounds float, see compute_reference).  jobs is accepted for interface
    symmetry with the image tasks but the chains are inherently serial.
    """
    del jobs
    low, outliers, obs = synth_rpca_data(shift, p_noise, seed)
    del outliers
    eps_s = low.size * p_noise
    warmup()
    trace_idx = 0
    reports = []
    phase1_cache = {}
    for reg, enh in variants:
        th, rh = _variant_params(enh, theta, rho, theta_er)
        label = variant_label(reg, enh)
        chain = {"warm": None, "phase1": phase1_cache, "phase1_warm": None}
        variant_reports = []
        for lam1 in sorted(lam1_values, reverse=True):
            t = {
                "task": "rpca",
                "label_task": f"rpca-shift{shift}",
                "regularizer": reg,
                "enhancement": enh,
                "label": label,
                "mu": float(mu),
                "theta": th,
                "rho": rh,
                "lam1": float(lam1),
                "seed": int(seed),
                "shift": int(shift),
                "p_noise": float(p_noise),
                "eps_s": float(eps_s),
                "eps_stop": float(eps_stop),
                "max_iters": int(max_iters),
                "eps_inc": float(eps_inc) if reg in ("asnn", "dstv") else 0.0,
                "ref_alpha": ref_alpha,
                "keep_estimate": bool(keep_estimates),
                "low": low,
                "obs": obs,
            }
            if trace_dir is not None:
                t["trace_path"] = os.path.join(
                    trace_dir, f"trace-{trace_idx:03d}.csv"
                )
            trace_idx += 1
            variant_reports.append(_run_point(t, chain))
        variant_reports.sort(key=lambda r: r.lam1)
        reports.extend(variant_reports)
    return reports


# -- aggregation and serialization ----------------------------------------------

def max_psnr_summary(reports):
    """Best finished grid point per (task, variant), first-seen order kept.

    Ties keep the earlier grid point; failed points never win.
    """
    best = {}
    for r in reports:
        if r.error:
            continue
        k = (r.task, r.variant)
        cur = best.get(k)
        if cur is None or r.psnr_db > cur.psnr_db:
            best[k] = r
    return best


def report_rows(reports):
    """Reports as JSON-ready dicts (NaN -> null, solution vectors dropped)."""
    rows = []
    for r in reports:
        d = dataclasses.asdict(r)
        for k in _SERIAL_EXCLUDE:
            d.pop(k, None)
        for k, v in list(d.items()):
            if isinstance(v, float) and math.isnan(v):
                d[k] = None
            elif isinstance(v, tuple):
                d[k] = list(v)
        rows.append(d)
    return rows


def write_reports_json(path, reports):
    with open(path, "w") as fh:
        json.dump(report_rows(reports), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _csv_cell(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return "" if math.isnan(v) else format(v, ".12g")
    return v


def write_reports_csv(path, reports):
    """One flat row per grid point, columns as in REPORT_COLUMNS."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(REPORT_COLUMNS)
        for r in reports:
            wr.writerow([_csv_cell(getattr(r, c)) for c in REPORT_COLUMNS])


def write_summary_csv(path, summary):
    """Maximum-PSNR table from a max_psnr_summary mapping."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(
            ("task", "variant", "mu", "lam1", "psnr_db", "iterations", "converged")
        )
        for (task, variant), r in summary.items():
            wr.writerow(
                [
                    task,
                    variant,
                    _csv_cell(r.mu),
                    _csv_cell(r.lam1),
                    _csv_cell(r.psnr_db),
                    r.iterations,
                    int(r.converged),
                ]
            )
