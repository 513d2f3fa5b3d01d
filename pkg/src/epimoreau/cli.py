"""Config-driven command-line front end.

Subcommands: run (one recovery), sweep (grid expansion with a maximum-PSNR
summary), compare (several variants on one shared observation, table-style
CSV), check (adjoint/prox/convexity self-tests).

Configs are flat JSON; grids are arrays.  Every run writes the fully
resolved config next to its outputs, in a directory named by config hash
and seed.  Exit codes: 0 success, 1 config error, 2 solver divergence,
3 I/O error.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import linops, models, prox, solver, tasks
from .models import variant_label

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_IO = 3

TASKS = ("denoise", "cs", "rpca")

# schema: key -> (applicable tasks, kind)
# kinds: grids accept a scalar or a non-empty array of scalars
_SCHEMA = {
    "task": (TASKS, "task"),
    "regularizer": (TASKS, "str"),
    "enhancement": (TASKS, "str"),
    "variants": (TASKS, "variants"),
    "mu": (TASKS, "grid"),
    "lam1": (("rpca",), "grid"),
    "theta": (TASKS, "grid"),
    "theta_er": (TASKS, "num"),
    "rho": (TASKS, "grid"),
    "w": (("denoise", "cs"), "int"),
    "overlap": (("denoise", "cs"), "bool"),
    "sigma_noise": (("denoise", "cs"), "num"),
    "sampling": (("cs",), "num"),
    "shift": (("rpca",), "intgrid"),
    "p_noise": (("rpca",), "num"),
    "image": (("denoise", "cs"), "str"),
    "n": (("denoise", "cs"), "int"),
    "n_regions": (("denoise", "cs"), "int"),
    "eps_stop": (TASKS, "num"),
    "max_iters": (TASKS, "int"),
    "seed": (TASKS, "int"),
    "out": (TASKS, "str"),
}

_DEFAULT_VARIANTS = {
    "denoise": tasks.DENOISE_VARIANTS,
    "cs": tasks.CS_VARIANTS,
    "rpca": tasks.RPCA_VARIANTS,
}

# (theta, rho) defaults per task; theta drives the Moreau variants, the
# relaxed variants tie theta to rho as in the reference experiments
_DEFAULT_THETA_RHO = {"denoise": (0.99, 3.5), "cs": (0.99, 4.0), "rpca": (0.10, 1.0)}


class ConfigError(ValueError):
    pass


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _as_grid(key, v):
    if _is_num(v):
        return [float(v)]
    if isinstance(v, list) and v and all(_is_num(e) for e in v):
        return [float(e) for e in v]
    raise ConfigError(f"{key}: expected a number or a non-empty array of numbers")


def _as_int_grid(key, v):
    if isinstance(v, int) and not isinstance(v, bool):
        return [v]
    if isinstance(v, list) and v and all(
        isinstance(e, int) and not isinstance(e, bool) for e in v
    ):
        return list(v)
    raise ConfigError(f"{key}: expected an integer or a non-empty array of integers")


def parse_variant(label):
    """Map a report label like "el-asnn" back to (regularizer, enhancement)."""
    s = str(label).lower()
    if s.startswith("el-"):
        pair = (s[3:], "er_moreau")
    elif s.startswith("l-"):
        pair = (s[2:], "moreau")
    else:
        pair = (s, "plain")
    if pair[0] not in models.REGULARIZERS:
        raise ConfigError(f"unknown variant label: {label!r}")
    return pair


def _check_kind(key, kind, v):
    if kind == "task":
        if v not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {v!r}")
        return v
    if kind == "str":
        if not isinstance(v, str):
            raise ConfigError(f"{key}: expected a string")
        return v
    if kind == "bool":
        if not isinstance(v, bool):
            raise ConfigError(f"{key}: expected true/false")
        return v
    if kind == "int":
        if not isinstance(v, int) or isinstance(v, bool):
            raise ConfigError(f"{key}: expected an integer")
        return v
    if kind == "num":
        if not _is_num(v):
            raise ConfigError(f"{key}: expected a number")
        return float(v)
    if kind == "grid":
        return _as_grid(key, v)
    if kind == "intgrid":
        return _as_int_grid(key, v)
    if kind == "variants":
        if not isinstance(v, list) or not v:
            raise ConfigError("variants: expected a non-empty array of labels")
        return [variant_label(*parse_variant(e)) for e in v]
    raise AssertionError(kind)


def validate_config(raw):
    """Check the flat schema; returns a normalized copy.  Rejects unknown keys."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    if "task" not in raw:
        raise ConfigError("config needs a task")
    task = _check_kind("task", "task", raw["task"])
    cfg = {"task": task}
    for key, value in raw.items():
        if key == "task":
            continue
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key: {key!r}")
        allowed, kind = _SCHEMA[key]
        if task not in allowed:
            raise ConfigError(f"{key!r} does not apply to task {task!r}")
        cfg[key] = _check_kind(key, kind, value)
    if "regularizer" in cfg or "enhancement" in cfg:
        if "variants" in cfg:
            raise ConfigError("give either variants or regularizer/enhancement")
        if not ("regularizer" in cfg and "enhancement" in cfg):
            raise ConfigError("regularizer and enhancement go together")
        cfg["variants"] = [
            variant_label(cfg.pop("regularizer"), cfg.pop("enhancement"))
        ]
    return cfg


def resolve_config(cfg, command):
    """Fill defaults; validate variant/task pairing and convexity up front."""
    task = cfg["task"]
    out = dict(cfg)
    image_task = task in ("denoise", "cs")
    if "variants" not in out:
        if command == "run":
            raise ConfigError("run needs regularizer/enhancement or one variant")
        out["variants"] = [variant_label(r, e) for r, e in _DEFAULT_VARIANTS[task]]
    pairs = [parse_variant(s) for s in out["variants"]]
    wanted = {"dvtv", "stv", "dstv"} if image_task else {"nn", "asnn"}
    for reg, enh in pairs:
        if reg not in wanted:
            raise ConfigError(f"regularizer {reg!r} does not apply to {task!r}")
        if (reg, enh) not in models._VALID:
            raise ConfigError(f"unsupported combination: {reg} + {enh}")
    th0, rh0 = _DEFAULT_THETA_RHO[task]
    out.setdefault("theta", [th0])
    out.setdefault("rho", [rh0])
    # theta applies to the Moreau variants; the relaxed variants tie their
    # theta to rho unless theta_er overrides it, which must keep theta <= rho
    if "theta_er" in out and any(e == "er_moreau" for _, e in pairs):
        for rh in out["rho"]:
            if out["theta_er"] > rh:
                raise ConfigError(
                    f"theta_er={out['theta_er']:g} exceeds rho={rh:g}: "
                    "overall convexity would fail"
                )
    if image_task:
        out.setdefault("mu", [0.1] if command == "run" else list(tasks.MU_GRID))
        out.setdefault("w", 3)
        out.setdefault("overlap", True)
        out.setdefault("sigma_noise", 0.1)
        out.setdefault("n", 32)
        out.setdefault("n_regions", 5)
        out.setdefault("eps_stop", 1e-3)
        out.setdefault("max_iters", 20000)
        if task == "cs":
            out.setdefault("sampling", 0.4)
    else:
        out.setdefault("mu", [1.0])
        out.setdefault(
            "lam1", [1.0] if command == "run" else list(tasks.LAM1_GRID)
        )
        out.setdefault("p_noise", 0.1)
        out.setdefault("shift", [0, 1, 2] if command == "compare" else [0])
        out.setdefault("eps_stop", 1e-5)
        out.setdefault("max_iters", 30000)
        for s in out["shift"]:
            if s not in (0, 1, 2):
                raise ConfigError("shift must lie in {0, 1, 2}")
    out.setdefault("seed", 0)
    out.setdefault("out", "runs")
    if command == "run":
        for key in ("mu", "theta", "rho", "lam1", "shift"):
            if key in out and len(out[key]) != 1:
                raise ConfigError(f"run takes a single {key}, not a grid")
        if len(out["variants"]) != 1:
            raise ConfigError("run takes a single variant")
    # convexity screen: mirrors the model builder so bad configs fail fast
    if any(e == "er_moreau" for _, e in pairs):
        for rh in out["rho"]:
            if rh <= 0:
                raise ConfigError("the relaxed variants need rho > 0")
    if any(e == "moreau" for _, e in pairs):
        for th in out["theta"]:
            if th < 0:
                raise ConfigError("theta must be nonnegative")
    return out


def config_hash(resolved):
    """Eight hex digits identifying the config family (seed and out excluded)."""
    stripped = {
        k: v for k, v in resolved.items() if k not in ("seed", "out")
    }
    blob = json.dumps(stripped, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:8]


def _run_dir(resolved):
    name = f"{resolved['task']}-{config_hash(resolved)}-s{resolved['seed']}"
    return os.path.join(resolved["out"], name)


def _load_image(resolved):
    if "image" in resolved:
        return tasks.read_ppm(resolved["image"])
    return tasks.synth_piecewise_image(
        resolved["n"], resolved["n_regions"], resolved["seed"]
    )


def _collect_reports(resolved, command, jobs, trace_dir, keep):
    task = resolved["task"]
    variants = tuple(parse_variant(s) for s in resolved["variants"])
    theta_er = resolved.get("theta_er")
    reports = []
    for theta in resolved["theta"]:
        for rho in resolved["rho"]:
            if task == "rpca":
                for shift in resolved["shift"]:
                    reports += tasks.run_rpca(
                        shift,
                        variants=variants,
                        lam1_values=resolved["lam1"],
                        mu=resolved["mu"][0],
                        p_noise=resolved["p_noise"],
                        seed=resolved["seed"],
                        theta=theta,
                        rho=rho,
                        theta_er=theta_er,
                        eps_stop=resolved["eps_stop"],
                        max_iters=resolved["max_iters"],
                        jobs=jobs,
                        keep_estimates=keep,
                        trace_dir=trace_dir,
                    )
                continue
            image = _load_image(resolved)
            common = dict(
                variants=variants,
                mu_values=resolved["mu"],
                sigma_noise=resolved["sigma_noise"],
                seed=resolved["seed"],
                theta=theta,
                rho=rho,
                theta_er=theta_er,
                w=resolved["w"],
                overlap=resolved["overlap"],
                eps_stop=resolved["eps_stop"],
                max_iters=resolved["max_iters"],
                jobs=jobs,
                keep_estimates=keep,
                trace_dir=trace_dir,
            )
            if task == "denoise":
                reports += tasks.run_denoise(image, **common)
            else:
                reports += tasks.run_cs(
                    image, sampling=resolved["sampling"], **common
                )
    return reports


def _classify_error(message):
    name = message.split(":", 1)[0]
    if name == "SolverDivergenceError":
        return EXIT_DIVERGED
    if name in (
        "OSError",
        "IOError",
        "FileNotFoundError",
        "PermissionError",
        "IsADirectoryError",
        "NotADirectoryError",
    ):
        return EXIT_IO
    return EXIT_CONFIG


def _write_common(run_dir, resolved, reports):
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.json"), "w") as fh:
        json.dump(resolved, fh, indent=1, sort_keys=True)
        fh.write("\n")
    tasks.write_reports_json(os.path.join(run_dir, "reports.json"), reports)
    tasks.write_reports_csv(os.path.join(run_dir, "reports.csv"), reports)


def _write_run_images(run_dir, resolved, rep):
    task = resolved["task"]
    est = np.asarray(rep.estimate)
    if task == "rpca":
        m = 32
        n = 13 if resolved["shift"][0] == 2 else 25
        low = est.reshape((m, n), order="F")
        tasks.write_ppm(
            os.path.join(run_dir, "lowrank.ppm"), tasks.matrix_to_image(low)
        )
        sp = np.asarray(rep.estimate_sparse).reshape((m, n), order="F")
        tasks.write_ppm(
            os.path.join(run_dir, "sparse.ppm"), tasks.matrix_to_image(sp)
        )
        return
    image = _load_image(resolved)
    n = image.width
    out = linops.Image(n, n, 3, est)
    tasks.write_ppm(os.path.join(run_dir, "estimate.ppm"), out)
    tasks.write_ppm(os.path.join(run_dir, "original.ppm"), image)
    if task == "denoise":
        phi = linops.identity_op(3 * n * n)
        y = tasks.degrade(image.data, phi, resolved["sigma_noise"], resolved["seed"])
        tasks.write_ppm(
            os.path.join(run_dir, "observation.ppm"), linops.Image(n, n, 3, y)
        )


def cmd_run(resolved, jobs, trace):
    run_dir = _run_dir(resolved)
    trace_dir = os.path.join(run_dir, "trace") if trace else None
    if trace_dir:
        os.makedirs(trace_dir, exist_ok=True)
    reports = _collect_reports(resolved, "run", jobs, trace_dir, keep=True)
    rep = reports[0]
    if rep.error:
        print(f"error: {rep.error}", file=sys.stderr)
        return _classify_error(rep.error)
    _write_common(run_dir, resolved, reports)
    _write_run_images(run_dir, resolved, rep)
    print(f"{rep.task} {rep.variant}: psnr {rep.psnr_db:.2f} dB, "
          f"{rep.iterations} iterations -> {run_dir}")
    return EXIT_OK


def cmd_sweep(resolved, jobs, trace):
    run_dir = _run_dir(resolved)
    trace_dir = os.path.join(run_dir, "trace") if trace else None
    if trace_dir:
        os.makedirs(trace_dir, exist_ok=True)
    reports = _collect_reports(resolved, "sweep", jobs, trace_dir, keep=False)
    _write_common(run_dir, resolved, reports)
    tasks.write_summary_csv(os.path.join(run_dir, "summary.csv"), reports)
    best = tasks.max_psnr_summary(reports)
    for (task, variant), rep in sorted(best.items()):
        print(f"{task} {variant:8s} max psnr {rep.psnr_db:6.2f} dB")
    failed = [r for r in reports if r.error]
    if failed:
        print(f"{len(failed)} of {len(reports)} grid points failed", file=sys.stderr)
    print(f"-> {run_dir}")
    return EXIT_OK


def cmd_compare(resolved, jobs, trace):
    run_dir = _run_dir(resolved)
    trace_dir = os.path.join(run_dir, "trace") if trace else None
    if trace_dir:
        os.makedirs(trace_dir, exist_ok=True)
    reports = _collect_reports(resolved, "compare", jobs, trace_dir, keep=False)
    _write_common(run_dir, resolved, reports)
    best = tasks.max_psnr_summary(reports)
    lines = []
    if resolved["task"] == "rpca":
        shifts = resolved["shift"]
        lines.append("variant," + ",".join(f"shift{s}" for s in shifts))
        for label in resolved["variants"]:
            cells = []
            for s in shifts:
                rep = best.get((f"rpca-shift{s}", label))
                cells.append("" if rep is None else f"{rep.psnr_db:.2f}")
            lines.append(label.upper() + "," + ",".join(cells))
    else:
        lines.append("variant,psnr_db,best_mu")
        task = resolved["task"]
        for label in resolved["variants"]:
            rep = best.get((task, label))
            if rep is None:
                lines.append(label.upper() + ",,")
            else:
                lines.append(f"{label.upper()},{rep.psnr_db:.2f},{rep.mu:g}")
    table = "\n".join(lines) + "\n"
    with open(os.path.join(run_dir, "compare.csv"), "w") as fh:
        fh.write(table)
    print(table, end="")
    print(f"-> {run_dir}")
    return EXIT_OK


# -- self tests ----------------------------------------------------------------

def _adjoint_ok(op, rng, tol=1e-8):
    x = rng.standard_normal(op.in_dim)
    y = rng.standard_normal(op.out_dim)
    lhs = float(np.dot(op.forward(x), y))
    rhs = float(np.dot(x, op.adjoint(y)))
    scale = max(1.0, abs(lhs), abs(rhs))
    return abs(lhs - rhs) / scale <= tol


def _check_adjoints(rng):
    ops = [
        linops.identity_op(17),
        linops.scaled_identity_op(9, -2.5),
        linops.diag_op(rng.standard_normal(11)),
        linops.make_diff_d0(12),
        linops.make_dvh(6),
        linops.make_color_decorrelation(5),
        linops.make_patch_expansion(6, 3, False),
        linops.make_patch_expansion(6, 3, True),
        linops.make_grad_patch_permutation(6, 3, 3, True),
        linops.make_dft_pairing(8, 5),
        linops.make_sensing(16, 0.5, seed=3),
        linops.make_sum_pair(10),
    ]
    ops.append(linops.compose(linops.make_dvh(6), linops.identity_op(36)))
    ops.append(linops.stack(linops.identity_op(7), linops.scaled_identity_op(7, 2.0)))
    ops.append(linops.block_diag(linops.make_diff_d0(5), linops.identity_op(4)))
    bad = [op.tag for op in ops if not all(_adjoint_ok(op, rng) for _ in range(5))]
    return bad


def _check_prox(rng):
    bad = []
    for _ in range(20):
        x = rng.standard_normal(6)
        y = rng.standard_normal(6)
        for name, fn in (
            ("l1", lambda u: prox.prox_l1(u, 0.7)),
            ("l2", lambda u: prox.prox_l2(u, 0.7)),
            ("linf", lambda u: prox.prox_linf(u, 0.7)),
            ("l21", lambda u: prox.prox_l21_blocks(u, 0.7, 2)),
        ):
            if np.linalg.norm(fn(x) - fn(y)) > np.linalg.norm(x - y) + 1e-10:
                bad.append(f"{name} expansive")
        p = prox.project_l1_ball(x, 1.0)
        if np.abs(p).sum() > 1.0 + 1e-10:
            bad.append("l1-ball infeasible")
        if np.linalg.norm(prox.project_l1_ball(p, 1.0) - p) > 1e-10:
            bad.append("l1-ball not idempotent")
        b = prox.project_box(x, 0.0, 1.0)
        if b.min() < -1e-12 or b.max() > 1 + 1e-12:
            bad.append("box infeasible")
        u, xi = prox.project_epi_l2(x[:5], float(x[5]), 1.0)
        if np.linalg.norm(u) > xi + 1e-8:
            bad.append("epi-l2 infeasible")
        u2, xi2 = prox.project_epi_l1(x[:5], float(x[5]))
        if np.abs(u2).sum() > xi2 + 1e-8:
            bad.append("epi-l1 infeasible")
    return sorted(set(bad))


def _check_convexity(rng):
    bad = []
    try:
        models.VariantConfig(
            regularizer="stv", enhancement="er_moreau",
            mu=0.3, theta=2.0, rho=1.0, n=6, w=3, overlap=True,
        )
        bad.append("theta > rho accepted")
    except ValueError:
        pass
    cfg = models.VariantConfig(
        regularizer="stv", enhancement="er_moreau",
        mu=0.3, theta=1.0, rho=1.0, n=8, w=3, overlap=True,
    )
    img = tasks.synth_piecewise_image(8, 3, seed=1)
    phi = linops.identity_op(img.data.size)

    def phase1(base):
        sig, tau = solver.default_steps(base)
        scfg = solver.SolverConfig(sigma=sig, tau=tau, eps_stop=1e-4, max_iters=5000)
        x, _ = solver.solve(base, scfg)
        return x

    ref = models.compute_reference(cfg, phi, img.data, cfg.rho, phase1)
    spec = models.build_model(cfg, phi, img.data, z_R=ref)
    verdict = solver.check_overall_convexity(spec)
    if not verdict["ok"]:
        bad.append(f"lambda_min {verdict['lambda_min']:.3e} < 0")
    return bad


def cmd_check():
    rng = np.random.default_rng(2024)
    failures = 0
    for name, fn in (
        ("operator adjoints", lambda: _check_adjoints(rng)),
        ("prox properties", lambda: _check_prox(rng)),
        ("overall convexity", lambda: _check_convexity(rng)),
    ):
        bad = fn()
        if bad:
            failures += 1
            print(f"FAIL {name}: {', '.join(str(b) for b in bad)}")
        else:
            print(f"PASS {name}")
    return EXIT_OK if failures == 0 else EXIT_CONFIG


def build_parser():
    parser = argparse.ArgumentParser(
        prog="epimoreau",
        description="matrix-free solver for Moreau-enhanced multilayered "
        "regularization: denoising, compressed sensing, robust PCA",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "solve one configuration"),
        ("sweep", "expand parameter grids and summarize maximum PSNR"),
        ("compare", "run several variants on one observation"),
        ("check", "run the adjoint/prox/convexity self-tests"),
    ):
        p = sub.add_parser(name, help=help_text)
        if name != "check":
            p.add_argument("--config", required=True, help="JSON config path")
            p.add_argument("--jobs", type=int, default=None,
                           help="parallel grid points (default: all cores)")
            p.add_argument("--out", default=None, help="output root override")
            p.add_argument("--seed", type=int, default=None, help="seed override")
            p.add_argument("--trace", action="store_true",
                           help="write per-iteration CSV traces")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "check":
        return cmd_check()
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = validate_config(raw)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be nonnegative")
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["out"] = args.out
        resolved = resolve_config(cfg, args.command)
        if "image" in resolved:
            # fail before any solver work if the input image is unreadable
            _load_image(resolved)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        if args.command == "run":
            return cmd_run(resolved, args.jobs, args.trace)
        if args.command == "sweep":
            return cmd_sweep(resolved, args.jobs, args.trace)
        return cmd_compare(resolved, args.jobs, args.trace)
    except solver.SolverDivergenceError as exc:
        print(f"solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
