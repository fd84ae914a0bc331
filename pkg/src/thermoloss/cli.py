"""Command-line surface binding the library modules into reproducible runs.

Every command emits a JSON document carrying the tool version, the
command name, the effective configuration (file values overridden by
flags), and the result, so any output is reconstructible from itself.
Outputs are bitwise deterministic for fixed inputs and seed: no
timestamps, fixed key order, shortest-round-trip float formatting.

Exit codes: 0 success, 2 input or usage error, 3 solver non-convergence.

Point-measure files are JSON: either a bare [[x, ...], ...] list or
{"points": [[x, ...], ...]}; one-dimensional lists are read as scalar
points. Landmark, window-collection, manifest, model, profile, and
problem-directory formats are defined in their owning modules.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .adapter import (
    AdaptTrainConfig,
    adapter_apply,
    load_adapter,
    save_adapter,
    train_adapter,
)
from .composite import (
    DEFAULT_LAMBDA_R,
    DEFAULT_LAMBDA_W,
    DEFAULT_MSE_DIM_NORM,
    Problem,
    config_from_overrides,
    load_problem,
    rgb2thermal_loss,
    toy_thermalize,
)
from .landmarks import (
    LandmarkSet,
    NllConfig,
    WindowGeometry,
    WindowPlanConfig,
    gaussian_nll,
    landmarks_from_json_dict,
    load_landmarks,
    plan_windows,
    pool_predictions,
)
from .metrics import DEFAULT_EYE_INDICES, evaluate_dataset, load_manifest
from .ot import SinkhornConfig, exact_transport, sinkhorn_transport
from .patches import PatchConfig, patch_w_loss
from .pgm import load_pgm_image, load_pgm_mask, save_pgm_image
from .regions import builtin_profile, load_profile_file, region_reg

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_CONVERGENCE = 3


class CliInputError(Exception):
    pass


def _load_points(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    if isinstance(raw, dict):
        raw = raw["points"]
    pts = np.asarray(raw, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.size == 0:
        raise CliInputError(f"{path}: expected a non-empty 2-d point list")
    return pts


def _resolve_profile(name_or_path: str):
    if name_or_path in ("cold", "warm"):
        return builtin_profile(name_or_path)
    return load_profile_file(name_or_path)


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _doc(command: str, config: dict, result: dict) -> dict:
    return {
        "tool": "thermoloss",
        "version": __version__,
        "command": command,
        "config": config,
        "result": result,
    }


class _Resolver:
    """Merges flag values, config-file values, and builtin defaults.

    Flags parse with default None so an explicitly passed flag always
    wins; missing flags fall back to the --config file, then to the
    builtin default.
    """

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file_cfg = {}
        if getattr(args, "config", None):
            try:
                with open(args.config, "r", encoding="utf-8") as f:
                    self.file_cfg = json.load(f)
            except (OSError, json.JSONDecodeError) as exc:
                raise CliInputError(f"cannot read config file: {exc}") from exc
            if not isinstance(self.file_cfg, dict):
                raise CliInputError("config file must hold a JSON object")

    def get(self, name: str, default):
        flag = getattr(self.args, name, None)
        if flag is not None:
            return flag
        if name in self.file_cfg:
            return self.file_cfg[name]
        return default


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with default values for this command's flags")
    parser.add_argument("--out", help="write the JSON document here instead of stdout")


def _add_sinkhorn_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda-e", type=float, dest="lambda_e")
    parser.add_argument("--tol", type=float)
    parser.add_argument("--max-iters", type=int, dest="max_iters")
    parser.add_argument("--anneal", action=argparse.BooleanOptionalAction, default=None)


def _sinkhorn_cfg(r: _Resolver) -> SinkhornConfig:
    return SinkhornConfig(
        lambda_e=float(r.get("lambda_e", 1e-6)),
        tol=float(r.get("tol", 1e-9)),
        max_iters=int(r.get("max_iters", 10_000)),
        anneal=bool(r.get("anneal", True)),
    )


def _cmd_ot(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    mu = _load_points(args.mu)
    nu = _load_points(args.nu)
    if args.solver == "exact":
        res = exact_transport(mu, nu)
        doc = _doc(
            "ot exact",
            {"mu": args.mu, "nu": args.nu},
            {
                "cost": res.cost,
                "assignment": res.assignment.tolist(),
                "plan": res.plan.tolist(),
            },
        )
        _emit(doc, r.get("out", None))
        return EXIT_OK
    cfg = _sinkhorn_cfg(r)
    res = sinkhorn_transport(mu, nu, cfg)
    doc = _doc(
        "ot sinkhorn",
        {
            "mu": args.mu,
            "nu": args.nu,
            "lambda_e": cfg.lambda_e,
            "tol": cfg.tol,
            "max_iters": cfg.max_iters,
            "anneal": cfg.anneal,
        },
        {
            "cost": res.cost,
            "transport_cost": res.transport_cost,
            "converged": res.converged,
            "iterations": res.iterations,
            "max_violation": res.max_violation,
            "stage_costs": res.stage_costs,
            "plan": res.plan.tolist(),
        },
    )
    _emit(doc, r.get("out", None))
    return EXIT_OK if res.converged else EXIT_NO_CONVERGENCE


def _patch_cfg(r: _Resolver, seed) -> PatchConfig:
    return PatchConfig(
        patch_size=int(r.get("patch_size", 8)),
        stride=int(r.get("stride", 4)),
        scales=int(r.get("scales", 5)),
        scale_factor=float(r.get("scale_factor", 0.5)),
        max_patches_per_side=int(r.get("max_patches", 1024)),
        seed=int(seed),
    )


def _scale_reports(result) -> list[dict]:
    return [
        {
            "scale": s.scale,
            "gen_count": s.gen_count,
            "real_count": s.real_count,
            "used": s.used,
            "cost": s.cost,
            "converged": s.converged,
            "skipped": s.skipped,
        }
        for s in result.scales
    ]


def _cmd_loss_patch_w(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    masks = args.gen_mask or []
    if masks and len(masks) != len(args.gen):
        raise CliInputError("--gen-mask count must match --gen count (use - for none)")
    gen = []
    for i, path in enumerate(args.gen):
        img = load_pgm_image(path)
        mask = None
        if masks and masks[i] != "-":
            mask = load_pgm_mask(masks[i])
        gen.append((img, mask))
    real = [load_pgm_image(p) for p in args.real]
    seed = int(r.get("seed", 0))
    pcfg = _patch_cfg(r, seed)
    scfg = _sinkhorn_cfg(r)
    use_exact = bool(r.get("exact", False))
    with_grads = bool(r.get("with_grads", False))
    res = patch_w_loss(gen, real, pcfg, scfg, want_grads=with_grads, use_exact=use_exact)
    result = {
        "value": res.value,
        "scales": _scale_reports(res),
        "skipped_scales": res.skipped_scales,
        "converged": res.converged,
    }
    if with_grads:
        result["grads"] = [g.tolist() for g in res.grads]
    doc = _doc(
        "loss patch-w",
        {
            "gen": list(args.gen),
            "gen_mask": masks,
            "real": list(args.real),
            "seed": seed,
            "patch_size": pcfg.patch_size,
            "stride": pcfg.stride,
            "scales": pcfg.scales,
            "scale_factor": pcfg.scale_factor,
            "max_patches": pcfg.max_patches_per_side,
            "lambda_e": scfg.lambda_e,
            "tol": scfg.tol,
            "max_iters": scfg.max_iters,
            "anneal": scfg.anneal,
            "exact": use_exact,
        },
        result,
    )
    _emit(doc, r.get("out", None))
    return EXIT_OK if res.converged else EXIT_NO_CONVERGENCE


def _cmd_loss_region(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    img = load_pgm_image(args.image)
    mask = load_pgm_mask(args.mask)
    profile_name = r.get("profile", "cold")
    profile = _resolve_profile(profile_name)
    include_bg = bool(r.get("include_background", True))
    with_grads = bool(r.get("with_grads", False))
    value, grads = region_reg(img, mask, profile, include_bg)
    result = {"value": value}
    if with_grads:
        result["grads"] = grads.tolist()
    doc = _doc(
        "loss region",
        {
            "image": args.image,
            "mask": args.mask,
            "profile": profile_name,
            "include_background": include_bg,
        },
        result,
    )
    _emit(doc, r.get("out", None))
    return EXIT_OK


def _composite_cfg(r: _Resolver, problem: Problem):
    overrides = dict(problem.overrides)
    for key in ("lambda_w", "lambda_r", "mse_dim_norm", "seed", "region_include_background"):
        val = r.get(key, None)
        if val is not None:
            overrides[key] = val
    profile = r.get("profile", None)
    return config_from_overrides(overrides, profile_name=profile)


def _fd_grad_check(problem: Problem, cfg, step: float) -> float:
    """Max relative error of analytic vs central-difference pixel grads."""
    base = rgb2thermal_loss(problem.paired, problem.unpaired, problem.real, cfg)

    def total_at(paired, unpaired) -> float:
        return rgb2thermal_loss(paired, unpaired, problem.real, cfg, want_grads=False).value

    worst = 0.0
    from .images import ThermalImage

    for idx, (gen, tgt) in enumerate(problem.paired):
        analytic = base.paired_grads[idx]
        v = gen.values
        for pos in np.ndindex(v.shape):
            up, dn = v.copy(), v.copy()
            up[pos] += step
            dn[pos] -= step
            paired_up = list(problem.paired)
            paired_up[idx] = (ThermalImage(np.clip(up, 0, 1)), tgt)
            paired_dn = list(problem.paired)
            paired_dn[idx] = (ThermalImage(np.clip(dn, 0, 1)), tgt)
            fd = (total_at(paired_up, problem.unpaired) - total_at(paired_dn, problem.unpaired)) / (2 * step)
            denom = max(abs(fd), abs(analytic[pos]), 1e-12)
            worst = max(worst, abs(fd - analytic[pos]) / denom)
    for idx, (gen, mask) in enumerate(problem.unpaired):
        analytic = base.unpaired_grads[idx]
        v = gen.values
        for pos in np.ndindex(v.shape):
            up, dn = v.copy(), v.copy()
            up[pos] += step
            dn[pos] -= step
            un_up = list(problem.unpaired)
            un_up[idx] = (ThermalImage(np.clip(up, 0, 1)), mask)
            un_dn = list(problem.unpaired)
            un_dn[idx] = (ThermalImage(np.clip(dn, 0, 1)), mask)
            fd = (total_at(problem.paired, un_up) - total_at(problem.paired, un_dn)) / (2 * step)
            denom = max(abs(fd), abs(analytic[pos]), 1e-12)
            worst = max(worst, abs(fd - analytic[pos]) / denom)
    return worst


def _cmd_loss_eval(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    problem = load_problem(args.problem)
    cfg = _composite_cfg(r, problem)
    res = rgb2thermal_loss(problem.paired, problem.unpaired, problem.real, cfg)
    result = {
        "total": res.value,
        "breakdown": dict(res.breakdown),
        "n_paired": len(problem.paired),
        "n_unpaired": len(problem.unpaired),
        "n_real": len(problem.real),
    }
    converged = True
    if res.patch_report is not None:
        result["patch_scales"] = _scale_reports(res.patch_report)
        converged = res.patch_report.converged
    if bool(r.get("grad_check", False)):
        step = float(r.get("grad_step", 1e-4))
        result["grad_check_max_rel_err"] = _fd_grad_check(problem, cfg, step)
    doc = _doc(
        "loss eval",
        {
            "problem": args.problem,
            "profile": cfg.profile.name,
            "lambda_w": cfg.lambda_w,
            "lambda_r": cfg.lambda_r,
            "mse_dim_norm": cfg.mse_dim_norm,
            "region_include_background": cfg.region_include_background,
            "seed": cfg.patch_cfg.seed,
            "patch_size": cfg.patch_cfg.patch_size,
            "stride": cfg.patch_cfg.stride,
            "scales": cfg.patch_cfg.scales,
            "scale_factor": cfg.patch_cfg.scale_factor,
            "max_patches": cfg.patch_cfg.max_patches_per_side,
            "lambda_e": cfg.sink_cfg.lambda_e,
            "tol": cfg.sink_cfg.tol,
            "max_iters": cfg.sink_cfg.max_iters,
        },
        result,
    )
    _emit(doc, r.get("out", None))
    return EXIT_OK if converged else EXIT_NO_CONVERGENCE


def _cmd_toy_thermalize(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    problem = load_problem(args.problem)
    cfg = _composite_cfg(r, problem)
    steps = int(r.get("steps", 100))
    lr = float(r.get("lr", 1.0))
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    run = toy_thermalize(problem, cfg, steps, lr)

    for name, img in zip(problem.paired_names, run.paired_gen):
        save_pgm_image(os.path.join(out_dir, f"{name}_gen.pgm"), img)
    for name, img in zip(problem.unpaired_names, run.unpaired_gen):
        save_pgm_image(os.path.join(out_dir, f"{name}.pgm"), img)
    trace_path = os.path.join(out_dir, "trace.csv")
    with open(trace_path, "w", encoding="utf-8") as f:
        f.write("step,loss\n")
        for i, v in enumerate(run.trace):
            f.write(f"{i},{v!r}\n")

    doc = _doc(
        "toy-thermalize",
        {
            "problem": args.problem,
            "profile": cfg.profile.name,
            "lambda_w": cfg.lambda_w,
            "lambda_r": cfg.lambda_r,
            "mse_dim_norm": cfg.mse_dim_norm,
            "seed": cfg.patch_cfg.seed,
            "steps": steps,
            "lr": lr,
            "out_dir": out_dir,
        },
        {
            "initial_loss": run.trace[0],
            "final_loss": run.trace[-1],
            "steps_run": len(run.trace) - 1,
            "trace_file": trace_path,
        },
    )
    _emit(doc, r.get("out", None) or os.path.join(out_dir, "summary.json"))
    return EXIT_OK


def _cmd_landmarks_plan(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    cfg = WindowPlanConfig(
        window=int(r.get("window", 224)),
        stride=int(r.get("stride", 20)),
        scale_factor=float(r.get("scale_factor", 0.75)),
        min_dim_stop=int(r.get("min_dim_stop", 224)),
    )
    plans = plan_windows(args.height, args.width, cfg)
    doc = _doc(
        "landmarks plan",
        {
            "height": args.height,
            "width": args.width,
            "window": cfg.window,
            "stride": cfg.stride,
            "scale_factor": cfg.scale_factor,
            "min_dim_stop": cfg.min_dim_stop,
        },
        {"n_windows": len(plans), "windows": [g.to_json_dict() for g in plans]},
    )
    _emit(doc, r.get("out", None))
    return EXIT_OK


def _cmd_landmarks_pool(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    with open(args.windows, "r", encoding="utf-8") as f:
        raw = json.load(f)
    image_h, image_w = int(raw["image_h"]), int(raw["image_w"])
    per_window = []
    for w in raw["windows"]:
        geom = WindowGeometry(
            scale=float(w["scale"]),
            top=int(w["top"]),
            left=int(w["left"]),
            win_h=int(w["win_h"]),
            win_w=int(w["win_w"]),
            image_h=image_h,
            image_w=image_w,
        )
        lms = LandmarkSet(
            np.asarray(w["points"], dtype=np.float64),
            np.asarray(w["sigmas"], dtype=np.float64),
        )
        per_window.append((geom, lms))
    pooled = pool_predictions(per_window)
    doc = _doc(
        "landmarks pool",
        {"windows": args.windows, "image_h": image_h, "image_w": image_w, "n_windows": len(per_window)},
        {"pooled": pooled.to_json_dict()},
    )
    _emit(doc, r.get("out", None))
    return EXIT_OK


def _cmd_landmarks_nll(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    mu = load_landmarks(args.mu)
    gt = load_landmarks(args.gt)
    with open(args.sigma2, "r", encoding="utf-8") as f:
        sigma2 = np.asarray(json.load(f), dtype=np.float64)
    cfg = NllConfig(epsilon=float(r.get("epsilon", 1e-6)))
    value, grad_mu, grad_sigma2 = gaussian_nll(mu, sigma2, gt, cfg)
    doc = _doc(
        "landmarks nll",
        {"mu": args.mu, "gt": args.gt, "sigma2": args.sigma2, "epsilon": cfg.epsilon},
        {
            "value": value,
            "grad_mu": grad_mu.tolist(),
            "grad_sigma2": grad_sigma2.tolist(),
        },
    )
    _emit(doc, r.get("out", None))
    return EXIT_OK


def _cmd_adapt_train(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    with open(args.pairs, "r", encoding="utf-8") as f:
        raw = json.load(f)
    samples = raw["samples"] if isinstance(raw, dict) else raw
    if not samples:
        raise CliInputError("no training samples")
    pred = np.asarray([s["pred"] for s in samples], dtype=np.float64)
    resize = np.asarray([s["resize"] for s in samples], dtype=np.float64)
    gt = np.asarray([s["gt"] for s in samples], dtype=np.float64)
    cfg = AdaptTrainConfig(
        epochs=int(r.get("epochs", 2000)),
        base_lr=float(r.get("lr", 0.002)),
        batch=int(r.get("batch", 64)),
        hidden=int(r.get("hidden", 256)),
        aug_rotation_max=float(r.get("rot_max", 45.0)),
        aug_shear_max=float(r.get("shear_max", 0.2)),
        seed=int(r.get("seed", 0)),
    )
    mlp, trace = train_adapter(pred, resize, gt, cfg)
    save_adapter(args.model_out, mlp, seed=cfg.seed, config=cfg)
    doc = _doc(
        "adapt train",
        {
            "pairs": args.pairs,
            "model_out": args.model_out,
            "epochs": cfg.epochs,
            "lr": cfg.base_lr,
            "batch": cfg.batch,
            "hidden": cfg.hidden,
            "rot_max": cfg.aug_rotation_max,
            "shear_max": cfg.aug_shear_max,
            "seed": cfg.seed,
        },
        {
            "widths": list(mlp.widths),
            "param_count": mlp.param_count,
            "n_samples": int(pred.shape[0]),
            "final_epoch_loss": trace[-1] if trace else None,
            "trace": trace,
        },
    )
    _emit(doc, r.get("out", None))
    return EXIT_OK


def _cmd_adapt_apply(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    mlp = load_adapter(args.model)
    pred = load_landmarks(args.pred)
    out_points = adapter_apply(mlp, pred.points, args.resize)
    adapted = LandmarkSet(out_points)
    doc = _doc(
        "adapt apply",
        {"model": args.model, "pred": args.pred, "resize": args.resize},
        {"adapted": adapted.to_json_dict()},
    )
    _emit(doc, r.get("out", None))
    return EXIT_OK


def _cmd_eval_nme(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    records = load_manifest(args.manifest)
    sigma_bar = r.get("sigma_bar", None)
    mode = r.get("mode", "wh")
    eye_i = int(r.get("eye_i", DEFAULT_EYE_INDICES[0]))
    eye_j = int(r.get("eye_j", DEFAULT_EYE_INDICES[1]))
    use_l1 = bool(r.get("l1", False))
    report = evaluate_dataset(
        records,
        sigma_bar=None if sigma_bar is None else float(sigma_bar),
        mode=mode,
        eye_indices=(eye_i, eye_j),
        use_l1=use_l1,
    )
    doc = _doc(
        "eval nme",
        {
            "manifest": args.manifest,
            "sigma_bar": None if sigma_bar is None else float(sigma_bar),
            "mode": mode,
            "eye_indices": [eye_i, eye_j],
            "l1": use_l1,
        },
        report,
    )
    _emit(doc, r.get("out", None))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermoloss",
        description="Composite thermal-image losses, landmark utilities, and benchmark metrics.",
        epilog=(
            "All computation is single-threaded apart from the BLAS backing "
            "numpy; THERMOLOSS_THREADS, when set before startup, caps the "
            "BLAS thread count."
        ),
    )
    parser.add_argument("--version", action="version", version=f"thermoloss {__version__}")
    sub = parser.add_subparsers(dest="group", required=True)

    p_ot = sub.add_parser("ot", help="optimal transport between point measures")
    p_ot.add_argument("solver", choices=["exact", "sinkhorn"])
    p_ot.add_argument("--mu", required=True, help="source measure JSON")
    p_ot.add_argument("--nu", required=True, help="target measure JSON")
    _add_sinkhorn_flags(p_ot)
    _add_common(p_ot)
    p_ot.set_defaults(func=_cmd_ot)

    p_loss = sub.add_parser("loss", help="composite loss terms")
    loss_sub = p_loss.add_subparsers(dest="loss_cmd", required=True)

    p_eval = loss_sub.add_parser("eval", help="evaluate a problem bundle")
    p_eval.add_argument("--problem", required=True, help="problem directory")
    p_eval.add_argument("--profile", help="cold, warm, or a profile JSON path")
    p_eval.add_argument("--lambda-w", type=float, dest="lambda_w")
    p_eval.add_argument("--lambda-r", type=float, dest="lambda_r")
    p_eval.add_argument("--mse-dim-norm", type=int, dest="mse_dim_norm")
    p_eval.add_argument("--seed", type=int)
    p_eval.add_argument("--grad-check", action=argparse.BooleanOptionalAction, default=None, dest="grad_check")
    p_eval.add_argument("--grad-step", type=float, dest="grad_step")
    _add_common(p_eval)
    p_eval.set_defaults(func=_cmd_loss_eval)

    p_pw = loss_sub.add_parser("patch-w", help="multiscale Wasserstein patch loss")
    p_pw.add_argument("--gen", action="append", required=True, help="generated image PGM (repeatable)")
    p_pw.add_argument("--gen-mask", action="append", dest="gen_mask", help="mask PGM per --gen, or - for none")
    p_pw.add_argument("--real", action="append", required=True, help="real image PGM (repeatable)")
    p_pw.add_argument("--seed", type=int)
    p_pw.add_argument("--patch-size", type=int, dest="patch_size")
    p_pw.add_argument("--stride", type=int)
    p_pw.add_argument("--scales", type=int)
    p_pw.add_argument("--scale-factor", type=float, dest="scale_factor")
    p_pw.add_argument("--max-patches", type=int, dest="max_patches")
    p_pw.add_argument("--exact", action=argparse.BooleanOptionalAction, default=None)
    p_pw.add_argument("--with-grads", action=argparse.BooleanOptionalAction, default=None, dest="with_grads")
    _add_sinkhorn_flags(p_pw)
    _add_common(p_pw)
    p_pw.set_defaults(func=_cmd_loss_patch_w)

    p_rg = loss_sub.add_parser("region", help="region temperature regularizer")
    p_rg.add_argument("--image", required=True)
    p_rg.add_argument("--mask", required=True)
    p_rg.add_argument("--profile")
    p_rg.add_argument(
        "--include-background", action=argparse.BooleanOptionalAction, default=None, dest="include_background"
    )
    p_rg.add_argument("--with-grads", action=argparse.BooleanOptionalAction, default=None, dest="with_grads")
    _add_common(p_rg)
    p_rg.set_defaults(func=_cmd_loss_region)

    p_toy = sub.add_parser("toy-thermalize", help="projected gradient descent on a problem bundle")
    p_toy.add_argument("--problem", required=True)
    p_toy.add_argument("--steps", type=int)
    p_toy.add_argument("--lr", type=float)
    p_toy.add_argument("--seed", type=int)
    p_toy.add_argument("--profile")
    p_toy.add_argument("--lambda-w", type=float, dest="lambda_w")
    p_toy.add_argument("--lambda-r", type=float, dest="lambda_r")
    p_toy.add_argument("--mse-dim-norm", type=int, dest="mse_dim_norm")
    p_toy.add_argument("--out-dir", required=True, dest="out_dir")
    _add_common(p_toy)
    p_toy.set_defaults(func=_cmd_toy_thermalize)

    p_lm = sub.add_parser("landmarks", help="landmark objective and window utilities")
    lm_sub = p_lm.add_subparsers(dest="lm_cmd", required=True)

    p_plan = lm_sub.add_parser("plan", help="plan sliding windows over a pyramid")
    p_plan.add_argument("--height", type=int, required=True)
    p_plan.add_argument("--width", type=int, required=True)
    p_plan.add_argument("--window", type=int)
    p_plan.add_argument("--stride", type=int)
    p_plan.add_argument("--scale-factor", type=float, dest="scale_factor")
    p_plan.add_argument("--min-dim-stop", type=int, dest="min_dim_stop")
    _add_common(p_plan)
    p_plan.set_defaults(func=_cmd_landmarks_plan)

    p_pool = lm_sub.add_parser("pool", help="min-sigma pooling of window predictions")
    p_pool.add_argument("--windows", required=True, help="window collection JSON")
    _add_common(p_pool)
    p_pool.set_defaults(func=_cmd_landmarks_pool)

    p_nll = lm_sub.add_parser("nll", help="Gaussian landmark NLL with gradients")
    p_nll.add_argument("--mu", required=True, help="predicted landmarks JSON")
    p_nll.add_argument("--gt", required=True, help="ground-truth landmarks JSON")
    p_nll.add_argument("--sigma2", required=True, help="per-landmark variance JSON list")
    p_nll.add_argument("--epsilon", type=float)
    _add_common(p_nll)
    p_nll.set_defaults(func=_cmd_landmarks_nll)

    p_ad = sub.add_parser("adapt", help="landmark convention adaptation")
    ad_sub = p_ad.add_subparsers(dest="adapt_cmd", required=True)

    p_tr = ad_sub.add_parser("train", help="train the adapter on sample pairs")
    p_tr.add_argument("--pairs", required=True, help="training samples JSON")
    p_tr.add_argument("--model-out", required=True, dest="model_out")
    p_tr.add_argument("--epochs", type=int)
    p_tr.add_argument("--lr", type=float)
    p_tr.add_argument("--batch", type=int)
    p_tr.add_argument("--hidden", type=int)
    p_tr.add_argument("--rot-max", type=float, dest="rot_max")
    p_tr.add_argument("--shear-max", type=float, dest="shear_max")
    p_tr.add_argument("--seed", type=int)
    _add_common(p_tr)
    p_tr.set_defaults(func=_cmd_adapt_train)

    p_ap = ad_sub.add_parser("apply", help="apply a trained adapter")
    p_ap.add_argument("--model", required=True)
    p_ap.add_argument("--pred", required=True, help="source landmarks JSON")
    p_ap.add_argument("--resize", type=float, required=True)
    _add_common(p_ap)
    p_ap.set_defaults(func=_cmd_adapt_apply)

    p_ev = sub.add_parser("eval", help="benchmark metrics")
    ev_sub = p_ev.add_subparsers(dest="eval_cmd", required=True)

    p_nme = ev_sub.add_parser("nme", help="dataset NME and failure rate")
    p_nme.add_argument("--manifest", required=True, help="JSON-lines manifest")
    p_nme.add_argument("--sigma-bar", type=float, dest="sigma_bar")
    p_nme.add_argument("--mode", choices=["wh", "interocular"])
    p_nme.add_argument("--eye-i", type=int, dest="eye_i")
    p_nme.add_argument("--eye-j", type=int, dest="eye_j")
    p_nme.add_argument("--l1", action=argparse.BooleanOptionalAction, default=None)
    _add_common(p_nme)
    p_nme.set_defaults(func=_cmd_eval_nme)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliInputError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
