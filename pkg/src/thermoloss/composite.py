"""Composite thermalization objective and a desk-scale toy optimizer.

The objective combines a dimension-normalized supervised MSE on paired
images, the multiscale Wasserstein patch loss between generated and real
images, and the region temperature regularizer, with the weighting
conventions lambda_w = 0.01 / (scales * patch_size^2) and lambda_r = 1.
The toy optimizer runs projected gradient descent directly on the
generated pixel grids, exercising every loss and gradient path without a
network in the loop.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .images import SegmentationMask, ThermalImage
from .ot import SinkhornConfig
from .patches import PatchConfig, PatchWResult, patch_w_loss
from .pgm import load_pgm_image, load_pgm_mask
from .regions import RegionProfile, builtin_profile, load_profile_file, region_reg

# value-range normalization: 0.01 * C with C = 1/(scales * patch_size^2)
DEFAULT_LAMBDA_W = 0.01 / (5 * 8 * 8)
DEFAULT_LAMBDA_R = 1.0
DEFAULT_MSE_DIM_NORM = 256 * 256


@dataclass(frozen=True)
class LossConfig:
    profile: RegionProfile
    lambda_w: float = DEFAULT_LAMBDA_W
    lambda_r: float = DEFAULT_LAMBDA_R
    mse_dim_norm: int = DEFAULT_MSE_DIM_NORM
    region_include_background: bool = True
    patch_cfg: PatchConfig = field(default_factory=PatchConfig)
    sink_cfg: SinkhornConfig = field(default_factory=SinkhornConfig)

    def __post_init__(self):
        if self.lambda_w < 0 or self.lambda_r < 0:
            raise ValueError("loss weights must be non-negative")
        if self.mse_dim_norm < 1:
            raise ValueError("mse_dim_norm must be positive")


def paired_mse(gen: ThermalImage, target: ThermalImage, cfg: LossConfig) -> tuple[float, np.ndarray]:
    """Squared error divided by the configured dimension norm, with grads."""
    if gen.values.shape != target.values.shape:
        raise ValueError("paired images must share dims")
    diff = gen.values - target.values
    value = float((diff * diff).sum()) / cfg.mse_dim_norm
    return value, 2.0 * diff / cfg.mse_dim_norm


@dataclass(frozen=True)
class CompositeResult:
    value: float
    breakdown: dict[str, float]
    paired_grads: list[np.ndarray]
    unpaired_grads: list[np.ndarray]
    patch_report: PatchWResult | None


def rgb2thermal_loss(
    paired: list[tuple[ThermalImage, ThermalImage]],
    unpaired: list[tuple[ThermalImage, SegmentationMask]],
    real: list[ThermalImage],
    cfg: LossConfig,
    want_grads: bool = True,
) -> CompositeResult:
    """mean MSE + lambda_w * patch loss + lambda_r * mean region penalty.

    The MSE averages over paired examples, the region term over unpaired
    examples; the patch term pools patches across all unpaired generated
    images against all real images. Terms whose weight is exactly 0 are
    skipped entirely, which makes ablations bit-identical to omitting the
    term. Gradients are per-image, with the per-term batch means folded in.
    """
    if not paired and not unpaired:
        raise ValueError("need at least one paired or unpaired example")

    mse_term = 0.0
    paired_grads = []
    if paired:
        for gen, target in paired:
            v, g = paired_mse(gen, target, cfg)
            mse_term += v / len(paired)
            paired_grads.append(g / len(paired))

    patch_term = 0.0
    patch_report = None
    unpaired_grads = [np.zeros(img.values.shape) for img, _ in unpaired]
    if cfg.lambda_w != 0.0 and unpaired:
        patch_report = patch_w_loss(
            [(img, mask) for img, mask in unpaired],
            real,
            cfg.patch_cfg,
            cfg.sink_cfg,
            want_grads=want_grads,
        )
        patch_term = patch_report.value
        if want_grads:
            for i, g in enumerate(patch_report.grads):
                unpaired_grads[i] += cfg.lambda_w * g

    region_term = 0.0
    if cfg.lambda_r != 0.0 and unpaired:
        for i, (img, mask) in enumerate(unpaired):
            v, g = region_reg(img, mask, cfg.profile, cfg.region_include_background)
            region_term += v / len(unpaired)
            if want_grads:
                unpaired_grads[i] += cfg.lambda_r * g / len(unpaired)

    weighted = {
        "mse": mse_term,
        "patch_w": cfg.lambda_w * patch_term,
        "region": cfg.lambda_r * region_term,
    }
    total = weighted["mse"] + weighted["patch_w"] + weighted["region"]
    breakdown = {
        "mse": mse_term,
        "patch_w_raw": patch_term,
        "region_raw": region_term,
        "weighted_mse": weighted["mse"],
        "weighted_patch_w": weighted["patch_w"],
        "weighted_region": weighted["region"],
        "total": total,
    }
    return CompositeResult(
        value=total,
        breakdown=breakdown,
        paired_grads=paired_grads,
        unpaired_grads=unpaired_grads,
        patch_report=patch_report,
    )


@dataclass(frozen=True)
class Problem:
    """A loss problem bundle: paired (gen, target), unpaired (gen, mask),
    and real thermal images, with config overrides from its config.json."""

    paired: list[tuple[ThermalImage, ThermalImage]]
    unpaired: list[tuple[ThermalImage, SegmentationMask]]
    real: list[ThermalImage]
    paired_names: list[str]
    unpaired_names: list[str]
    overrides: dict


def load_problem(root) -> Problem:
    """Load a problem directory: paired/{name}_gen.pgm + {name}_tgt.pgm,
    unpaired/{name}.pgm + {name}_mask.pgm, real/*.pgm, config.json."""
    paired, paired_names = [], []
    pdir = os.path.join(root, "paired")
    if os.path.isdir(pdir):
        for fn in sorted(os.listdir(pdir)):
            if not fn.endswith("_gen.pgm"):
                continue
            name = fn[: -len("_gen.pgm")]
            gen = load_pgm_image(os.path.join(pdir, fn))
            tgt = load_pgm_image(os.path.join(pdir, f"{name}_tgt.pgm"))
            paired.append((gen, tgt))
            paired_names.append(name)

    unpaired, unpaired_names = [], []
    udir = os.path.join(root, "unpaired")
    if os.path.isdir(udir):
        for fn in sorted(os.listdir(udir)):
            if fn.endswith("_mask.pgm") or not fn.endswith(".pgm"):
                continue
            name = fn[: -len(".pgm")]
            img = load_pgm_image(os.path.join(udir, fn))
            mask = load_pgm_mask(os.path.join(udir, f"{name}_mask.pgm"))
            unpaired.append((img, mask))
            unpaired_names.append(name)

    real = []
    rdir = os.path.join(root, "real")
    if os.path.isdir(rdir):
        for fn in sorted(os.listdir(rdir)):
            if fn.endswith(".pgm"):
                real.append(load_pgm_image(os.path.join(rdir, fn)))

    overrides = {}
    cpath = os.path.join(root, "config.json")
    if os.path.exists(cpath):
        with open(cpath, "r", encoding="utf-8") as f:
            overrides = json.load(f)
    return Problem(paired, unpaired, real, paired_names, unpaired_names, overrides)


def config_from_overrides(overrides: dict, profile_name: str | None = None, seed: int | None = None) -> LossConfig:
    """Build a LossConfig from a problem's config.json dict.

    Recognized keys: profile (builtin name or file path), lambda_w,
    lambda_r, mse_dim_norm, region_include_background, seed, patch
    (PatchConfig fields), sinkhorn (SinkhornConfig fields). Arguments
    passed explicitly override the dict.
    """
    prof_ref = profile_name if profile_name is not None else overrides.get("profile", "cold")
    if prof_ref in ("cold", "warm"):
        profile = builtin_profile(prof_ref)
    else:
        profile = load_profile_file(prof_ref)
    patch_kwargs = dict(overrides.get("patch", {}))
    if seed is not None:
        patch_kwargs["seed"] = seed
    elif "seed" in overrides and "seed" not in patch_kwargs:
        patch_kwargs["seed"] = overrides["seed"]
    return LossConfig(
        profile=profile,
        lambda_w=float(overrides.get("lambda_w", DEFAULT_LAMBDA_W)),
        lambda_r=float(overrides.get("lambda_r", DEFAULT_LAMBDA_R)),
        mse_dim_norm=int(overrides.get("mse_dim_norm", DEFAULT_MSE_DIM_NORM)),
        region_include_background=bool(overrides.get("region_include_background", True)),
        patch_cfg=PatchConfig(**patch_kwargs),
        sink_cfg=SinkhornConfig(**overrides.get("sinkhorn", {})),
    )


class ToyRunError(RuntimeError):
    """Raised when the toy optimizer hits a non-finite loss; carries the
    loss trace collected so far."""

    def __init__(self, message: str, trace: list[float]):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class ToyRunResult:
    paired_gen: list[ThermalImage]
    unpaired_gen: list[ThermalImage]
    trace: list[float]  # initial loss followed by the loss after each step


def toy_thermalize(problem: Problem, cfg: LossConfig, steps: int, step_size: float) -> ToyRunResult:
    """Projected gradient descent on all generated pixel grids.

    Each step moves every generated image against the composite gradient
    and clips back to [0, 1]. The trace holds steps + 1 entries: the
    initial loss and the loss after each update.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    paired_gen = [gen.values.copy() for gen, _ in problem.paired]
    targets = [tgt for _, tgt in problem.paired]
    unpaired_gen = [img.values.copy() for img, _ in problem.unpaired]
    masks = [mask for _, mask in problem.unpaired]

    def evaluate(want_grads: bool) -> CompositeResult:
        return rgb2thermal_loss(
            [(ThermalImage(v), t) for v, t in zip(paired_gen, targets)],
            [(ThermalImage(v), m) for v, m in zip(unpaired_gen, masks)],
            problem.real,
            cfg,
            want_grads=want_grads,
        )

    trace: list[float] = []
    res = evaluate(want_grads=True)
    trace.append(res.value)
    if not np.isfinite(res.value):
        raise ToyRunError("non-finite initial loss", trace)
    for _ in range(steps):
        for v, g in zip(paired_gen, res.paired_grads):
            np.clip(v - step_size * g, 0.0, 1.0, out=v)
        for v, g in zip(unpaired_gen, res.unpaired_grads):
            np.clip(v - step_size * g, 0.0, 1.0, out=v)
        res = evaluate(want_grads=True)
        trace.append(res.value)
        if not np.isfinite(res.value):
            raise ToyRunError("non-finite loss during optimization", trace)
    return ToyRunResult(
        paired_gen=[ThermalImage(v) for v in paired_gen],
        unpaired_gen=[ThermalImage(v) for v in unpaired_gen],
        trace=trace,
    )
