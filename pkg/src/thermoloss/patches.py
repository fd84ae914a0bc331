"""Patch extraction, bilinear image pyramids, and the multiscale
entropic-Wasserstein patch loss with gradients back to generated pixels.

The loss compares the empirical distribution of flattened s x s patches of
generated images against that of real images, at several pyramid scales,
and sums the per-scale entropic transport costs. Both sides are subsampled
to a common size with a seeded generator so the equal-size exact solver
remains available as an oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .images import SegmentationMask, ThermalImage
from .ot import SinkhornConfig, exact_transport, sinkhorn_grad_source, sinkhorn_transport
from .rng import Xoshiro256StarStar, substream_seed


class PatchLossError(ValueError):
    """Raised when the patch loss cannot be evaluated at scale 0."""


@dataclass(frozen=True)
class PatchConfig:
    patch_size: int = 8
    stride: int = 4
    scales: int = 5
    scale_factor: float = 0.5
    max_patches_per_side: int = 1024
    seed: int = 0

    def __post_init__(self):
        if self.patch_size < 1:
            raise ValueError("patch_size must be at least 1")
        if not 1 <= self.stride <= self.patch_size:
            raise ValueError("stride must lie in [1, patch_size]")
        if self.scales < 1:
            raise ValueError("scales must be at least 1")
        if not 0.0 < self.scale_factor < 1.0:
            raise ValueError("scale_factor must lie in (0, 1)")
        if self.max_patches_per_side < 1:
            raise ValueError("max_patches_per_side must be at least 1")


def _axis_taps(n_in: int, n_out: int, factor: float):
    """Bilinear sample taps for one axis of a downsample by `factor`.

    Output center j samples source position (j + 0.5)/factor - 0.5; the two
    neighboring indices are clamped at the borders. The sample is computed
    as a + w*(b - a), which preserves constants exactly.
    """
    pos = (np.arange(n_out) + 0.5) / factor - 0.5
    lo = np.floor(pos).astype(np.int64)
    w = pos - lo
    i0 = np.clip(lo, 0, n_in - 1)
    i1 = np.clip(lo + 1, 0, n_in - 1)
    return i0, i1, w


def downsample_shape(shape: tuple[int, int], factor: float) -> tuple[int, int]:
    return max(1, int(shape[0] * factor)), max(1, int(shape[1] * factor))


def _axis0_resize(values: np.ndarray, n_out: int, factor: float) -> np.ndarray:
    i0, i1, w = _axis_taps(values.shape[0], n_out, factor)
    a = values[i0]
    return a + w.reshape((-1,) + (1,) * (values.ndim - 1)) * (values[i1] - a)


def _axis0_adjoint(grad: np.ndarray, n_in: int, factor: float) -> np.ndarray:
    i0, i1, w = _axis_taps(n_in, grad.shape[0], factor)
    w = w.reshape((-1,) + (1,) * (grad.ndim - 1))
    out = np.zeros((n_in,) + grad.shape[1:])
    np.add.at(out, i0, (1.0 - w) * grad)
    np.add.at(out, i1, w * grad)
    return out


def downsample_bilinear(values: np.ndarray, factor: float) -> np.ndarray:
    """Bilinear downsample by `factor` (dims rounded down, min 1).

    For factor 0.5 and even dims the taps land exactly between pixel pairs,
    so this reduces to a 2x2 box average.
    """
    nh, nw = downsample_shape(values.shape, factor)
    rows = _axis0_resize(values, nh, factor)
    return _axis0_resize(rows.T, nw, factor).T


def downsample_adjoint(grad_out: np.ndarray, in_shape: tuple[int, int], factor: float) -> np.ndarray:
    """Exact transpose of :func:`downsample_bilinear` for gradient flow."""
    h, w = in_shape
    nh, nw = downsample_shape(in_shape, factor)
    if grad_out.shape != (nh, nw):
        raise ValueError("gradient shape does not match the downsampled shape")
    cols = _axis0_adjoint(grad_out.T, w, factor).T
    return _axis0_adjoint(cols, h, factor)


def downsample_mask_nearest(labels: np.ndarray, factor: float) -> np.ndarray:
    """Nearest-neighbor label downsample aligned with the bilinear grid.

    Each output center picks the label at round((j + 0.5)/factor - 0.5),
    with halves rounding up and indices clamped at the borders.
    """
    h, w = labels.shape
    nh, nw = downsample_shape(labels.shape, factor)
    ri = np.clip(np.floor((np.arange(nh) + 0.5) / factor), 0, h - 1).astype(np.int64)
    ci = np.clip(np.floor((np.arange(nw) + 0.5) / factor), 0, w - 1).astype(np.int64)
    return labels[ri, :][:, ci]


def pyramid_levels(values: np.ndarray, cfg: PatchConfig) -> list[np.ndarray]:
    """Bilinear pyramid: level 0 is the input, each level shrinks by
    scale_factor; stops when a dim drops below patch_size or at cfg.scales."""
    levels: list[np.ndarray] = []
    cur = values
    while len(levels) < cfg.scales and min(cur.shape) >= cfg.patch_size:
        levels.append(cur)
        if len(levels) < cfg.scales:
            cur = downsample_bilinear(cur, cfg.scale_factor)
    return levels


def build_pyramid(img: ThermalImage, cfg: PatchConfig) -> list[ThermalImage]:
    out = []
    for level in pyramid_levels(img.values, cfg):
        # interpolation cannot leave the input's value range, but guard
        # against float dust at the [0, 1] borders
        out.append(ThermalImage(np.clip(level, 0.0, 1.0), img.temp_floor, img.temp_ceil))
    return out


@dataclass(frozen=True)
class PatchSet:
    """Flattened patch vectors plus the top-left pixel of each patch."""

    vectors: np.ndarray  # (K, s*s)
    positions: np.ndarray  # (K, 2) int, (row, col)

    @property
    def count(self) -> int:
        return self.vectors.shape[0]


def extract_patch_grid(values: np.ndarray, labels: np.ndarray | None, cfg: PatchConfig) -> PatchSet:
    """All stride-aligned fully-inside patches, minus excluded ones.

    With labels given, a patch is excluded when it covers any background
    (label 0) pixel; without labels, when every covered pixel equals 0.0.
    """
    s = cfg.patch_size
    h, w = values.shape
    if h < s or w < s:
        return PatchSet(np.zeros((0, s * s)), np.zeros((0, 2), dtype=np.int64))
    windows = sliding_window_view(values, (s, s))[:: cfg.stride, :: cfg.stride]
    nr, nc = windows.shape[:2]
    vectors = windows.reshape(nr * nc, s * s)
    rows, cols = np.meshgrid(
        np.arange(nr, dtype=np.int64) * cfg.stride,
        np.arange(nc, dtype=np.int64) * cfg.stride,
        indexing="ij",
    )
    positions = np.stack([rows.ravel(), cols.ravel()], axis=1)
    if labels is not None:
        if labels.shape != values.shape:
            raise ValueError("mask dims must match image dims")
        bg = sliding_window_view(labels == 0, (s, s))[:: cfg.stride, :: cfg.stride]
        keep = ~bg.any(axis=(2, 3)).ravel()
    else:
        keep = vectors.max(axis=1) > 0.0
    return PatchSet(np.ascontiguousarray(vectors[keep]), positions[keep])


def extract_patches(img: ThermalImage, mask: SegmentationMask | None, cfg: PatchConfig) -> PatchSet:
    labels = mask.labels if mask is not None else None
    return extract_patch_grid(img.values, labels, cfg)


def _subsample_indices(count: int, n: int, seed: int, stream: int) -> np.ndarray:
    """First `n` indices of a seeded partial shuffle; the full index range in
    natural order (consuming no randomness) when n equals count."""
    if n == count:
        return np.arange(count, dtype=np.int64)
    rng = Xoshiro256StarStar(substream_seed(seed, stream))
    return np.array(rng.sample_indices(count, n), dtype=np.int64)


@dataclass(frozen=True)
class ScaleReport:
    scale: int
    gen_count: int
    real_count: int
    used: int
    cost: float
    converged: bool
    skipped: bool


@dataclass(frozen=True)
class PatchWResult:
    value: float
    grads: list[np.ndarray]  # per gen image, level-0 shape
    scales: list[ScaleReport] = field(default_factory=list)

    @property
    def skipped_scales(self) -> list[int]:
        return [r.scale for r in self.scales if r.skipped]

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.scales if not r.skipped)


def patch_w_loss(
    gen_imgs: list[tuple[ThermalImage, SegmentationMask | None]],
    real_imgs: list[ThermalImage],
    cfg: PatchConfig,
    sink_cfg: SinkhornConfig | None = None,
    want_grads: bool = True,
    use_exact: bool = False,
) -> PatchWResult:
    """Sum over scales of the entropic W2^2 between pooled patch samples.

    Generated-side patches are excluded over background labels; real-side
    patches are excluded when completely black. Per scale, both pooled
    sides are subsampled to n = min(K, L, max_patches_per_side) with a
    per-(scale, side) substream of cfg.seed (stream 2*scale for the
    generated side, 2*scale + 1 for the real side). Gradients flow to the
    generated level-0 pixels through the patch placement and the bilinear
    pyramid adjoints. A scale empty on one side is skipped and reported,
    except scale 0 which is an error. With use_exact the per-scale cost
    switches to the exact assignment solver (equal subsample sizes keep it
    applicable) and gradients use the exact plan.
    """
    if not gen_imgs:
        raise PatchLossError("no generated images given")
    if not real_imgs:
        raise PatchLossError("no real images given")
    if sink_cfg is None:
        sink_cfg = SinkhornConfig()

    gen_pyr = [pyramid_levels(img.values, cfg) for img, _ in gen_imgs]
    gen_mask_pyr: list[list[np.ndarray] | None] = []
    for (img, mask), levels in zip(gen_imgs, gen_pyr):
        if mask is None:
            gen_mask_pyr.append(None)
            continue
        if mask.labels.shape != img.values.shape:
            raise ValueError("mask dims must match image dims")
        mlevels = [mask.labels]
        for _ in range(1, len(levels)):
            mlevels.append(downsample_mask_nearest(mlevels[-1], cfg.scale_factor))
        gen_mask_pyr.append(mlevels)
    real_pyr = [pyramid_levels(img.values, cfg) for img in real_imgs]

    n_scales = max(len(p) for p in gen_pyr + real_pyr)
    total = 0.0
    reports: list[ScaleReport] = []
    level_grads: list[list[np.ndarray]] = [
        [np.zeros(lv.shape) for lv in pyr] for pyr in gen_pyr
    ]

    for scale in range(n_scales):
        gen_vecs, gen_pos, gen_img_idx = [], [], []
        for i, pyr in enumerate(gen_pyr):
            if scale >= len(pyr):
                continue
            labels = gen_mask_pyr[i][scale] if gen_mask_pyr[i] is not None else None
            ps = extract_patch_grid(pyr[scale], labels, cfg)
            if ps.count:
                gen_vecs.append(ps.vectors)
                gen_pos.append(ps.positions)
                gen_img_idx.append(np.full(ps.count, i, dtype=np.int64))
        real_vecs = []
        for pyr in real_pyr:
            if scale >= len(pyr):
                continue
            ps = extract_patch_grid(pyr[scale], None, cfg)
            if ps.count:
                real_vecs.append(ps.vectors)

        k = sum(v.shape[0] for v in gen_vecs)
        l = sum(v.shape[0] for v in real_vecs)
        if k == 0 or l == 0:
            if scale == 0:
                side = "generated" if k == 0 else "real"
                raise PatchLossError(f"no usable patches on the {side} side at scale 0")
            reports.append(ScaleReport(scale, k, l, 0, 0.0, True, True))
            continue

        gen_pool = np.concatenate(gen_vecs, axis=0)
        gen_pool_pos = np.concatenate(gen_pos, axis=0)
        gen_pool_img = np.concatenate(gen_img_idx, axis=0)
        real_pool = np.concatenate(real_vecs, axis=0)
        n = min(k, l, cfg.max_patches_per_side)
        gen_idx = _subsample_indices(k, n, cfg.seed, 2 * scale)
        real_idx = _subsample_indices(l, n, cfg.seed, 2 * scale + 1)
        gen_sub = gen_pool[gen_idx]
        real_sub = real_pool[real_idx]

        if use_exact:
            res = exact_transport(gen_sub, real_sub)
            cost, plan, converged = res.cost, res.plan, True
        else:
            res = sinkhorn_transport(gen_sub, real_sub, sink_cfg)
            cost, plan, converged = res.cost, res.plan, res.converged
        total += cost
        reports.append(ScaleReport(scale, k, l, n, cost, converged, False))

        if want_grads:
            g = sinkhorn_grad_source(gen_sub, real_sub, plan)
            s = cfg.patch_size
            for row, pooled in enumerate(gen_idx):
                img_i = gen_pool_img[pooled]
                r, c = gen_pool_pos[pooled]
                level_grads[img_i][scale][r : r + s, c : c + s] += g[row].reshape(s, s)

    grads: list[np.ndarray] = []
    for i, pyr in enumerate(gen_pyr):
        if not want_grads or not pyr:
            grads.append(np.zeros(gen_imgs[i][0].values.shape))
            continue
        acc = level_grads[i][-1]
        for scale in range(len(pyr) - 2, -1, -1):
            acc = level_grads[i][scale] + downsample_adjoint(acc, pyr[scale].shape, cfg.scale_factor)
        grads.append(acc)

    return PatchWResult(value=total, grads=grads, scales=reports)
