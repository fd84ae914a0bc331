"""Probabilistic landmark objective and multi-scale sliding-window pooling.

Landmarks live in normalized image coordinates: x is the column fraction
of image width, y the row fraction of image height. The Gaussian NLL
jointly scores predicted positions and per-landmark variances, with a
variance floor for numerical stability. Window planning and pooling
implement inference over an image pyramid of 224-window crops, keeping
per landmark the prediction with the smallest standard deviation.

Landmark JSON format: {"convention_size": n, "points": [[x, y], ...],
"sigmas": [...]} with sigmas optional. Window collection JSON format (for
pooling): {"image_h": H, "image_w": W, "windows": [{"scale": s, "top": t,
"left": l, "win_h": h, "win_w": w, "points": [[x, y], ...],
"sigmas": [...]}, ...]} with window-local normalized points.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LandmarkSet:
    """Ordered (x, y) points, optionally with per-landmark sigmas.

    Coordinates are normally in [0, 1] but are not clamped: adaptation
    outputs and augmented training samples may leave the unit box.
    """

    points: np.ndarray  # (L, 2)
    sigmas: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] == 0:
            raise ValueError("points must be a non-empty (L, 2) array")
        if not np.all(np.isfinite(p)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", p)
        if self.sigmas is not None:
            s = np.asarray(self.sigmas, dtype=np.float64)
            if s.shape != (p.shape[0],):
                raise ValueError("sigmas must have one entry per landmark")
            if not np.all(np.isfinite(s)) or s.min() < 0:
                raise ValueError("sigmas must be finite and non-negative")
            object.__setattr__(self, "sigmas", s)

    @property
    def convention_size(self) -> int:
        return self.points.shape[0]

    def to_json_dict(self) -> dict:
        out = {
            "convention_size": self.convention_size,
            "points": [[float(x), float(y)] for x, y in self.points],
        }
        if self.sigmas is not None:
            out["sigmas"] = [float(s) for s in self.sigmas]
        return out


def landmarks_from_json_dict(raw: dict) -> LandmarkSet:
    points = np.asarray(raw["points"], dtype=np.float64)
    if "convention_size" in raw and int(raw["convention_size"]) != len(points):
        raise ValueError("convention_size does not match the point count")
    sigmas = raw.get("sigmas")
    return LandmarkSet(points, None if sigmas is None else np.asarray(sigmas, dtype=np.float64))


def load_landmarks(path) -> LandmarkSet:
    with open(path, "r", encoding="utf-8") as f:
        return landmarks_from_json_dict(json.load(f))


def save_landmarks(path, lms: LandmarkSet) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(lms.to_json_dict(), f)
        f.write("\n")


@dataclass(frozen=True)
class NllConfig:
    epsilon: float = 1e-6  # variance clip floor

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def gaussian_nll(
    mu: LandmarkSet,
    sigma2: np.ndarray,
    y: LandmarkSet,
    cfg: NllConfig | None = None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Heteroscedastic Gaussian NLL over landmarks, with both gradients.

    value = sum_l [log(2 pi st_l) + |mu_l - y_l|^2 / (2 st_l)] where
    st_l = max(sigma2_l, epsilon). grad_sigma2 is 0 wherever the clip is
    active (sigma2 <= epsilon), the exact derivative elsewhere. Raw
    non-positive variances are an error: the clip is a floor, not a sign
    fix.
    """
    if cfg is None:
        cfg = NllConfig()
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    if mu.convention_size != y.convention_size:
        raise ValueError("mu and y must have the same landmark count")
    if sigma2.shape != (mu.convention_size,):
        raise ValueError("sigma2 must have one entry per landmark")
    if not np.all(np.isfinite(sigma2)) or sigma2.min() <= 0:
        raise ValueError("variances must be finite and positive")

    st = np.maximum(sigma2, cfg.epsilon)
    resid = mu.points - y.points
    r2 = (resid * resid).sum(axis=1)
    value = float((np.log(2.0 * math.pi * st) + r2 / (2.0 * st)).sum())
    grad_mu = resid / st[:, None]
    grad_sigma2 = np.where(sigma2 > cfg.epsilon, 1.0 / st - r2 / (2.0 * st * st), 0.0)
    return value, grad_mu, grad_sigma2


@dataclass(frozen=True)
class WindowPlanConfig:
    window: int = 224
    stride: int = 20
    scale_factor: float = 0.75
    min_dim_stop: int = 224

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be at least 1")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")
        if not 0.0 < self.scale_factor < 1.0:
            raise ValueError("scale_factor must lie in (0, 1)")


@dataclass(frozen=True)
class WindowGeometry:
    """Placement of one crop: level scale (scale_factor**k), window top-left
    and size in level pixels, and the original image dims."""

    scale: float
    top: int
    left: int
    win_h: int
    win_w: int
    image_h: int
    image_w: int

    def to_json_dict(self) -> dict:
        return {
            "scale": self.scale,
            "top": self.top,
            "left": self.left,
            "win_h": self.win_h,
            "win_w": self.win_w,
        }


def identity_geometry(image_h: int, image_w: int) -> WindowGeometry:
    """Whole-image window at scale 1; maps local coordinates unchanged."""
    return WindowGeometry(1.0, 0, 0, image_h, image_w, image_h, image_w)


def _axis_anchors(extent: int, window: int, stride: int) -> list[int]:
    """Stride-multiple anchors with a + window <= extent, plus the flush
    anchor extent - window when not already covered; [0] if extent < window
    (the single mirror-padded placement)."""
    if extent < window:
        return [0]
    anchors = list(range(0, extent - window + 1, stride))
    if anchors[-1] != extent - window:
        anchors.append(extent - window)
    return anchors


def plan_windows(image_h: int, image_w: int, cfg: WindowPlanConfig | None = None) -> list[WindowGeometry]:
    """Sliding-window placements over an iteratively downscaled pyramid.

    Level k has nominal scale scale_factor**k and dims floored per axis;
    levels beyond 0 are kept while min(h, w) >= min_dim_stop. Level 0 is
    always planned; an image smaller than the window gets one window at
    (0, 0) whose out-of-range area is understood as mirror padding.
    """
    if cfg is None:
        cfg = WindowPlanConfig()
    if image_h < 1 or image_w < 1:
        raise ValueError("image dims must be positive")
    plans: list[WindowGeometry] = []
    h, w, level = image_h, image_w, 0
    while True:
        scale = cfg.scale_factor**level
        for top in _axis_anchors(h, cfg.window, cfg.stride):
            for left in _axis_anchors(w, cfg.window, cfg.stride):
                plans.append(
                    WindowGeometry(scale, top, left, cfg.window, cfg.window, image_h, image_w)
                )
        h, w, level = int(h * cfg.scale_factor), int(w * cfg.scale_factor), level + 1
        if min(h, w) < cfg.min_dim_stop:
            break
    return plans


def _is_identity(geom: WindowGeometry) -> bool:
    return (
        geom.scale == 1.0
        and geom.top == 0
        and geom.left == 0
        and geom.win_h == geom.image_h
        and geom.win_w == geom.image_w
    )


def window_to_image(geom: WindowGeometry, points: np.ndarray) -> np.ndarray:
    """Map window-local normalized points to full-image normalized points.

    Local (x, y) in [0, 1]^2 spans the window; level pixels are divided by
    the level scale to reach original pixels, then normalized by the
    original dims. The identity geometry maps points exactly unchanged.
    """
    points = np.asarray(points, dtype=np.float64)
    if _is_identity(geom):
        return points.copy()
    x = (geom.left + points[:, 0] * geom.win_w) / geom.scale / geom.image_w
    y = (geom.top + points[:, 1] * geom.win_h) / geom.scale / geom.image_h
    return np.stack([x, y], axis=1)


def image_to_window(geom: WindowGeometry, points: np.ndarray) -> np.ndarray:
    """Inverse of :func:`window_to_image`."""
    points = np.asarray(points, dtype=np.float64)
    if _is_identity(geom):
        return points.copy()
    x = (points[:, 0] * geom.image_w * geom.scale - geom.left) / geom.win_w
    y = (points[:, 1] * geom.image_h * geom.scale - geom.top) / geom.win_h
    return np.stack([x, y], axis=1)


def pool_predictions(per_window: list[tuple[WindowGeometry, LandmarkSet]]) -> LandmarkSet:
    """Per landmark, keep the window prediction with the smallest sigma.

    Window-local coordinates are mapped back to full-image normalized
    coordinates first; the winner's sigma is retained. Ties go to the
    earliest window in plan order. Every window must carry sigmas and the
    same landmark count.
    """
    if not per_window:
        raise ValueError("no window predictions to pool")
    counts = {lms.convention_size for _, lms in per_window}
    if len(counts) != 1:
        raise ValueError("all windows must share the landmark count")
    if any(lms.sigmas is None for _, lms in per_window):
        raise ValueError("pooling requires per-landmark sigmas")

    mapped = np.stack([window_to_image(geom, lms.points) for geom, lms in per_window])
    sigmas = np.stack([lms.sigmas for _, lms in per_window])  # (W, L)
    winner = np.argmin(sigmas, axis=0)  # argmin keeps the earliest on ties
    n = sigmas.shape[1]
    return LandmarkSet(mapped[winner, np.arange(n)], sigmas[winner, np.arange(n)])


def confidence_filter(pred: LandmarkSet, sigma_bar: float) -> bool:
    """Accept a prediction iff its mean sigma is strictly below sigma_bar."""
    if pred.sigmas is None:
        raise ValueError("confidence filtering requires sigmas")
    return bool(pred.sigmas.mean() < sigma_bar)


DEFAULT_SIGMA_BAR = 6e-4
