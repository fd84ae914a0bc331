"""Segmentation-based temperature regularizer with reference profiles.

Penalizes the squared deviation of each region's mean value from a
reference target, weighted by relative region size. Two bundled profiles
(cold, warm) encode clinical reference temperatures for the 18 face-region
classes; targets below the clamp floor are stored as the floor itself and
map to 0.0 in unit range.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .images import NUM_REGION_CLASSES, SegmentationMask, ThermalImage, temp_to_unit

# class-id assignment for the 18 regions; id 0 is background by contract
CLASS_NAMES = (
    "background",
    "skin",
    "nose",
    "eye_right",
    "eye_left",
    "brow_right",
    "brow_left",
    "ear_right",
    "ear_left",
    "mouth_interior",
    "lip_upper",
    "lip_lower",
    "neck",
    "hair",
    "beard",
    "clothing",
    "glasses",
    "headwear_facewear",
)


@dataclass(frozen=True)
class RegionProfile:
    """Unit-range target value per region class, plus the floor-class set."""

    name: str
    targets: np.ndarray  # (18,) in [0, 1]
    floor_classes: frozenset[int]

    def __post_init__(self):
        t = np.asarray(self.targets, dtype=np.float64)
        if t.shape != (NUM_REGION_CLASSES,):
            raise ValueError(f"profile needs exactly {NUM_REGION_CLASSES} targets")
        if t.min() < 0.0 or t.max() > 1.0:
            raise ValueError("profile targets must lie in [0, 1]")
        object.__setattr__(self, "targets", t)


def profile_from_celsius(name: str, celsius: dict[int, float], temp_floor: float = 20.0, temp_ceil: float = 40.0) -> RegionProfile:
    if sorted(celsius) != list(range(NUM_REGION_CLASSES)):
        raise ValueError(f"profile must map class ids 0..{NUM_REGION_CLASSES - 1}")
    targets = np.array([temp_to_unit(celsius[i], temp_floor, temp_ceil) for i in range(NUM_REGION_CLASSES)])
    floor = frozenset(i for i in range(NUM_REGION_CLASSES) if celsius[i] <= temp_floor)
    return RegionProfile(name=name, targets=targets, floor_classes=floor)


def load_profile_json(text: str) -> RegionProfile:
    """Parse a profile from its JSON form {"name", "celsius": {id: degC}}."""
    raw = json.loads(text)
    celsius = {int(k): float(v) for k, v in raw["celsius"].items()}
    return profile_from_celsius(raw["name"], celsius)


def load_profile_file(path) -> RegionProfile:
    with open(path, "r", encoding="utf-8") as f:
        return load_profile_json(f.read())


def builtin_profile(name: str) -> RegionProfile:
    """Load one of the packaged profiles ("cold" or "warm")."""
    try:
        text = resources.files("thermoloss").joinpath(f"profiles/{name}.json").read_text("utf-8")
    except FileNotFoundError:
        raise ValueError(f"unknown builtin profile {name!r}") from None
    return load_profile_json(text)


def region_means(img: ThermalImage, mask: SegmentationMask) -> tuple[np.ndarray, np.ndarray]:
    """Per-class mean value and pixel count; absent classes get count 0.

    Means of absent classes are reported as NaN and must not be consumed.
    """
    if img.values.shape != mask.labels.shape:
        raise ValueError("image and mask dims must match")
    flat = mask.labels.ravel()
    counts = np.bincount(flat, minlength=NUM_REGION_CLASSES).astype(np.int64)
    sums = np.bincount(flat, weights=img.values.ravel(), minlength=NUM_REGION_CLASSES)
    with np.errstate(invalid="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return means, counts


def region_reg(
    img: ThermalImage,
    mask: SegmentationMask,
    profile: RegionProfile,
    include_background: bool = True,
) -> tuple[float, np.ndarray]:
    """Size-weighted squared deviation of region means from profile targets.

    value = sum_i w_i (mean_i - target_i)^2 over present classes, with
    w_i = count_i / sum(count_j over present). The gradient at a pixel of
    class i is 2 w_i (mean_i - target_i) / count_i. With include_background
    False, class 0 is dropped from both the sum and the normalization.
    """
    means, counts = region_means(img, mask)
    present = counts > 0
    if not include_background:
        present = present.copy()
        present[0] = False
    if not present.any():
        raise ValueError("no region classes present to regularize")

    weights = np.zeros(NUM_REGION_CLASSES)
    weights[present] = counts[present] / counts[present].sum()
    residual = np.zeros(NUM_REGION_CLASSES)
    residual[present] = means[present] - profile.targets[present]
    value = float((weights[present] * residual[present] ** 2).sum())

    per_class = np.zeros(NUM_REGION_CLASSES)
    per_class[present] = 2.0 * weights[present] * residual[present] / counts[present]
    grads = per_class[mask.labels]
    return value, grads
