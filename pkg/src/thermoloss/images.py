"""Core image types, temperature mapping, and the thermal preprocessing stack.

Thermal images store unit-interval values linearly mapped from a Celsius
range (default 20-40). Segmentation masks carry the 18 face-region labels
used by the region regularizer, with label 0 reserved for background.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NUM_REGION_CLASSES = 18

DEFAULT_TEMP_FLOOR = 20.0
DEFAULT_TEMP_CEIL = 40.0

# The preprocessing stack for feeding thermal frames to grayscale landmark
# models clamps to a wider ceiling than the analysis range.
PREPROCESS_TEMP_FLOOR = 20.0
PREPROCESS_TEMP_CEIL = 45.0


def temp_to_unit(t, floor: float = DEFAULT_TEMP_FLOOR, ceil: float = DEFAULT_TEMP_CEIL):
    """Map Celsius to [0, 1], clamping outside [floor, ceil]."""
    if not floor < ceil:
        raise ValueError(f"temperature floor {floor} must be below ceil {ceil}")
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise ValueError("temperature must be finite")
    u = np.clip((t - floor) / (ceil - floor), 0.0, 1.0)
    return float(u) if u.ndim == 0 else u


def unit_to_temp(u, floor: float = DEFAULT_TEMP_FLOOR, ceil: float = DEFAULT_TEMP_CEIL):
    """Inverse of :func:`temp_to_unit` on [0, 1]."""
    if not floor < ceil:
        raise ValueError(f"temperature floor {floor} must be below ceil {ceil}")
    u = np.asarray(u, dtype=np.float64)
    if not np.all(np.isfinite(u)):
        raise ValueError("unit value must be finite")
    t = floor + u * (ceil - floor)
    return float(t) if t.ndim == 0 else t


@dataclass(frozen=True)
class ThermalImage:
    """H x W grid of unit-interval values with its Celsius interpretation."""

    values: np.ndarray
    temp_floor: float = DEFAULT_TEMP_FLOOR
    temp_ceil: float = DEFAULT_TEMP_CEIL

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ValueError("image values must be a non-empty 2-d grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("image values must be finite")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        if not self.temp_floor < self.temp_ceil:
            raise ValueError("temp_floor must be below temp_ceil")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SegmentationMask:
    """H x W grid of region labels in [0, 17]; label 0 is background."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2 or lab.size == 0:
            raise ValueError("mask labels must be a non-empty 2-d grid")
        if not np.issubdtype(lab.dtype, np.integer):
            lab_f = np.asarray(lab, dtype=np.float64)
            if not np.all(lab_f == np.rint(lab_f)):
                raise ValueError("mask labels must be integers")
            lab = lab_f.astype(np.int64)
        else:
            lab = lab.astype(np.int64)
        if lab.min() < 0 or lab.max() >= NUM_REGION_CLASSES:
            raise ValueError(f"mask labels must lie in [0, {NUM_REGION_CLASSES - 1}]")
        object.__setattr__(self, "labels", lab)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class UnsharpParams:
    radius: float
    amount: float


# Two spatial scales for the unsharp pass of the preprocessing stack.
UNSHARP_PARAMSET_A = UnsharpParams(radius=2.0, amount=1.0)
UNSHARP_PARAMSET_B = UnsharpParams(radius=5.0, amount=2.0)


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1-d Gaussian, truncated at ceil(3*sigma) taps per side."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    half = int(math.ceil(3.0 * sigma))
    xs = np.arange(-half, half + 1, dtype=np.float64)
    w = np.exp(-(xs**2) / (2.0 * sigma**2))
    return w / w.sum()


def gaussian_blur(values: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with mirror (symmetric) boundary handling."""
    k = gaussian_kernel1d(sigma)
    half = len(k) // 2
    p = np.pad(values, ((half, half), (0, 0)), mode="symmetric")
    rows = np.zeros_like(values)
    for i, w in enumerate(k):
        rows += w * p[i : i + values.shape[0], :]
    p = np.pad(rows, ((0, 0), (half, half)), mode="symmetric")
    out = np.zeros_like(values)
    for i, w in enumerate(k):
        out += w * p[:, i : i + values.shape[1]]
    return out


def unsharp_mask(values: np.ndarray, params: UnsharpParams) -> np.ndarray:
    """v + amount * (v - blur(v)), clipped back to [0, 1]."""
    sharp = values + params.amount * (values - gaussian_blur(values, params.radius))
    return np.clip(sharp, 0.0, 1.0)


def preprocess_stack(img: ThermalImage) -> list[ThermalImage]:
    """Four enhancement variants used to feed grayscale landmark models.

    The image is first re-normalized onto the 20-45 C preprocessing range,
    then unsharp paramsets A and B are applied, each with and without value
    inversion (v -> 1 - v). Order: [A, A inverted, B, B inverted]. All
    outputs carry the preprocessing temperature range.
    """
    t = unit_to_temp(img.values, img.temp_floor, img.temp_ceil)
    base = temp_to_unit(t, PREPROCESS_TEMP_FLOOR, PREPROCESS_TEMP_CEIL)
    variants = []
    for params in (UNSHARP_PARAMSET_A, UNSHARP_PARAMSET_B):
        sharp = unsharp_mask(base, params)
        variants.append(ThermalImage(sharp, PREPROCESS_TEMP_FLOOR, PREPROCESS_TEMP_CEIL))
        variants.append(ThermalImage(1.0 - sharp, PREPROCESS_TEMP_FLOOR, PREPROCESS_TEMP_CEIL))
    return variants
