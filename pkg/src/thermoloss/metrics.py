"""Landmark benchmark metrics: normalized mean error, failure rate, and
confidence-filtered dataset evaluation.

Predictions and ground truth arrive in normalized coordinates; errors are
computed in pixel units and divided by a per-frame normalizer, either the
mean of the ground-truth bounding box sides ("wh") or the distance
between two reference eye landmarks ("interocular").

Dataset manifests are JSON lines, one record per line:
{"frame": id, "image_h": H, "image_w": W, "gt": {landmark json},
"pred": {landmark json} | null} with pred null marking a detector failure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .landmarks import LandmarkSet, landmarks_from_json_dict

DEFAULT_EYE_INDICES = (36, 45)  # outer eye corners in the 68-point convention


def _pixels(lms: LandmarkSet, image_h: int, image_w: int) -> np.ndarray:
    return lms.points * np.array([image_w, image_h], dtype=np.float64)


def nme(
    pred: LandmarkSet,
    gt: LandmarkSet,
    image_h: int,
    image_w: int,
    mode: str = "wh",
    eye_indices: tuple[int, int] = DEFAULT_EYE_INDICES,
    use_l1: bool = False,
) -> float:
    """Mean per-landmark pixel error divided by the frame normalizer.

    mode "wh": normalizer is (bbox_w + bbox_h)/2 of the ground-truth
    landmark bounding box. mode "interocular": the distance between
    gt[eye_indices]. Per-landmark error is Euclidean by default; use_l1
    switches to the per-coordinate absolute-difference sum.
    """
    if pred.convention_size != gt.convention_size:
        raise ValueError("pred and gt must have the same landmark count")
    pp = _pixels(pred, image_h, image_w)
    gp = _pixels(gt, image_h, image_w)
    diff = pp - gp
    if use_l1:
        err = np.abs(diff).sum(axis=1)
    else:
        err = np.sqrt((diff * diff).sum(axis=1))

    if mode == "wh":
        spans = gp.max(axis=0) - gp.min(axis=0)
        d = (spans[0] + spans[1]) / 2.0
    elif mode == "interocular":
        i, j = eye_indices
        if not (0 <= i < gt.convention_size and 0 <= j < gt.convention_size):
            raise ValueError("eye indices out of range")
        d = float(np.linalg.norm(gp[i] - gp[j]))
    else:
        raise ValueError(f"unknown nme mode {mode!r}")
    if d == 0.0:
        raise ValueError("degenerate normalizer: zero bounding box or eye distance")
    return float(err.mean()) / d


@dataclass(frozen=True)
class EvalRecord:
    frame: str
    image_h: int
    image_w: int
    gt: LandmarkSet
    pred: LandmarkSet | None  # None marks a detector failure


def load_manifest(path) -> list[EvalRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            pred = raw.get("pred")
            records.append(
                EvalRecord(
                    frame=str(raw["frame"]),
                    image_h=int(raw["image_h"]),
                    image_w=int(raw["image_w"]),
                    gt=landmarks_from_json_dict(raw["gt"]),
                    pred=None if pred is None else landmarks_from_json_dict(pred),
                )
            )
    return records


def save_manifest(path, records: list[EvalRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            row = {
                "frame": r.frame,
                "image_h": r.image_h,
                "image_w": r.image_w,
                "gt": r.gt.to_json_dict(),
                "pred": None if r.pred is None else r.pred.to_json_dict(),
            }
            f.write(json.dumps(row) + "\n")


def evaluate_dataset(
    records: list[EvalRecord],
    sigma_bar: float | None = None,
    mode: str = "wh",
    eye_indices: tuple[int, int] = DEFAULT_EYE_INDICES,
    use_l1: bool = False,
) -> dict:
    """Dataset-level NME and failure rate with optional confidence filter.

    A frame fails when its prediction is absent or, with sigma_bar given,
    when its mean sigma is not strictly below sigma_bar. nme_mean averages
    over evaluated (non-failed) frames only; it is None when every frame
    failed.
    """
    if not records:
        raise ValueError("no records to evaluate")
    per_frame = []
    errors = []
    failures = 0
    for r in records:
        if r.pred is None:
            failures += 1
            per_frame.append({"frame": r.frame, "status": "missing", "nme": None})
            continue
        if sigma_bar is not None:
            if r.pred.sigmas is None:
                raise ValueError(f"frame {r.frame} has no sigmas for confidence filtering")
            if not r.pred.sigmas.mean() < sigma_bar:
                failures += 1
                per_frame.append({"frame": r.frame, "status": "rejected", "nme": None})
                continue
        e = nme(r.pred, r.gt, r.image_h, r.image_w, mode, eye_indices, use_l1)
        errors.append(e)
        per_frame.append({"frame": r.frame, "status": "evaluated", "nme": e})
    return {
        "n_total": len(records),
        "n_evaluated": len(errors),
        "failure_rate": failures / len(records),
        "nme_mean": (sum(errors) / len(errors)) if errors else None,
        "per_frame": per_frame,
    }
