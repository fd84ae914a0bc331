"""Regenerate the problem bundles and golden values under tests/data.

The bundles are checked in; rerun this only when the on-disk format or
the reference configuration changes. PGM quantization happens on save,
so reloading reproduces the stored pixel values exactly.
"""

import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from thermoloss.composite import load_problem, config_from_overrides, rgb2thermal_loss
from thermoloss.images import SegmentationMask, ThermalImage
from thermoloss.pgm import save_pgm_image, save_pgm_mask

DATA = os.path.join(os.path.dirname(__file__), "..", "tests", "data")


def write_paired8():
    root = os.path.join(DATA, "problems", "paired8")
    os.makedirs(os.path.join(root, "paired"), exist_ok=True)
    rng = np.random.default_rng(2024_08_01)
    gen = rng.uniform(0.2, 0.8, (8, 8))
    tgt = rng.uniform(0.2, 0.8, (8, 8))
    save_pgm_image(os.path.join(root, "paired", "a_gen.pgm"), ThermalImage(gen))
    save_pgm_image(os.path.join(root, "paired", "a_tgt.pgm"), ThermalImage(tgt))
    with open(os.path.join(root, "config.json"), "w", encoding="utf-8") as f:
        json.dump({"lambda_w": 0.0, "lambda_r": 0.0, "mse_dim_norm": 64}, f, indent=2)
        f.write("\n")
    return root


def write_combined16():
    root = os.path.join(DATA, "problems", "combined16")
    for sub in ("paired", "unpaired", "real"):
        os.makedirs(os.path.join(root, sub), exist_ok=True)
    rng = np.random.default_rng(2024_08_02)
    save_pgm_image(
        os.path.join(root, "paired", "a_gen.pgm"), ThermalImage(rng.uniform(0.2, 0.8, (16, 16)))
    )
    save_pgm_image(
        os.path.join(root, "paired", "a_tgt.pgm"), ThermalImage(rng.uniform(0.2, 0.8, (16, 16)))
    )
    save_pgm_image(
        os.path.join(root, "unpaired", "b.pgm"), ThermalImage(rng.uniform(0.3, 0.9, (16, 16)))
    )
    labels = np.zeros((16, 16), dtype=np.int64)  # four foreground quadrants
    labels[:8, :8] = 1
    labels[:8, 8:] = 2
    labels[8:, :8] = 3
    labels[8:, 8:] = 4
    save_pgm_mask(os.path.join(root, "unpaired", "b_mask.pgm"), SegmentationMask(labels))
    for i in range(2):
        save_pgm_image(
            os.path.join(root, "real", f"r{i}.pgm"), ThermalImage(rng.uniform(0.2, 0.8, (16, 16)))
        )
    with open(os.path.join(root, "config.json"), "w", encoding="utf-8") as f:
        json.dump(
            {
                "lambda_w": 1.0 / 320.0,
                "lambda_r": 1.0,
                "mse_dim_norm": 256,
                "seed": 0,
                "profile": "cold",
            },
            f,
            indent=2,
        )
        f.write("\n")
    return root


def write_golden(bundle_root):
    problem = load_problem(bundle_root)
    cfg = config_from_overrides(problem.overrides)
    res = rgb2thermal_loss(problem.paired, problem.unpaired, problem.real, cfg, want_grads=False)
    os.makedirs(os.path.join(DATA, "golden"), exist_ok=True)
    out = os.path.join(DATA, "golden", "combined16_breakdown.json")
    with open(out, "w", encoding="utf-8") as f:
        json.dump(dict(res.breakdown), f, indent=2)
        f.write("\n")
    print(f"golden breakdown -> {out}")
    for key, value in res.breakdown.items():
        print(f"  {key}: {value!r}")


if __name__ == "__main__":
    paired8 = write_paired8()
    print(f"bundle -> {paired8}")
    combined16 = write_combined16()
    print(f"bundle -> {combined16}")
    write_golden(combined16)
