"""Composite thermal-image losses, probabilistic landmark utilities, and
benchmark metrics, with a reproducible CLI surface."""

import os as _os

# Cap BLAS threads before numpy initializes; the library itself runs no
# threads, so this is the only parallelism the cap can touch.
_threads = _os.environ.get("THERMOLOSS_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

from .adapter import (  # noqa: E402
    AdapterMLP,
    AdaptTrainConfig,
    adapter_apply,
    adapter_forward,
    init_adapter,
    load_adapter,
    save_adapter,
    train_adapter,
)
from .composite import (  # noqa: E402
    LossConfig,
    Problem,
    ToyRunError,
    load_problem,
    paired_mse,
    rgb2thermal_loss,
    toy_thermalize,
)
from .images import (  # noqa: E402
    SegmentationMask,
    ThermalImage,
    preprocess_stack,
    temp_to_unit,
    unit_to_temp,
)
from .landmarks import (  # noqa: E402
    LandmarkSet,
    NllConfig,
    WindowGeometry,
    WindowPlanConfig,
    confidence_filter,
    gaussian_nll,
    plan_windows,
    pool_predictions,
)
from .metrics import EvalRecord, evaluate_dataset, nme  # noqa: E402
from .ot import (  # noqa: E402
    SinkhornConfig,
    exact_transport,
    sinkhorn_grad_source,
    sinkhorn_transport,
)
from .patches import PatchConfig, build_pyramid, extract_patches, patch_w_loss  # noqa: E402
from .pgm import PgmError, load_pgm_image, load_pgm_mask, save_pgm_image, save_pgm_mask  # noqa: E402
from .regions import RegionProfile, builtin_profile, region_means, region_reg  # noqa: E402
