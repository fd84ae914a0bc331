"""Label adaptation: a small fully connected net mapping one landmark
convention to another, trained with an L1 objective.

The net takes the flattened source landmarks (x0, y0, x1, y1, ...) plus
the frame's resize factor (original width / processed width) and outputs
the flattened target landmarks. Training uses Adam with a one-cycle
schedule and per-sample rotation/shear augmentation applied identically
to source and target points, so any map commuting with those transforms
stays learnable from augmented data.

Serialized form: one JSON header line {"format": "adapter-mlp",
"version": 1, "widths": [...], "seed": ..., "config": {...},
"param_count": N} followed by a newline and the parameters as
little-endian float64: for each layer, the weight matrix (input-major
rows) then the bias vector.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .rng import Xoshiro256StarStar, substream_seed

MODEL_FORMAT = "adapter-mlp"
MODEL_VERSION = 1


@dataclass
class AdapterMLP:
    """Affine layers with rectifier hidden activations, identity output.

    weights[k] has shape (widths[k], widths[k+1]); forward is x @ W + b.
    """

    widths: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def param_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def validate(self) -> None:
        if len(self.widths) != len(self.weights) + 1 or len(self.weights) != len(self.biases):
            raise ValueError("width chain does not match layer count")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.widths[k], self.widths[k + 1]) or b.shape != (self.widths[k + 1],):
                raise ValueError(f"layer {k} parameter shapes do not match widths")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k} parameters must be finite")


@dataclass(frozen=True)
class AdaptTrainConfig:
    epochs: int = 2000
    base_lr: float = 0.002
    batch: int = 64
    hidden: int = 256
    n_hidden_layers: int = 4
    aug_rotation_max: float = 45.0  # degrees
    aug_shear_max: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch < 1:
            raise ValueError("batch must be at least 1")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")


def adapter_widths(n_in_landmarks: int, n_out_landmarks: int, cfg: AdaptTrainConfig) -> list[int]:
    hidden = [cfg.hidden] * cfg.n_hidden_layers
    return [2 * n_in_landmarks + 1, *hidden, 2 * n_out_landmarks]


def init_adapter(widths: list[int], seed: int) -> AdapterMLP:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.

    Weight entries are drawn row-major per layer from substream 0 of the
    seed, so initialization is reproducible independently of training.
    """
    rng = Xoshiro256StarStar(substream_seed(seed, 0))
    weights, biases = [], []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / math.sqrt(n_in)
        draws = rng.uniform_in_many(-bound, bound, n_in * n_out)
        weights.append(np.array(draws).reshape(n_in, n_out))
        biases.append(np.zeros(n_out))
    return AdapterMLP(widths=list(widths), weights=weights, biases=biases)


def adapter_forward(mlp: AdapterMLP, x: np.ndarray) -> np.ndarray:
    """Batched forward pass; x is (B, widths[0]) or (widths[0],)."""
    single = x.ndim == 1
    a = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if a.shape[1] != mlp.widths[0]:
        raise ValueError(f"input width {a.shape[1]} does not match layer 0 width {mlp.widths[0]}")
    last = mlp.n_layers - 1
    for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        a = a @ w + b
        if k != last:
            np.maximum(a, 0.0, out=a)
    return a[0] if single else a


def adapter_apply(mlp: AdapterMLP, pred_points: np.ndarray, resize: float) -> np.ndarray:
    """Map (L_in, 2) points + resize factor to (L_out, 2) points."""
    pred_points = np.asarray(pred_points, dtype=np.float64)
    x = np.concatenate([pred_points.reshape(-1), [float(resize)]])
    out = adapter_forward(mlp, x)
    return out.reshape(-1, 2)


def _forward_cached(mlp: AdapterMLP, x: np.ndarray):
    """Forward pass keeping activations for backprop."""
    acts = [x]
    a = x
    last = mlp.n_layers - 1
    for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        a = a @ w + b
        if k != last:
            a = np.maximum(a, 0.0)
        acts.append(a)
    return acts


def l1_loss_and_grads(mlp: AdapterMLP, x: np.ndarray, y: np.ndarray):
    """Mean absolute coordinate error |out - y| over the batch, with grads.

    The mean runs over batch rows and output coordinates, so the value is
    comparable across conventions of different size. The L1 subgradient
    uses sign with sign(0) = 0. Gradients for rectifier units use the
    derivative 0 at exactly 0.
    """
    acts = _forward_cached(mlp, x)
    out = acts[-1]
    diff = out - y
    loss = float(np.abs(diff).sum()) / diff.size
    delta = np.sign(diff) / diff.size
    grads_w = [None] * mlp.n_layers
    grads_b = [None] * mlp.n_layers
    for k in range(mlp.n_layers - 1, -1, -1):
        grads_w[k] = acts[k].T @ delta
        grads_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ mlp.weights[k].T) * (acts[k] > 0.0)
    return loss, grads_w, grads_b


def _make_workspace(widths: list[int], batch: int, dtype=np.float64):
    """Reusable activation/delta/mask buffers for the training loop."""
    acts = [np.empty((batch, w), dtype=dtype) for w in widths[1:]]
    deltas = [np.empty((batch, w), dtype=dtype) for w in widths[1:]]
    masks = [np.empty((batch, w), dtype=bool) for w in widths[1:-1]]
    return acts, deltas, masks


def _l1_backward_into(mlp: AdapterMLP, x: np.ndarray, y: np.ndarray, gw: list, gb: list, ws=None) -> float:
    """Same math as :func:`l1_loss_and_grads`, writing grads into buffers.

    ws is an optional (acts, deltas, masks) workspace from
    :func:`_make_workspace`; without one, buffers are allocated per call.
    """
    bsz = x.shape[0]
    if ws is None:
        ws = _make_workspace(mlp.widths, bsz, dtype=np.result_type(x, mlp.weights[0]))
    acts, deltas, masks = ws
    last = mlp.n_layers - 1
    a = x
    for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        out = acts[k][:bsz]
        np.matmul(a, w, out=out)
        out += b
        if k != last:
            np.maximum(out, 0.0, out=out)
        a = out
    diff = deltas[last][:bsz]
    np.subtract(a, y, out=diff)
    loss = float(np.abs(diff).sum()) / diff.size
    np.sign(diff, out=diff)
    diff /= diff.size
    delta = diff
    for k in range(last, -1, -1):
        src = x if k == 0 else acts[k - 1][:bsz]
        np.matmul(src.T, delta, out=gw[k])
        delta.sum(axis=0, out=gb[k])
        if k > 0:
            prev = deltas[k - 1][:bsz]
            np.matmul(delta, mlp.weights[k].T, out=prev)
            mask = masks[k - 1][:bsz]
            np.greater(src, 0.0, out=mask)
            prev *= mask
            delta = prev
    return loss


def one_cycle_lr(step: int, total_steps: int, base_lr: float) -> float:
    """Linear warmup over the first 10% of steps to base_lr, then cosine
    decay reaching base_lr/100 exactly at the final step."""
    warmup = max(1, total_steps // 10)
    if step < warmup:
        return base_lr * (step + 1) / warmup
    floor = base_lr / 100.0
    span = max(1, total_steps - warmup - 1)
    progress = (step - warmup) / span
    return floor + 0.5 * (base_lr - floor) * (1.0 + math.cos(math.pi * progress))


def _rot_shear_batch(points: np.ndarray, centers: np.ndarray, angles: np.ndarray, shears: np.ndarray) -> np.ndarray:
    """p -> c + R(angle) @ Shear(shear) @ (p - c) per batch row.

    points is (B, L, 2), centers (B, 2). Rows with angle and shear both
    exactly 0 pass through unchanged.
    """
    ca, sa = np.cos(angles), np.sin(angles)
    # rotation composed after the shear matrix [[1, s], [0, 1]]
    m00 = ca
    m01 = ca * shears - sa
    m10 = sa
    m11 = sa * shears + ca
    c = centers[:, None, :]
    q = points - c
    q0, q1 = q[:, :, 0], q[:, :, 1]
    out = np.empty_like(points)
    out[:, :, 0] = m00[:, None] * q0 + m01[:, None] * q1
    out[:, :, 1] = m10[:, None] * q0 + m11[:, None] * q1
    out += c
    untouched = (angles == 0.0) & (shears == 0.0)
    if untouched.any():
        out[untouched] = points[untouched]
    return out


def train_adapter(
    pred: np.ndarray,
    resize: np.ndarray,
    gt: np.ndarray,
    cfg: AdaptTrainConfig | None = None,
) -> tuple[AdapterMLP, list[float]]:
    """Train the adapter on (pred (N, L_in, 2), resize (N,), gt (N, L_out, 2)).

    Deterministic for a fixed seed: weights come from substream 0, the
    augmentation stream from substream 1; batches are fixed consecutive
    slices in sample order, and augmentation draws one rotation then one
    shear per sample per epoch in that order. Training arithmetic runs in
    single precision (the loss tolerances here are far above float32
    resolution and it halves both matmul time and optimizer-state traffic);
    the returned net carries the final parameters upcast to double.
    Returns the net and the per-epoch mean training loss.
    """
    if cfg is None:
        cfg = AdaptTrainConfig()
    pred = np.asarray(pred, dtype=np.float64)
    resize = np.asarray(resize, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.ndim != 3 or gt.ndim != 3 or pred.shape[2] != 2 or gt.shape[2] != 2:
        raise ValueError("pred and gt must be (N, L, 2) arrays")
    n = pred.shape[0]
    if gt.shape[0] != n or resize.shape != (n,):
        raise ValueError("pred, resize, and gt must agree on sample count")

    widths = adapter_widths(pred.shape[1], gt.shape[1], cfg)
    mlp = init_adapter(widths, cfg.seed)
    if cfg.epochs == 0:
        return mlp, []

    # repack parameters into one flat buffer (layer views) so the Adam
    # update is a handful of fused vector ops instead of per-layer passes
    dt = np.float32
    p_flat = np.empty(mlp.param_count, dtype=dt)
    g_flat = np.empty(mlp.param_count, dtype=dt)
    off = 0
    for k in range(mlp.n_layers):
        w, b = mlp.weights[k], mlp.biases[k]
        pw = p_flat[off : off + w.size].reshape(w.shape)
        gw = g_flat[off : off + w.size].reshape(w.shape)
        pw[:] = w
        mlp.weights[k] = pw
        off += w.size
        pb = p_flat[off : off + b.size]
        gb = g_flat[off : off + b.size]
        pb[:] = b
        mlp.biases[k] = pb
        off += b.size
        if k == 0:
            grad_w_views, grad_b_views = [gw], [gb]
        else:
            grad_w_views.append(gw)
            grad_b_views.append(gb)

    aug_rng = Xoshiro256StarStar(substream_seed(cfg.seed, 1))
    rot_lo, rot_hi = -math.radians(cfg.aug_rotation_max), math.radians(cfg.aug_rotation_max)
    sh_lo, sh_hi = -cfg.aug_shear_max, cfg.aug_shear_max
    augmenting = rot_hi != 0.0 or sh_hi != 0.0
    centers = pred.mean(axis=1)

    steps_per_epoch = (n + cfg.batch - 1) // cfg.batch
    total_steps = cfg.epochs * steps_per_epoch
    m_flat = np.zeros(mlp.param_count, dtype=dt)
    v_flat = np.zeros(mlp.param_count, dtype=dt)
    scratch = np.empty(mlp.param_count, dtype=dt)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    one_m_b1, one_m_b2 = 1.0 - beta1, 1.0 - beta2
    # the moment/param arrays together outrun cache; updating in L2-sized
    # chunks keeps the thirteen vector passes per step off main memory
    chunk = 16384
    chunk_views = [
        (m_flat[a : a + chunk], v_flat[a : a + chunk], scratch[a : a + chunk],
         g_flat[a : a + chunk], p_flat[a : a + chunk])
        for a in range(0, mlp.param_count, chunk)
    ]
    workspace = _make_workspace(widths, min(cfg.batch, n), dtype=dt)

    x_all = np.empty((n, widths[0]), dtype=dt)
    y_all = np.empty((n, widths[-1]), dtype=dt)
    x_all[:, -1] = resize
    if not augmenting:
        # zero-range draws are exactly 0.0 and the identity transform passes
        # points through unchanged, so the assembled batches are the raw pairs
        x_all[:, :-1] = pred.reshape(n, -1)
        y_all[:] = gt.reshape(n, -1)

    step = 0
    trace: list[float] = []
    for _ in range(cfg.epochs):
        if augmenting:
            # one bulk block per epoch; draw order stays rotation then shear
            # per sample, in sample order, matching scalar-draw consumption
            u = np.array(aug_rng.uniform_many(2 * n)).reshape(n, 2)
            angles = rot_lo + (rot_hi - rot_lo) * u[:, 0]
            shears = sh_lo + (sh_hi - sh_lo) * u[:, 1]
            ap = _rot_shear_batch(pred, centers, angles, shears)
            ag = _rot_shear_batch(gt, centers, angles, shears)
            x_all[:, :-1] = ap.reshape(n, -1)
            y_all[:] = ag.reshape(n, -1)

        epoch_loss = 0.0
        for start in range(0, n, cfg.batch):
            x = x_all[start : start + cfg.batch]
            y = y_all[start : start + cfg.batch]
            bsz = x.shape[0]
            loss = _l1_backward_into(mlp, x, y, grad_w_views, grad_b_views, workspace)
            if not math.isfinite(loss):
                raise RuntimeError(f"non-finite training loss at step {step}")
            epoch_loss += loss * bsz

            lr = one_cycle_lr(step, total_steps, cfg.base_lr)
            step += 1
            b1c = 1.0 - beta1**step
            b2c = 1.0 - beta2**step
            lr_c = lr / b1c
            for m_, v_, s_, g_, p_ in chunk_views:
                m_ *= beta1
                np.multiply(g_, one_m_b1, out=s_)
                m_ += s_
                v_ *= beta2
                np.multiply(g_, g_, out=s_)
                s_ *= one_m_b2
                v_ += s_
                np.divide(v_, b2c, out=s_)
                np.sqrt(s_, out=s_)
                s_ += eps
                np.divide(m_, s_, out=s_)
                s_ *= lr_c
                p_ -= s_
        trace.append(epoch_loss / n)

    for k in range(mlp.n_layers):
        mlp.weights[k] = mlp.weights[k].astype(np.float64)
        mlp.biases[k] = mlp.biases[k].astype(np.float64)
    return mlp, trace


def mean_l1(mlp: AdapterMLP, pred: np.ndarray, resize: np.ndarray, gt: np.ndarray) -> float:
    """Mean absolute coordinate error over samples, no augmentation."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    x = np.concatenate([pred.reshape(pred.shape[0], -1), np.asarray(resize, dtype=np.float64)[:, None]], axis=1)
    out = adapter_forward(mlp, x)
    diff = out - gt.reshape(gt.shape[0], -1)
    return float(np.abs(diff).sum()) / diff.size


def save_adapter(path, mlp: AdapterMLP, seed: int | None = None, config: AdaptTrainConfig | None = None) -> None:
    mlp.validate()
    header = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "widths": list(mlp.widths),
        "seed": seed,
        "config": None if config is None else asdict(config),
        "param_count": mlp.param_count,
    }
    blob = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
        for pair in zip(mlp.weights, mlp.biases)
        for arr in pair
    )
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("utf-8") + b"\n" + blob)


def load_adapter(path) -> AdapterMLP:
    with open(path, "rb") as f:
        data = f.read()
    nl = data.find(b"\n")
    if nl < 0:
        raise ValueError("model file has no header line")
    header = json.loads(data[:nl].decode("utf-8"))
    if header.get("format") != MODEL_FORMAT:
        raise ValueError("not an adapter model file")
    if header.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {header.get('version')!r}")
    widths = [int(w) for w in header["widths"]]
    flat = np.frombuffer(data[nl + 1 :], dtype="<f8")
    expect = sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))
    if flat.size != expect:
        raise ValueError(f"parameter blob has {flat.size} values, expected {expect}")
    weights, biases, off = [], [], 0
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        weights.append(flat[off : off + n_in * n_out].reshape(n_in, n_out).copy())
        off += n_in * n_out
        biases.append(flat[off : off + n_out].copy())
        off += n_out
    mlp = AdapterMLP(widths=widths, weights=weights, biases=biases)
    mlp.validate()
    return mlp
