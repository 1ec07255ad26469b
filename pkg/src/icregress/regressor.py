"""1D convolutional angle regressor with hand-written backpropagation.

Each conv stage is conv -> batch-norm -> ReLU -> max-pool -> dropout, followed
by fully connected layers down to a single output. Everything runs in float64
numpy. Training is mini-batch SGD with momentum on the mean squared error of
standardized targets.
"""

from __future__ import annotations

import io
import os
import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

FORMAT_VERSION = 1
_MAGIC = b"ICRGCKPT"


class RegressorError(ValueError):
    pass


class CheckpointError(RegressorError):
    pass


@dataclass(frozen=True)
class ArchitectureDescriptor:
    input_channels: int = 8
    input_timesteps: int = 20
    conv_channels: tuple[int, ...] = (64, 16, 8)
    kernel_size: int = 3
    pool_size: int = 2
    dropout_p: float = 0.3
    fc_widths: tuple[int, ...] = (64, 32, 1)
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        object.__setattr__(self, "fc_widths", tuple(int(w) for w in self.fc_widths))
        if not self.conv_channels:
            raise RegressorError("at least one conv stage is required")
        if not self.fc_widths or self.fc_widths[-1] != 1:
            raise RegressorError("the last fully connected layer must have width 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise RegressorError("dropout_p must lie in [0, 1)")
        if self.flat_size < 1:
            raise RegressorError("pooling reduces the sequence to nothing")

    @property
    def stage_lengths(self) -> list[int]:
        lengths = [self.input_timesteps]
        for _ in self.conv_channels:
            lengths.append(lengths[-1] // self.pool_size)
        return lengths

    @property
    def flat_size(self) -> int:
        return self.conv_channels[-1] * self.stage_lengths[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        d["fc_widths"] = list(self.fc_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureDescriptor":
        return cls(**d)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise RegressorError("epochs must be non-negative")
        if self.batch_size < 1:
            raise RegressorError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise RegressorError("learning_rate must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class RegressorParams:
    descriptor: ArchitectureDescriptor
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def __eq__(self, other) -> bool:
        if not isinstance(other, RegressorParams):
            return NotImplemented
        return (
            self.descriptor == other.descriptor
            and self.format_version == other.format_version
            and list(self.tensors) == list(other.tensors)
            and all(
                a.shape == b.shape and np.array_equal(a, b)
                for a, b in zip(self.tensors.values(), other.tensors.values())
            )
        )

    def copy(self) -> "RegressorParams":
        return RegressorParams(self.descriptor, {k: v.copy() for k, v in self.tensors.items()},
                               self.format_version)

    def n_learnable(self) -> int:
        return int(sum(self.tensors[k].size for k in learnable_names(self.descriptor)))


# --------------------------------------------------------------------------
# parameter layout


def tensor_layout(desc: ArchitectureDescriptor) -> list[tuple[str, tuple[int, ...]]]:
    """Declared order and shape of every stored tensor."""
    layout: list[tuple[str, tuple[int, ...]]] = []
    c_in = desc.input_channels
    for i, c_out in enumerate(desc.conv_channels):
        layout += [
            (f"conv{i}.W", (c_out, c_in, desc.kernel_size)),
            (f"conv{i}.b", (c_out,)),
            (f"bn{i}.gamma", (c_out,)),
            (f"bn{i}.beta", (c_out,)),
            (f"bn{i}.running_mean", (c_out,)),
            (f"bn{i}.running_var", (c_out,)),
        ]
        c_in = c_out
    n_in = desc.flat_size
    for j, n_out in enumerate(desc.fc_widths):
        layout += [(f"fc{j}.W", (n_out, n_in)), (f"fc{j}.b", (n_out,))]
        n_in = n_out
    layout += [
        ("norm.x_mean", (desc.input_channels,)),
        ("norm.x_std", (desc.input_channels,)),
        ("norm.y_mean", ()),
        ("norm.y_std", ()),
    ]
    return layout


def learnable_names(desc: ArchitectureDescriptor) -> list[str]:
    return [
        name
        for name, _ in tensor_layout(desc)
        if not (name.startswith("norm.") or "running_" in name)
    ]


def init_params(desc: ArchitectureDescriptor, seed=0) -> RegressorParams:
    """Fan-in scaled uniform weights, zero biases, identity batch-norm."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in tensor_layout(desc):
        if name.endswith(".W"):
            fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            tensors[name] = rng.uniform(-bound, bound, size=shape)
        elif name.endswith(("gamma", "running_var", "x_std", "y_std")):
            tensors[name] = np.ones(shape)
        else:
            tensors[name] = np.zeros(shape)
    return RegressorParams(desc, tensors)


def parameter_count(desc: ArchitectureDescriptor = ArchitectureDescriptor()) -> int:
    return int(sum(np.prod(s) for n, s in tensor_layout(desc) if n in set(learnable_names(desc))))


# --------------------------------------------------------------------------
# forward / backward


def _pad(desc: ArchitectureDescriptor) -> tuple[int, int]:
    k = desc.kernel_size
    return (k - 1) // 2, k // 2


def _check_input(x: np.ndarray, desc: ArchitectureDescriptor) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 3 or x.shape[1:] != (desc.input_channels, desc.input_timesteps):
        raise RegressorError(
            f"expected input shape (N, {desc.input_channels}, {desc.input_timesteps}), got {x.shape}"
        )
    return x


def _forward(
    p: RegressorParams,
    x: np.ndarray,
    bn_mode: str = "running",
    dropout_rng: np.random.Generator | None = None,
):
    """Scalar outputs in standardized units plus the cache needed by ``_backward``.

    ``bn_mode`` is "batch" (normalize with batch statistics) or "running".
    Dropout is applied only when ``dropout_rng`` is given.
    """
    d = p.descriptor
    t = p.tensors
    n = x.shape[0]
    h = (x - t["norm.x_mean"][None, :, None]) / t["norm.x_std"][None, :, None]
    left, right = _pad(d)
    k = d.kernel_size
    caches = []
    for i, c_out in enumerate(d.conv_channels):
        c_in, length = h.shape[1], h.shape[2]
        hp = np.pad(h, ((0, 0), (0, 0), (left, right)))
        cols = sliding_window_view(hp, k, axis=2)  # (N, C_in, L, k)
        cols = cols.transpose(0, 2, 1, 3).reshape(n * length, c_in * k)
        w = t[f"conv{i}.W"].reshape(c_out, c_in * k)
        z = (cols @ w.T + t[f"conv{i}.b"]).reshape(n, length, c_out).transpose(0, 2, 1)

        if bn_mode == "batch":
            mu = z.mean(axis=(0, 2))
            var = z.var(axis=(0, 2))
        else:
            mu = t[f"bn{i}.running_mean"]
            var = t[f"bn{i}.running_var"]
        inv_std = 1.0 / np.sqrt(var + d.bn_eps)
        zhat = (z - mu[None, :, None]) * inv_std[None, :, None]
        y = t[f"bn{i}.gamma"][None, :, None] * zhat + t[f"bn{i}.beta"][None, :, None]

        a = np.maximum(y, 0.0)
        l_out = length // d.pool_size
        win = a[:, :, : l_out * d.pool_size].reshape(n, c_out, l_out, d.pool_size)
        arg = win.argmax(axis=3)
        pooled = np.take_along_axis(win, arg[..., None], axis=3)[..., 0]

        mask = None
        if dropout_rng is not None and d.dropout_p > 0:
            mask = (dropout_rng.random(pooled.shape) >= d.dropout_p) / (1.0 - d.dropout_p)
            pooled = pooled * mask
        caches.append(dict(cols=cols, zhat=zhat, inv_std=inv_std, y=y, arg=arg,
                           length=length, mask=mask, mu=mu, var=var))
        h = pooled

    flat = h.reshape(n, -1)
    fc_in = []
    for j, _ in enumerate(d.fc_widths):
        fc_in.append(flat)
        flat = flat @ t[f"fc{j}.W"].T + t[f"fc{j}.b"]
        if j < len(d.fc_widths) - 1:
            flat = np.maximum(flat, 0.0)
    out = flat[:, 0]
    return out, dict(conv=caches, fc_in=fc_in, conv_out_shape=h.shape, bn_mode=bn_mode)


def _backward(p: RegressorParams, cache, dout: np.ndarray) -> dict[str, np.ndarray]:
    d = p.descriptor
    t = p.tensors
    grads: dict[str, np.ndarray] = {}
    n = dout.shape[0]
    g = dout[:, None]
    nfc = len(d.fc_widths)
    for j in reversed(range(nfc)):
        inp = cache["fc_in"][j]
        grads[f"fc{j}.W"] = g.T @ inp
        grads[f"fc{j}.b"] = g.sum(axis=0)
        g = g @ t[f"fc{j}.W"]
        if j > 0:
            g = g * (inp > 0)  # ReLU after the previous FC layer

    g = g.reshape(cache["conv_out_shape"])
    left, right = _pad(d)
    k = d.kernel_size
    for i in reversed(range(len(d.conv_channels))):
        c = cache["conv"][i]
        c_out = d.conv_channels[i]
        c_in = d.input_channels if i == 0 else d.conv_channels[i - 1]
        length = c["length"]
        if c["mask"] is not None:
            g = g * c["mask"]
        l_out = g.shape[2]
        dwin = np.zeros((n, c_out, l_out, d.pool_size))
        np.put_along_axis(dwin, c["arg"][..., None], g[..., None], axis=3)
        da = np.zeros((n, c_out, length))
        da[:, :, : l_out * d.pool_size] = dwin.reshape(n, c_out, -1)
        dy = da * (c["y"] > 0)

        zhat = c["zhat"]
        grads[f"bn{i}.gamma"] = (dy * zhat).sum(axis=(0, 2))
        grads[f"bn{i}.beta"] = dy.sum(axis=(0, 2))
        dzhat = dy * t[f"bn{i}.gamma"][None, :, None]
        inv_std = c["inv_std"][None, :, None]
        if cache["bn_mode"] == "batch":
            m = n * length
            dz = (inv_std / m) * (
                m * dzhat
                - dzhat.sum(axis=(0, 2), keepdims=True)
                - zhat * (dzhat * zhat).sum(axis=(0, 2), keepdims=True)
            )
        else:
            dz = dzhat * inv_std

        d2 = dz.transpose(0, 2, 1).reshape(n * length, c_out)
        w = t[f"conv{i}.W"].reshape(c_out, c_in * k)
        grads[f"conv{i}.W"] = (d2.T @ c["cols"]).reshape(c_out, c_in, k)
        grads[f"conv{i}.b"] = d2.sum(axis=0)
        if i == 0:
            break
        dcols = (d2 @ w).reshape(n, length, c_in, k)
        dhp = np.zeros((n, c_in, length + left + right))
        for j in range(k):
            dhp[:, :, j : j + length] += dcols[:, :, :, j].transpose(0, 2, 1)
        g = dhp[:, :, left : left + length]
    return grads


def _standardize_targets(p: RegressorParams, y: np.ndarray) -> np.ndarray:
    return (np.asarray(y, dtype=float) - p.tensors["norm.y_mean"]) / p.tensors["norm.y_std"]


def loss_and_grads(
    params: RegressorParams,
    x: np.ndarray,
    y: np.ndarray,
    bn_mode: str = "running",
    dropout_rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """MSE on standardized targets and its gradient w.r.t. every learnable tensor."""
    x = _check_input(x, params.descriptor)
    target = _standardize_targets(params, y)
    out, cache = _forward(params, x, bn_mode, dropout_rng)
    resid = out - target
    loss = float(np.mean(resid**2))
    grads = _backward(params, cache, 2.0 * resid / len(resid))
    return loss, grads


def mse(params: RegressorParams, x: np.ndarray, y: np.ndarray, bn_mode: str = "running") -> float:
    out, _ = _forward(params, _check_input(x, params.descriptor), bn_mode)
    return float(np.mean((out - _standardize_targets(params, y)) ** 2))


# --------------------------------------------------------------------------
# training


def _streams(seed) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    init_ss, shuffle_ss, drop_ss = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(init_ss), np.random.default_rng(shuffle_ss),
            np.random.default_rng(drop_ss))


def _fit_normalization(params: RegressorParams, x: np.ndarray, y: np.ndarray) -> None:
    t = params.tensors
    t["norm.x_mean"] = x.mean(axis=(0, 2))
    std = x.std(axis=(0, 2))
    t["norm.x_std"] = np.where(std > 1e-8, std, 1.0)
    t["norm.y_mean"] = np.array(float(np.mean(y)))
    ystd = float(np.std(y))
    t["norm.y_std"] = np.array(ystd if ystd > 1e-8 else 1.0)


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    perm = rng.permutation(n)
    for s in range(0, n, batch_size):
        yield perm[s : s + batch_size]


def _run_sgd(
    params: RegressorParams,
    x: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    shuffle_rng: np.random.Generator,
    dropout_rng: np.random.Generator,
    on_epoch: Callable[[int, RegressorParams], None] | None = None,
) -> RegressorParams:
    d = params.descriptor
    t = params.tensors
    names = learnable_names(d)
    velocity = {k: np.zeros_like(t[k]) for k in names}
    target = _standardize_targets(params, y)
    bn_keep = d.bn_momentum
    for epoch in range(config.epochs):
        for idx in _batches(len(x), config.batch_size, shuffle_rng):
            xb, tb = x[idx], target[idx]
            out, cache = _forward(params, xb, "batch", dropout_rng)
            grads = _backward(params, cache, 2.0 * (out - tb) / len(idx))
            for k in names:
                v = velocity[k]
                v *= config.momentum
                v += grads[k]
                t[k] -= config.learning_rate * v
            for i, c in enumerate(cache["conv"]):
                m = len(idx) * c["length"]
                unbiased = c["var"] * m / max(m - 1, 1)
                t[f"bn{i}.running_mean"] = bn_keep * t[f"bn{i}.running_mean"] + (1 - bn_keep) * c["mu"]
                t[f"bn{i}.running_var"] = bn_keep * t[f"bn{i}.running_var"] + (1 - bn_keep) * unbiased
        if on_epoch is not None:
            on_epoch(epoch, params)
    return params


def _check_data(x, y, desc: ArchitectureDescriptor) -> tuple[np.ndarray, np.ndarray]:
    x = _check_input(x, desc)
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(x) == 0:
        raise RegressorError("empty dataset")
    if len(x) != len(y):
        raise RegressorError(f"{len(x)} feature windows but {len(y)} targets")
    return x, y


def train(
    features,
    targets,
    config: TrainConfig = TrainConfig(),
    descriptor: ArchitectureDescriptor = ArchitectureDescriptor(),
    on_epoch: Callable[[int, RegressorParams], None] | None = None,
) -> RegressorParams:
    """Train from a seeded random initialization."""
    x, y = _check_data(features, targets, descriptor)
    if config.epochs < 1:
        raise RegressorError("train needs at least one epoch")
    init_rng, shuffle_rng, drop_rng = _streams(config.seed)
    params = init_params(descriptor, init_rng)
    _fit_normalization(params, x, y)
    return _run_sgd(params, x, y, config, shuffle_rng, drop_rng, on_epoch)


def finetune(
    features,
    targets,
    init: RegressorParams,
    config: TrainConfig = TrainConfig(),
    on_epoch: Callable[[int, RegressorParams], None] | None = None,
) -> RegressorParams:
    """Continue training from ``init``; normalization statistics are kept, momentum restarts at zero."""
    x, y = _check_data(features, targets, init.descriptor)
    _, shuffle_rng, drop_rng = _streams(config.seed)
    return _run_sgd(init.copy(), x, y, config, shuffle_rng, drop_rng, on_epoch)


def predict(features, params: RegressorParams) -> np.ndarray:
    """Deterministic inference in degrees: no dropout, running batch-norm statistics."""
    x = _check_input(features, params.descriptor)
    if len(x) == 0:
        return np.zeros(0)
    out, _ = _forward(params, x, "running")
    return out * params.tensors["norm.y_std"] + params.tensors["norm.y_mean"]


# --------------------------------------------------------------------------
# gradient verification


def _stacked_mse(
    params: RegressorParams,
    x: np.ndarray,
    target: np.ndarray,
    override: dict[str, np.ndarray],
    bn_mode: str,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """MSE for a stack of parameter variants at once, plus activation patterns.

    Tensors named in ``override`` carry a leading variant axis; all others are
    shared. Activations keep a leading axis that broadcasts, so layers upstream
    of the perturbed tensor are computed once. The returned patterns (ReLU
    signs and pool winners per layer) let callers detect kink crossings.
    """
    d = params.descriptor

    def get(name):
        v = override.get(name)
        return v if v is not None else params.tensors[name][None]

    t = params.tensors
    patterns = []
    h = ((x - t["norm.x_mean"][None, :, None]) / t["norm.x_std"][None, :, None])[None]
    left, right = _pad(d)
    k = d.kernel_size
    for i, c_out in enumerate(d.conv_channels):
        b, n, c_in, length = h.shape
        hp = np.pad(h, ((0, 0), (0, 0), (0, 0), (left, right)))
        cols = sliding_window_view(hp, k, axis=3).transpose(0, 1, 3, 2, 4).reshape(b, n * length, c_in * k)
        w = get(f"conv{i}.W")
        w = w.reshape(w.shape[0], c_out, c_in * k)
        z = cols @ w.transpose(0, 2, 1) + get(f"conv{i}.b")[:, None, :]
        z = z.reshape(z.shape[0], n, length, c_out).transpose(0, 1, 3, 2)
        if bn_mode == "batch":
            mu = z.mean(axis=(1, 3))
            var = z.var(axis=(1, 3))
        else:
            mu = t[f"bn{i}.running_mean"][None]
            var = t[f"bn{i}.running_var"][None]
        zhat = (z - mu[:, None, :, None]) / np.sqrt(var + d.bn_eps)[:, None, :, None]
        y = get(f"bn{i}.gamma")[:, None, :, None] * zhat + get(f"bn{i}.beta")[:, None, :, None]
        a = np.maximum(y, 0.0)
        l_out = length // d.pool_size
        win = a[..., : l_out * d.pool_size].reshape(a.shape[0], n, c_out, l_out, d.pool_size)
        patterns += [y > 0, win.argmax(axis=4)]
        h = win.max(axis=4)
    flat = h.reshape(h.shape[0], h.shape[1], -1)
    for j in range(len(d.fc_widths)):
        flat = flat @ get(f"fc{j}.W").transpose(0, 2, 1) + get(f"fc{j}.b")[:, None, :]
        if j < len(d.fc_widths) - 1:
            patterns.append(flat > 0)
            flat = np.maximum(flat, 0.0)
    return np.mean((flat[..., 0] - target[None]) ** 2, axis=1), patterns


@dataclass
class GradientCheckReport:
    max_relative_error: float
    n_checked: int
    n_kink_skipped: int
    worst_parameter: str


def gradient_check_report(
    params: RegressorParams,
    batch: tuple[np.ndarray, np.ndarray],
    eps: float = 1e-5,
    bn_mode: str = "running",
    floor: float = 1e-6,
    chunk: int = 256,
) -> GradientCheckReport:
    """Compare backprop against central differences for every learnable element.

    Relative error per element is ``|a - n| / max(|a| + |n|, floor)``.
    Elements whose +-eps perturbation flips a ReLU sign or a max-pool winner
    sit on a kink where the loss is not differentiable; they are counted and
    excluded from the maximum.
    """
    x, y = batch
    x = _check_input(x, params.descriptor)
    target = _standardize_targets(params, y)
    analytic = loss_and_grads(params, x, y, bn_mode)[1]
    _, ref_patterns = _stacked_mse(params, x, target, {}, bn_mode)
    worst, worst_name, checked, skipped = 0.0, "", 0, 0
    for name in learnable_names(params.descriptor):
        base = params.tensors[name]
        ga = analytic[name].reshape(-1)
        for s in range(0, base.size, chunk):
            idx = np.arange(s, min(s + chunk, base.size))
            diff = np.zeros(len(idx))
            crossed = np.zeros(len(idx), dtype=bool)
            for sign in (1.0, -1.0):
                stack = np.repeat(base.reshape(1, -1), len(idx), axis=0)
                stack[np.arange(len(idx)), idx] += sign * eps
                losses, pats = _stacked_mse(
                    params, x, target, {name: stack.reshape((len(idx),) + base.shape)}, bn_mode
                )
                diff += sign * losses
                for pat, ref in zip(pats, ref_patterns):
                    if pat.shape[0] == len(idx):
                        crossed |= (pat != ref).reshape(len(idx), -1).any(axis=1)
            num = diff / (2.0 * eps)
            rel = np.abs(ga[idx] - num) / np.maximum(np.abs(ga[idx]) + np.abs(num), floor)
            rel = rel[~crossed]
            checked += rel.size
            skipped += int(crossed.sum())
            if rel.size and rel.max() > worst:
                worst, worst_name = float(rel.max()), name
    return GradientCheckReport(worst, checked, skipped, worst_name)


def gradient_check(
    params: RegressorParams,
    batch: tuple[np.ndarray, np.ndarray],
    eps: float = 1e-5,
    bn_mode: str = "running",
) -> float:
    """Maximum relative error of the analytic MSE gradient; see ``gradient_check_report``."""
    return gradient_check_report(params, batch, eps, bn_mode).max_relative_error


# --------------------------------------------------------------------------
# checkpoints


def serialize_params(params: RegressorParams) -> bytes:
    """Magic, version, JSON header length, JSON header, float64 LE payload, CRC32."""
    layout = tensor_layout(params.descriptor)
    if [n for n, _ in layout] != list(params.tensors):
        raise CheckpointError("tensor set does not match the descriptor layout")
    header = json.dumps(
        {
            "format_version": params.format_version,
            "descriptor": params.descriptor.to_dict(),
            "tensors": [[name, list(shape)] for name, shape in layout],
            "dtype": "<f8",
            "order": "C",
        },
        sort_keys=True,
    ).encode()
    payload = io.BytesIO()
    for name, shape in layout:
        arr = np.asarray(params.tensors[name], dtype="<f8", order="C")
        if arr.shape != shape:
            raise CheckpointError(f"{name}: shape {arr.shape} does not match {shape}")
        payload.write(arr.tobytes())
    body = payload.getvalue()
    return (
        _MAGIC
        + struct.pack("<II", params.format_version, len(header))
        + header
        + body
        + struct.pack("<I", zlib.crc32(body))
    )


def deserialize_params(blob: bytes) -> RegressorParams:
    if len(blob) < len(_MAGIC) + 8 or not blob.startswith(_MAGIC):
        raise CheckpointError("corrupt checkpoint: bad magic")
    version, hlen = struct.unpack_from("<II", blob, len(_MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = len(_MAGIC) + 8
    try:
        header = json.loads(blob[pos : pos + hlen].decode())
        desc = ArchitectureDescriptor.from_dict(header["descriptor"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"corrupt checkpoint: unreadable header ({exc})") from None
    pos += hlen
    layout = tensor_layout(desc)
    if [[n, list(s)] for n, s in layout] != header["tensors"]:
        raise CheckpointError("corrupt checkpoint: tensor table does not match descriptor")
    nbytes = 8 * sum(int(np.prod(s)) for _, s in layout)
    if len(blob) != pos + nbytes + 4:
        raise CheckpointError("corrupt checkpoint: truncated or padded payload")
    body = blob[pos : pos + nbytes]
    (crc,) = struct.unpack_from("<I", blob, pos + nbytes)
    if zlib.crc32(body) != crc:
        raise CheckpointError("corrupt checkpoint: checksum mismatch")
    tensors = {}
    off = 0
    for name, shape in layout:
        size = int(np.prod(shape))
        tensors[name] = np.frombuffer(body, dtype="<f8", count=size, offset=off).reshape(shape).astype(float)
        off += 8 * size
    return RegressorParams(desc, tensors, version)


def save_params(params: RegressorParams, path) -> None:
    """Atomic write (temp file then rename)."""
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(serialize_params(params))
    os.replace(tmp, path)


def load_params(path) -> RegressorParams:
    with open(path, "rb") as fh:
        return deserialize_params(fh.read())
