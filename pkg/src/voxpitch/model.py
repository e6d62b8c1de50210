"""Forward-only NumPy implementation of the pitch network.

Layout is channels-first ``[N, C, T, F]`` internally; callers pass features
as ``[N, T, 4, F]``. The stack alternates strided grouped "bottleneck"
convolutions, which halve the spectral axis, with dilated residual blocks
that mix information along time. A final unpadded ``1x5`` convolution and a
per-frame fully connected layer produce log-probabilities over 128 MIDI bins.

Weights live in a plain ``dict`` mapping names such as
``layer0.conv.weight`` or ``layer2.a.bn.var`` to arrays. Batch
normalisation runs in inference mode from stored running statistics.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BN_EPS = 1e-5
N_PITCHES = 128
_PNW_MAGIC = b"PNW1"

BOTTLENECK = "bottleneck"
DILATION_RES = "dilation_res"
CONV = "conv"
FULLY_CONNECTED = "fully_connected"


class WeightError(KeyError):
    """Missing or mis-shaped parameters for a model config."""

    def __str__(self):
        return str(self.args[0])


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (3, 3)
    stride: tuple[int, int] = (1, 1)
    groups: int = 1
    dilations: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in (BOTTLENECK, DILATION_RES, CONV, FULLY_CONNECTED):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ValueError(
                f"channels {self.in_channels}->{self.out_channels} not divisible "
                f"by groups={self.groups}")
        if self.kind == DILATION_RES and self.in_channels != self.out_channels:
            raise ValueError("dilation residual block needs in_channels == out_channels")

    @property
    def padding(self) -> tuple[int, int]:
        if self.kind == BOTTLENECK:
            return ((self.kernel[0] - 1) // 2, (self.kernel[1] - 1) // 2)
        return (0, 0)

    def out_bins(self, f: int) -> int:
        if self.kind == BOTTLENECK:
            p = self.padding[1]
            return (f + 2 * p - self.kernel[1]) // self.stride[1] + 1
        if self.kind == CONV:
            return (f - self.kernel[1]) // self.stride[1] + 1
        return f


def bottleneck(cin, cout, kernel=(3, 3), groups=4) -> LayerSpec:
    return LayerSpec(BOTTLENECK, cin, cout, kernel, (1, 2), groups)


def dilation_res(channels, groups=4, dilations=(3, 2)) -> LayerSpec:
    return LayerSpec(DILATION_RES, channels, channels, (3, 3), (1, 1), groups, dilations)


def _default_layers():
    return (
        bottleneck(4, 128, (7, 7), groups=1),
        bottleneck(128, 64, (3, 3), groups=2),
        dilation_res(64),
        bottleneck(64, 64, (3, 3), groups=4),
        dilation_res(64),
        bottleneck(64, 128, (3, 3), groups=4),
        dilation_res(128),
        bottleneck(128, 128, (1, 3), groups=1),
        bottleneck(128, 128, (1, 3), groups=1),
        LayerSpec(CONV, 128, 128, (1, 5)),
        LayerSpec(FULLY_CONNECTED, 128, N_PITCHES, (1, 1)),
    )


@dataclass(frozen=True)
class ModelConfig:
    layers: tuple[LayerSpec, ...] = field(default_factory=_default_layers)
    in_bins: int = 513

    def __post_init__(self):
        convs = [l for l in self.layers if l.kind != FULLY_CONNECTED]
        for a, b in zip(convs, convs[1:]):
            if a.out_channels != b.in_channels:
                raise ValueError(f"channel chain broken: {a} -> {b}")
        if self.layers[-1].kind != FULLY_CONNECTED:
            raise ValueError("last layer must be fully connected")

    def bin_chain(self) -> list[int]:
        """Spectral size after each convolutional layer, starting with the input."""
        chain = [self.in_bins]
        for layer in self.layers[:-1]:
            chain.append(layer.out_bins(chain[-1]))
        return chain

    @property
    def fc_inputs(self) -> int:
        return self.layers[-2].out_channels * self.bin_chain()[-1]

    def receptive_radius(self) -> int:
        """Frames of context each output frame sees on either side."""
        r = 0
        for layer in self.layers[:-1]:
            if layer.kind == DILATION_RES:
                r += sum(d * (layer.kernel[0] - 1) // 2 for d in layer.dilations)
            else:
                r += (layer.kernel[0] - 1) // 2
        return r


# ---------------------------------------------------------------- primitives

def instance_normalize(x: np.ndarray) -> np.ndarray:
    """Standardise each (instance, channel) slice over time and frequency.

    Uses the population standard deviation; constant slices become zero.
    """
    mu = x.mean(axis=(2, 3), keepdims=True)
    sigma = x.std(axis=(2, 3), keepdims=True)
    return (x - mu) / (sigma + (sigma == 0))


def conv2d(x, kernel, bias=None, stride=(1, 1), dilation=(1, 1), groups=1,
           padding=(0, 0)) -> np.ndarray:
    """Grouped, strided, dilated 2-D cross-correlation.

    ``x`` is ``[N, C_in, H, W]`` and ``kernel`` is ``[C_out, C_in/groups, kH, kW]``.
    """
    x = np.asarray(x)
    kernel = np.asarray(kernel)
    n, c_in, h, w = x.shape
    c_out, c_in_g, kh, kw = kernel.shape
    if c_in % groups or c_out % groups or c_in // groups != c_in_g:
        raise ValueError(
            f"conv2d shape mismatch: input {x.shape}, kernel {kernel.shape}, groups={groups}")
    if bias is not None and np.shape(bias) != (c_out,):
        raise ValueError(f"conv2d bias shape {np.shape(bias)} does not match {c_out} outputs")
    (sh, sw), (dh, dw), (ph, pw) = stride, dilation, padding
    h_out = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
    w_out = (w + 2 * pw - dw * (kw - 1) - 1) // sw + 1
    if h_out <= 0 or w_out <= 0:
        raise ValueError(f"conv2d input {x.shape} too small for kernel {kernel.shape}")

    dtype = np.result_type(x, kernel)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    xg = xp.reshape(n, groups, c_in_g, xp.shape[2], xp.shape[3])
    kg = kernel.reshape(groups, c_out // groups, c_in_g * kh * kw).astype(dtype, copy=False)
    out = np.empty((n, groups, c_out // groups, h_out, w_out), dtype=dtype)
    # im2col over blocks of output rows keeps the patch matrix near 16 MB
    step = max(1, (1 << 22) // max(1, n * c_in * kh * kw * w_out))
    for r0 in range(0, h_out, step):
        r1 = min(h_out, r0 + step)
        cols = np.empty((n, groups, c_in_g, kh, kw, r1 - r0, w_out), dtype=dtype)
        for i in range(kh):
            rows = slice(r0 * sh + i * dh, (r1 - 1) * sh + i * dh + 1, sh)
            for j in range(kw):
                cs = slice(j * dw, j * dw + sw * (w_out - 1) + 1, sw)
                cols[:, :, :, i, j] = xg[:, :, :, rows, cs]
        cols = cols.reshape(n, groups, c_in_g * kh * kw, -1)
        out[:, :, :, r0:r1] = (kg @ cols).reshape(n, groups, c_out // groups, r1 - r0, w_out)
    out = out.reshape(n, c_out, h_out, w_out)
    if bias is not None:
        out += np.asarray(bias, dtype=out.dtype)[None, :, None, None]
    return out


def celu(x: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    neg = np.minimum(x, 0)
    neg /= alpha
    np.expm1(neg, out=neg)
    neg *= alpha
    return np.maximum(x, 0) + neg


def batch_norm(x, gamma, beta, mean, var, eps: float = BN_EPS) -> np.ndarray:
    scale = gamma / np.sqrt(var + eps)
    shift = beta - mean * scale
    out = x * scale.astype(x.dtype)[None, :, None, None]
    out += shift.astype(x.dtype)[None, :, None, None]
    return out


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


# ------------------------------------------------------------------- blocks

def _param(weights, name):
    try:
        return weights[name]
    except KeyError:
        raise WeightError(f"missing weight tensor {name!r}") from None


def _conv_celu_bn(x, weights, prefix, stride, dilation, groups, padding):
    y = conv2d(x, _param(weights, f"{prefix}.conv.weight"), _param(weights, f"{prefix}.conv.bias"),
               stride, dilation, groups, padding)
    y = celu(y)
    return batch_norm(y, *(_param(weights, f"{prefix}.bn.{p}")
                           for p in ("gamma", "beta", "mean", "var")))


def bottleneck_block(x, weights, prefix: str, spec: LayerSpec) -> np.ndarray:
    """Strided grouped conv -> CELU -> batch norm; halves the spectral axis."""
    return _conv_celu_bn(x, weights, prefix, spec.stride, (1, 1), spec.groups, spec.padding)


def dilation_res_block(x, weights, prefix: str, spec: LayerSpec) -> np.ndarray:
    if x.shape[1] != spec.in_channels:
        raise ValueError(f"{prefix}: expected {spec.in_channels} channels, got {x.shape[1]}")
    y = x
    for sub, d in zip("ab", spec.dilations):
        y = _conv_celu_bn(y, weights, f"{prefix}.{sub}", (1, 1), (d, d), spec.groups, (d, d))
    return y + x


def forward(features, config: ModelConfig = ModelConfig(), weights=None,
            trace: list | None = None) -> np.ndarray:
    """Per-frame log-probabilities ``[N, T, 128]`` for ``[N, T, 4, F]`` features.

    If ``trace`` is a list, the shape after every layer is appended to it.
    """
    x = np.asarray(features, dtype=np.float32)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[2] != 4 or x.shape[3] != config.in_bins:
        raise ValueError(
            f"expected features [N, T, 4, {config.in_bins}], got {tuple(x.shape)}")
    check_weights(config, weights)
    x = instance_normalize(np.ascontiguousarray(x.transpose(0, 2, 1, 3)))
    if trace is not None:
        trace.append(x.shape)
    for idx, layer in enumerate(config.layers):
        prefix = f"layer{idx}"
        if layer.kind == BOTTLENECK:
            x = bottleneck_block(x, weights, prefix, layer)
        elif layer.kind == DILATION_RES:
            x = dilation_res_block(x, weights, prefix, layer)
        elif layer.kind == CONV:
            x = conv2d(x, weights[f"{prefix}.conv.weight"], weights[f"{prefix}.conv.bias"],
                       layer.stride)
        else:
            n, c, t, f = x.shape
            flat = x.transpose(0, 2, 1, 3).reshape(n, t, c * f)
            x = flat @ weights[f"{prefix}.fc.weight"].T + weights[f"{prefix}.fc.bias"]
            x = log_softmax(celu(x))
        if trace is not None:
            trace.append(x.shape)
    return x


# ------------------------------------------------------------------ weights

def required_shapes(config: ModelConfig = ModelConfig()) -> dict[str, tuple[int, ...]]:
    """Every parameter name the config needs, in canonical order, with its shape."""
    shapes = {}

    def conv_bn(prefix, cin, cout, kernel, groups, with_bn=True):
        shapes[f"{prefix}.conv.weight"] = (cout, cin // groups) + tuple(kernel)
        shapes[f"{prefix}.conv.bias"] = (cout,)
        if with_bn:
            for p in ("gamma", "beta", "mean", "var"):
                shapes[f"{prefix}.bn.{p}"] = (cout,)

    for idx, layer in enumerate(config.layers):
        prefix = f"layer{idx}"
        if layer.kind == BOTTLENECK:
            conv_bn(prefix, layer.in_channels, layer.out_channels, layer.kernel, layer.groups)
        elif layer.kind == DILATION_RES:
            for sub in "ab"[: len(layer.dilations)]:
                conv_bn(f"{prefix}.{sub}", layer.in_channels, layer.out_channels,
                        layer.kernel, layer.groups)
        elif layer.kind == CONV:
            conv_bn(prefix, layer.in_channels, layer.out_channels, layer.kernel,
                    layer.groups, with_bn=False)
        else:
            shapes[f"{prefix}.fc.weight"] = (layer.out_channels, config.fc_inputs)
            shapes[f"{prefix}.fc.bias"] = (layer.out_channels,)
    return shapes


def check_weights(config: ModelConfig, weights) -> None:
    if weights is None:
        raise WeightError("no weights supplied")
    need = required_shapes(config)
    missing = [k for k in need if k not in weights]
    if missing:
        raise WeightError(f"missing weight tensors: {', '.join(missing)}")
    bad = [f"{k} {tuple(np.shape(weights[k]))} != {v}" for k, v in need.items()
           if tuple(np.shape(weights[k])) != v]
    if bad:
        raise WeightError(f"mis-shaped weight tensors: {'; '.join(bad)}")


def random_weights(config: ModelConfig = ModelConfig(), seed: int = 0) -> dict:
    """Untrained weights: uniform +-1/sqrt(fan_in) kernels, mildly perturbed BN stats."""
    rng = np.random.default_rng(seed)
    out = {}
    for name, shape in required_shapes(config).items():
        if name.endswith(".weight"):
            bound = 1.0 / np.sqrt(np.prod(shape[1:]))
            arr = rng.uniform(-bound, bound, shape)
        elif name.endswith(".bias") or name.endswith(".beta") or name.endswith(".mean"):
            arr = rng.uniform(-0.1, 0.1, shape)
        else:  # gamma, var
            arr = rng.uniform(0.5, 1.5, shape)
        out[name] = arr.astype(np.float32)
    return out


def count_parameters(config: ModelConfig = ModelConfig(), weights=None):
    """Trainable parameter count (kernels, biases, BN affine, FC).

    Returns ``(total, rows)`` where each row is ``(layer, kind, count)``.
    Running BN statistics are not trainable and are excluded.
    """
    shapes = required_shapes(config)
    if weights is not None:
        check_weights(config, weights)
    rows = []
    for idx, layer in enumerate(config.layers):
        prefix = f"layer{idx}."
        count = sum(int(np.prod(s)) for k, s in shapes.items()
                    if k.startswith(prefix) and not k.endswith((".mean", ".var")))
        rows.append((f"layer{idx}", layer.kind, count))
    return sum(r[2] for r in rows), rows


def format_parameter_table(config: ModelConfig = ModelConfig()) -> str:
    total, rows = count_parameters(config)
    chain = config.bin_chain()
    lines = [f"{'layer':<8} {'kind':<16} {'bins':>10} {'params':>10}"]
    for (name, kind, count), f_in, f_out in zip(rows, chain + [chain[-1]], chain[1:] + [1]):
        bins = f"{f_in}->{f_out}" if kind != FULLY_CONNECTED else "-"
        lines.append(f"{name:<8} {kind:<16} {bins:>10} {count:>10}")
    lines.append(f"{'total':<8} {'':<16} {'':>10} {total:>10}")
    return "\n".join(lines)


def save_weights(weights: dict, path) -> None:
    """PNW1: magic, ``<u32`` count, then per tensor ``<u16`` name length,
    UTF-8 name, ``u8`` ndim, ``<u32`` dims, row-major float32 data."""
    with open(path, "wb") as fh:
        fh.write(_PNW_MAGIC)
        fh.write(struct.pack("<I", len(weights)))
        for name, arr in weights.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            raw_name = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_weights(path) -> dict:
    raw = Path(path).read_bytes()
    if raw[:4] != _PNW_MAGIC:
        raise ValueError(f"{path}: not a PNW1 weight file (bad magic)")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(raw):
            raise ValueError(f"{path}: truncated at byte {pos}")
        vals = struct.unpack_from(fmt, raw, pos)
        pos += size
        return vals

    (count,) = take("<I")
    out = {}
    for _ in range(count):
        (name_len,) = take("<H")
        name = bytes(take(f"<{name_len}s")[0]).decode("utf-8")
        (ndim,) = take("<B")
        dims = take(f"<{ndim}I") if ndim else ()
        n = int(np.prod(dims)) if dims else 1
        if pos + 4 * n > len(raw):
            raise ValueError(f"{path}: tensor {name!r} truncated at byte {pos}")
        out[name] = np.frombuffer(raw, dtype="<f4", count=n, offset=pos).reshape(dims).copy()
        pos += 4 * n
    if pos != len(raw):
        raise ValueError(f"{path}: {len(raw) - pos} trailing bytes after {count} tensors")
    return out


# --------------------------------------------------------------------- loss

def kl_loss(y, log_yhat) -> float:
    """KL(y || yhat) averaged over voiced frames; silent (all-zero) targets are masked.

    ``y`` holds probability vectors ``[..., 128]``; ``log_yhat`` the model's
    log-probabilities of the same shape.
    """
    y = np.asarray(y, dtype=np.float64)
    log_yhat = np.asarray(log_yhat, dtype=np.float64)
    if y.shape != log_yhat.shape:
        raise ValueError(f"kl_loss shape mismatch: targets {y.shape}, predictions {log_yhat.shape}")
    voiced = y.sum(axis=-1) > 0
    n_voiced = int(voiced.sum())
    if n_voiced == 0:
        return 0.0
    pos = y > 0
    terms = np.where(pos, y * (np.log(np.where(pos, y, 1.0)) - log_yhat), 0.0)
    return float(terms.sum(axis=-1)[voiced].sum() / n_voiced)
