"""Channel and spatial attention blocks plus the fast pyramid-pooling block.

Four parameterized forward passes built from the kernels in
:mod:`crackscope.ops`:

* ``eca``  -- channel reweighting: global average pool, odd-size 1-D
  convolution across channels, sigmoid, channel-wise scale.
* ``cam``  -- channel attention from avg- and max-pooled vectors pushed
  through one shared two-layer MLP, summed, squashed by sigmoid.
* ``sam``  -- spatial attention from the per-pixel channel max/mean maps,
  concatenated and convolved with a 7x7 kernel.
* ``cbam`` -- ``cam`` followed by ``sam``.
* ``sppf`` -- 1x1 reduce convolution, three chained 5x5 stride-1 max pools,
  channel concat, 1x1 expand convolution.

Each block has an exact input gradient obtained by chaining the op-level
vector-Jacobian products in reverse; there is no autodiff graph.
Parameter containers are frozen dataclasses, safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidKernel, InvalidShape
from .ops import (
    broadcast_mul,
    channel_stats,
    concat_channels,
    conv1d_channels,
    conv2d,
    global_avg_pool,
    global_max_pool,
    maxpool2d,
    relu,
    sigmoid,
    vjp,
)
from .tensor import as_nchw

__all__ = [
    "EcaParams",
    "CamParams",
    "SamParams",
    "SppfParams",
    "PipelineParams",
    "eca_kernel_size",
    "eca_weights",
    "eca_forward",
    "eca_input_grad",
    "cam_weights",
    "cam_forward",
    "cam_input_grad",
    "sam_map",
    "sam_forward",
    "sam_input_grad",
    "cbam_forward",
    "cbam_input_grad",
    "sppf_forward",
    "sppf_input_grad",
    "demo_pipeline",
    "pipeline_input_grad",
    "init_eca",
    "init_cam",
    "init_sam",
    "init_sppf",
    "init_pipeline",
    "save_params",
    "load_params",
]


# ---------------------------------------------------------------------------
# parameter containers


@dataclass(frozen=True, eq=False)
class EcaParams:
    """Odd-length channel-convolution kernel plus the adaptive-size constants."""

    kernel: np.ndarray
    gamma: float = 2.0
    b_offset: float = 1.0

    def __post_init__(self):
        kernel = np.asarray(self.kernel, dtype=np.float64)
        if kernel.ndim != 1 or kernel.size < 1 or kernel.size % 2 == 0:
            raise InvalidKernel(f"kernel must be a 1-D odd-length vector, got {kernel.shape}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        object.__setattr__(self, "kernel", kernel)


@dataclass(frozen=True, eq=False)
class CamParams:
    """Shared two-layer MLP applied to both pooled channel vectors."""

    reduction: int
    w1: np.ndarray  # [C/r, C]
    b1: np.ndarray  # [C/r]
    w2: np.ndarray  # [C, C/r]
    b2: np.ndarray  # [C]

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=np.float64)
        b1 = np.asarray(self.b1, dtype=np.float64)
        w2 = np.asarray(self.w2, dtype=np.float64)
        b2 = np.asarray(self.b2, dtype=np.float64)
        if self.reduction < 1:
            raise InvalidShape(f"reduction must be >= 1, got {self.reduction}")
        if w1.ndim != 2 or w2.ndim != 2 or b1.ndim != 1 or b2.ndim != 1:
            raise InvalidShape("MLP parameters must be matrix/vector/matrix/vector")
        hidden, channels = w1.shape
        if channels % self.reduction != 0 or channels // self.reduction != hidden:
            raise InvalidShape(
                f"{channels} channels not divisible into hidden size {hidden}"
                f" by reduction {self.reduction}"
            )
        if w2.shape != (channels, hidden) or b1.shape != (hidden,) or b2.shape != (channels,):
            raise InvalidShape(
                f"inconsistent MLP shapes: w1 {w1.shape}, b1 {b1.shape},"
                f" w2 {w2.shape}, b2 {b2.shape}"
            )
        for name, arr in (("w1", w1), ("b1", b1), ("w2", w2), ("b2", b2)):
            object.__setattr__(self, name, arr)

    @property
    def channels(self) -> int:
        return self.w1.shape[1]


@dataclass(frozen=True, eq=False)
class SamParams:
    """7x7 convolution over the stacked channel-max/channel-mean maps."""

    kernel: np.ndarray  # [1, 2, 7, 7]
    bias: float = 0.0

    PAD = 3  # keeps the spatial extent; fixed by the 7x7 kernel

    def __post_init__(self):
        kernel = np.asarray(self.kernel, dtype=np.float64)
        if kernel.shape != (1, 2, 7, 7):
            raise InvalidShape(f"spatial-attention kernel must be [1, 2, 7, 7], got {kernel.shape}")
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "bias", float(self.bias))


@dataclass(frozen=True, eq=False)
class SppfParams:
    """1x1 reduce/expand convolutions around three chained 5x5 max pools."""

    reduce_kernel: np.ndarray  # [Cmid, Cin, 1, 1]
    reduce_bias: np.ndarray  # [Cmid]
    expand_kernel: np.ndarray  # [Cout, 4*Cmid, 1, 1]
    expand_bias: np.ndarray  # [Cout]

    POOL = 5
    STRIDE = 1
    PAD = 2

    def __post_init__(self):
        rk = np.asarray(self.reduce_kernel, dtype=np.float64)
        rb = np.asarray(self.reduce_bias, dtype=np.float64)
        ek = np.asarray(self.expand_kernel, dtype=np.float64)
        eb = np.asarray(self.expand_bias, dtype=np.float64)
        if rk.ndim != 4 or rk.shape[2:] != (1, 1) or ek.ndim != 4 or ek.shape[2:] != (1, 1):
            raise InvalidShape("reduce/expand kernels must be 1x1 convolutions")
        cmid = rk.shape[0]
        if ek.shape[1] != 4 * cmid:
            raise InvalidShape(
                f"expand kernel consumes {ek.shape[1]} channels, concat provides {4 * cmid}"
            )
        if rb.shape != (cmid,) or eb.shape != (ek.shape[0],):
            raise InvalidShape("bias lengths do not match their kernels")
        for name, arr in (
            ("reduce_kernel", rk),
            ("reduce_bias", rb),
            ("expand_kernel", ek),
            ("expand_bias", eb),
        ):
            object.__setattr__(self, name, arr)


@dataclass(frozen=True, eq=False)
class PipelineParams:
    """Front 3x3 convolution plus one of each block, for the demo composition."""

    conv_kernel: np.ndarray  # [C, Cin, 3, 3]
    conv_bias: np.ndarray  # [C]
    eca: EcaParams
    cam: CamParams
    sam: SamParams
    sppf: SppfParams


# ---------------------------------------------------------------------------
# channel attention (1-D convolution flavour)


def eca_kernel_size(channels: int, gamma: float = 2.0, b_offset: float = 1.0) -> int:
    """Adaptive channel-kernel size: smallest odd integer not below
    ``|log2(C)/gamma + b_offset/gamma|``, floored at 3."""
    if channels < 1:
        raise InvalidShape(f"channel count must be >= 1, got {channels}")
    target = abs(math.log2(channels) / gamma + b_offset / gamma)
    k = math.ceil(target)
    if k % 2 == 0:
        k += 1
    return max(k, 3)


def eca_weights(x, p: EcaParams) -> np.ndarray:
    """Channel weights ``[N, C, 1, 1]``, each strictly inside (0, 1)."""
    x = as_nchw(x, "x")
    c = x.shape[1]
    if p.kernel.size > 2 * c - 1:
        raise InvalidShape(f"kernel length {p.kernel.size} exceeds 2*C-1 = {2 * c - 1}")
    return sigmoid(conv1d_channels(global_avg_pool(x), p.kernel))


def eca_forward(x, p: EcaParams) -> np.ndarray:
    x = as_nchw(x, "x")
    return broadcast_mul(x, eca_weights(x, p))


def eca_input_grad(x, p: EcaParams, upstream) -> np.ndarray:
    """Exact gradient of ``sum(upstream * eca_forward(x, p))`` w.r.t. ``x``."""
    x = as_nchw(x, "x")
    pooled = global_avg_pool(x)
    z = conv1d_channels(pooled, p.kernel)
    w = sigmoid(z)
    dx, dw = vjp("broadcast_mul", (x, w), upstream)
    (dz,) = vjp("sigmoid", (z,), dw)
    dpooled, _ = vjp("conv1d_channels", (pooled, p.kernel), dz)
    (dx_pool,) = vjp("global_avg_pool", (x,), dpooled)
    return dx + dx_pool


# ---------------------------------------------------------------------------
# channel attention (shared-MLP flavour)


def _mlp(v: np.ndarray, p: CamParams) -> np.ndarray:
    """Shared two-layer MLP on batched row vectors ``[N, C]``."""
    hidden = relu(v @ p.w1.T + p.b1)
    return hidden @ p.w2.T + p.b2


def _mlp_input_grad(v: np.ndarray, p: CamParams, dz: np.ndarray) -> np.ndarray:
    pre = v @ p.w1.T + p.b1
    return ((dz @ p.w2) * (pre > 0.0)) @ p.w1


def cam_weights(x, p: CamParams) -> np.ndarray:
    """Channel weights ``[N, C, 1, 1]`` from the summed avg/max MLP logits."""
    x = as_nchw(x, "x")
    n, c = x.shape[:2]
    if c != p.channels:
        raise InvalidShape(f"input has {c} channels, parameters expect {p.channels}")
    avg = global_avg_pool(x)[:, :, 0, 0]
    mx = global_max_pool(x)[:, :, 0, 0]
    logits = _mlp(avg, p) + _mlp(mx, p)
    return sigmoid(logits).reshape(n, c, 1, 1)


def cam_forward(x, p: CamParams) -> np.ndarray:
    x = as_nchw(x, "x")
    return broadcast_mul(x, cam_weights(x, p))


def cam_input_grad(x, p: CamParams, upstream) -> np.ndarray:
    x = as_nchw(x, "x")
    n, c = x.shape[:2]
    avg4 = global_avg_pool(x)
    max4 = global_max_pool(x)
    logits = _mlp(avg4[:, :, 0, 0], p) + _mlp(max4[:, :, 0, 0], p)
    w = sigmoid(logits).reshape(n, c, 1, 1)
    dx, dw = vjp("broadcast_mul", (x, w), upstream)
    (dlogits,) = vjp("sigmoid", (logits,), dw[:, :, 0, 0])
    davg = _mlp_input_grad(avg4[:, :, 0, 0], p, dlogits).reshape(n, c, 1, 1)
    dmax = _mlp_input_grad(max4[:, :, 0, 0], p, dlogits).reshape(n, c, 1, 1)
    (dx_avg,) = vjp("global_avg_pool", (x,), davg)
    (dx_max,) = vjp("global_max_pool", (x,), dmax)
    return dx + dx_avg + dx_max


# ---------------------------------------------------------------------------
# spatial attention


def sam_map(x, p: SamParams) -> np.ndarray:
    """Spatial weight map ``[N, 1, H, W]``, values strictly inside (0, 1)."""
    x = as_nchw(x, "x")
    mx, mean = channel_stats(x)
    stacked = concat_channels(mx, mean)
    z = conv2d(stacked, p.kernel, np.array([p.bias]), pad=SamParams.PAD)
    return sigmoid(z)


def sam_forward(x, p: SamParams) -> np.ndarray:
    x = as_nchw(x, "x")
    return broadcast_mul(x, sam_map(x, p))


def sam_input_grad(x, p: SamParams, upstream) -> np.ndarray:
    x = as_nchw(x, "x")
    mx, mean = channel_stats(x)
    stacked = concat_channels(mx, mean)
    bias = np.array([p.bias])
    z = conv2d(stacked, p.kernel, bias, pad=SamParams.PAD)
    m = sigmoid(z)
    dx, dm = vjp("broadcast_mul", (x, m), upstream)
    (dz,) = vjp("sigmoid", (z,), dm)
    dstacked = vjp("conv2d", (stacked, p.kernel, bias, SamParams.PAD), dz)[0]
    dmx, dmean = vjp("concat_channels", (mx, mean), dstacked)
    (dx_stats,) = vjp("channel_stats", (x,), (dmx, dmean))
    return dx + dx_stats


# ---------------------------------------------------------------------------
# composite block and pyramid pooling


def cbam_forward(x, cam: CamParams, sam: SamParams) -> np.ndarray:
    """Channel attention first, spatial attention on its output."""
    return sam_forward(cam_forward(x, cam), sam)


def cbam_input_grad(x, cam: CamParams, sam: SamParams, upstream) -> np.ndarray:
    y = cam_forward(x, cam)
    dy = sam_input_grad(y, sam, upstream)
    return cam_input_grad(x, cam, dy)


def sppf_forward(x, p: SppfParams) -> np.ndarray:
    """Reduce, pool three times, concat the four stages, expand."""
    x = as_nchw(x, "x")
    y0 = conv2d(x, p.reduce_kernel, p.reduce_bias)
    y1 = maxpool2d(y0, p.POOL, p.STRIDE, p.PAD)
    y2 = maxpool2d(y1, p.POOL, p.STRIDE, p.PAD)
    y3 = maxpool2d(y2, p.POOL, p.STRIDE, p.PAD)
    stacked = np.concatenate([y0, y1, y2, y3], axis=1)
    return conv2d(stacked, p.expand_kernel, p.expand_bias)


def sppf_input_grad(x, p: SppfParams, upstream) -> np.ndarray:
    x = as_nchw(x, "x")
    y0 = conv2d(x, p.reduce_kernel, p.reduce_bias)
    y1 = maxpool2d(y0, p.POOL, p.STRIDE, p.PAD)
    y2 = maxpool2d(y1, p.POOL, p.STRIDE, p.PAD)
    stacked = np.concatenate(
        [y0, y1, y2, maxpool2d(y2, p.POOL, p.STRIDE, p.PAD)], axis=1
    )
    dstacked = vjp("conv2d", (stacked, p.expand_kernel, p.expand_bias, 0), upstream)[0]
    cmid = y0.shape[1]
    d0, d1, d2, d3 = (dstacked[:, i * cmid : (i + 1) * cmid] for i in range(4))
    d2 = d2 + vjp("maxpool2d", (y2, p.POOL, p.STRIDE, p.PAD), d3)[0]
    d1 = d1 + vjp("maxpool2d", (y1, p.POOL, p.STRIDE, p.PAD), d2)[0]
    d0 = d0 + vjp("maxpool2d", (y0, p.POOL, p.STRIDE, p.PAD), d1)[0]
    return vjp("conv2d", (x, p.reduce_kernel, p.reduce_bias, 0), d0)[0]


def demo_pipeline(x, p: PipelineParams) -> np.ndarray:
    """Smoke-test composition: 3x3 conv, then eca, cbam and sppf in order."""
    y = conv2d(x, p.conv_kernel, p.conv_bias, pad=1)
    y = eca_forward(y, p.eca)
    y = cbam_forward(y, p.cam, p.sam)
    return sppf_forward(y, p.sppf)


def pipeline_input_grad(x, p: PipelineParams, upstream) -> np.ndarray:
    y0 = conv2d(x, p.conv_kernel, p.conv_bias, pad=1)
    y1 = eca_forward(y0, p.eca)
    y2 = cbam_forward(y1, p.cam, p.sam)
    dy2 = sppf_input_grad(y2, p.sppf, upstream)
    dy1 = cbam_input_grad(y1, p.cam, p.sam, dy2)
    dy0 = eca_input_grad(y0, p.eca, dy1)
    return vjp("conv2d", (x, p.conv_kernel, p.conv_bias, 1), dy0)[0]


# ---------------------------------------------------------------------------
# initialization (deterministic seeded uniform; zeros for identity checks)


def _uniform(rng, shape):
    return rng.uniform(-0.5, 0.5, shape)


def init_eca(
    channels: int,
    seed: int = 0,
    kernel_size: int | None = None,
    gamma: float = 2.0,
    b_offset: float = 1.0,
    zero: bool = False,
) -> EcaParams:
    k = kernel_size if kernel_size is not None else eca_kernel_size(channels, gamma, b_offset)
    k = min(k, 2 * channels - 1)  # longer kernels only hit zero padding
    kernel = np.zeros(k) if zero else _uniform(np.random.default_rng(seed), k)
    return EcaParams(kernel, gamma, b_offset)


def init_cam(channels: int, reduction: int = 16, seed: int = 0, zero: bool = False) -> CamParams:
    r = min(reduction, channels)  # keep the hidden layer nonempty
    if channels % r != 0:
        raise InvalidShape(f"{channels} channels are not divisible by reduction {r}")
    hidden = channels // r
    if zero:
        return CamParams(
            r, np.zeros((hidden, channels)), np.zeros(hidden),
            np.zeros((channels, hidden)), np.zeros(channels),
        )
    rng = np.random.default_rng(seed)
    return CamParams(
        r,
        _uniform(rng, (hidden, channels)),
        _uniform(rng, hidden),
        _uniform(rng, (channels, hidden)),
        _uniform(rng, channels),
    )


def init_sam(seed: int = 0, zero: bool = False) -> SamParams:
    if zero:
        return SamParams(np.zeros((1, 2, 7, 7)), 0.0)
    rng = np.random.default_rng(seed)
    return SamParams(_uniform(rng, (1, 2, 7, 7)), float(rng.uniform(-0.5, 0.5)))


def init_sppf(cin: int, cmid: int, cout: int, seed: int = 0) -> SppfParams:
    rng = np.random.default_rng(seed)
    return SppfParams(
        _uniform(rng, (cmid, cin, 1, 1)),
        _uniform(rng, cmid),
        _uniform(rng, (cout, 4 * cmid, 1, 1)),
        _uniform(rng, cout),
    )


def init_pipeline(
    cin: int, channels: int, cmid: int, cout: int, seed: int = 0, zero_attention: bool = False
) -> PipelineParams:
    rng = np.random.default_rng(seed)
    return PipelineParams(
        conv_kernel=_uniform(rng, (channels, cin, 3, 3)),
        conv_bias=_uniform(rng, channels),
        eca=init_eca(channels, seed=seed + 1, zero=zero_attention),
        cam=init_cam(channels, seed=seed + 2, zero=zero_attention),
        sam=init_sam(seed=seed + 3, zero=zero_attention),
        sppf=init_sppf(channels, cmid, cout, seed=seed + 4),
    )


# ---------------------------------------------------------------------------
# plain-text parameter serialization: header with block type and dims,
# then the row-major values (same syntax as the tensor fixture format)


def save_params(p) -> str:
    if isinstance(p, EcaParams):
        values = np.concatenate([p.kernel, [p.gamma, p.b_offset]])
        return _render("eca", [p.kernel.size], values)
    if isinstance(p, CamParams):
        values = np.concatenate([p.w1.ravel(), p.b1, p.w2.ravel(), p.b2])
        return _render("cam", [p.channels, p.reduction], values)
    if isinstance(p, SamParams):
        values = np.concatenate([p.kernel.ravel(), [p.bias]])
        return _render("sam", [7], values)
    if isinstance(p, SppfParams):
        cmid, cin = p.reduce_kernel.shape[:2]
        cout = p.expand_kernel.shape[0]
        values = np.concatenate(
            [p.reduce_kernel.ravel(), p.reduce_bias, p.expand_kernel.ravel(), p.expand_bias]
        )
        return _render("sppf", [cin, cmid, cout], values)
    raise TypeError(f"cannot serialize {type(p).__name__}")


def _render(kind, dims, values):
    header = " ".join([kind] + [str(d) for d in dims])
    return header + "\n" + " ".join(repr(float(v)) for v in values) + "\n"


def load_params(text: str):
    lines = text.strip().splitlines()
    if not lines:
        raise InvalidShape("empty parameter file")
    header = lines[0].split()
    values = np.array(" ".join(lines[1:]).split(), dtype=np.float64)
    kind, dims = header[0], [int(tok) for tok in header[1:]]
    if kind == "eca":
        (k,) = dims
        _expect(values, k + 2, kind)
        return EcaParams(values[:k], gamma=values[k], b_offset=values[k + 1])
    if kind == "cam":
        channels, reduction = dims
        hidden = channels // reduction
        _expect(values, 2 * hidden * channels + hidden + channels, kind)
        pos = 0
        w1, pos = _take(values, pos, (hidden, channels))
        b1, pos = _take(values, pos, (hidden,))
        w2, pos = _take(values, pos, (channels, hidden))
        b2, pos = _take(values, pos, (channels,))
        return CamParams(reduction, w1, b1, w2, b2)
    if kind == "sam":
        _expect(values, 2 * 7 * 7 + 1, kind)
        return SamParams(values[:-1].reshape(1, 2, 7, 7), float(values[-1]))
    if kind == "sppf":
        cin, cmid, cout = dims
        _expect(values, cmid * cin + cmid + cout * 4 * cmid + cout, kind)
        pos = 0
        rk, pos = _take(values, pos, (cmid, cin, 1, 1))
        rb, pos = _take(values, pos, (cmid,))
        ek, pos = _take(values, pos, (cout, 4 * cmid, 1, 1))
        eb, pos = _take(values, pos, (cout,))
        return SppfParams(rk, rb, ek, eb)
    raise InvalidShape(f"unknown parameter block {kind!r}")


def _expect(values, count, kind):
    if values.size != count:
        raise InvalidShape(f"{kind} parameters need {count} values, got {values.size}")


def _take(values, pos, shape):
    count = int(np.prod(shape))
    return values[pos : pos + count].reshape(shape), pos + count
