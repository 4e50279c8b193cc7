"""VGG-style architecture description, parameters, surgery, FLOPs, checkpoints.

Layer indices are 1-based throughout the public API: conv layers run 1..L,
and L+1 names the first classifier layer. The flatten boundary between the
conv stack and the classifier is channel-major (channel, row, column); the
surgery code relies on that ordering when it drops classifier columns.

A ModelState is treated as an immutable value: every operation returns a new
state and never mutates its input.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T


class ArchitectureError(ValueError):
    """Inconsistent or infeasible architecture description."""


class SurgeryError(ValueError):
    """Invalid kernel-removal request."""


class CheckpointError(ValueError):
    """Unreadable, corrupt, or inconsistent checkpoint file."""


@dataclass(frozen=True)
class ConvLayerSpec:
    in_channels: int
    out_channels: int
    kernel_extent: int = 3
    pool_after: bool = False


@dataclass(frozen=True)
class ClassifierSpec:
    hidden_sizes: tuple[int, ...]
    class_count: int


@dataclass(frozen=True)
class ArchitectureSpec:
    conv_layers: tuple[ConvLayerSpec, ...]
    classifier: ClassifierSpec
    input_resolution: tuple[int, int, int]  # (channels, height, width)

    def __post_init__(self):
        if not self.conv_layers:
            raise ArchitectureError("need at least one conv layer")
        if self.classifier.class_count < 2:
            raise ArchitectureError("class_count must be >= 2")
        ch = self.input_resolution[0]
        for i, layer in enumerate(self.conv_layers):
            if layer.out_channels < 1:
                raise ArchitectureError(f"conv layer {i + 1} has no kernels")
            if layer.in_channels != ch:
                raise ArchitectureError(
                    f"conv layer {i + 1} expects {layer.in_channels} input channels, gets {ch}"
                )
            ch = layer.out_channels
        # walking the pool chain validates the resolution is large enough
        self.spatial_sizes()

    def spatial_sizes(self) -> list[tuple[int, int]]:
        """Output (h, w) of every conv layer, after its pooling if any."""
        _, h, w = self.input_resolution
        sizes = []
        for i, layer in enumerate(self.conv_layers):
            if layer.pool_after:
                if h < 2 or w < 2:
                    raise ArchitectureError(
                        f"resolution too small: layer {i + 1} pools a {h}x{w} map"
                    )
                h, w = h // 2, w // 2
            sizes.append((h, w))
        return sizes

    @property
    def layer_count(self) -> int:
        return len(self.conv_layers)

    @property
    def flatten_size(self) -> int:
        h, w = self.spatial_sizes()[-1]
        return self.conv_layers[-1].out_channels * h * w

    def classifier_sizes(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per classifier layer, decision layer last."""
        sizes = []
        fan_in = self.flatten_size
        for hidden in self.classifier.hidden_sizes:
            sizes.append((fan_in, hidden))
            fan_in = hidden
        sizes.append((fan_in, self.classifier.class_count))
        return sizes

    def kernel_counts(self) -> list[int]:
        return [layer.out_channels for layer in self.conv_layers]


@dataclass
class ModelState:
    spec: ArchitectureSpec
    conv_kernels: list[np.ndarray] = field(repr=False)
    conv_biases: list[np.ndarray] = field(repr=False)
    fc_weights: list[np.ndarray] = field(repr=False)
    fc_biases: list[np.ndarray] = field(repr=False)

    def validate(self) -> None:
        if len(self.conv_kernels) != self.spec.layer_count:
            raise ArchitectureError("conv parameter count disagrees with spec")
        for i, layer in enumerate(self.spec.conv_layers):
            k = layer.kernel_extent
            want = (layer.out_channels, layer.in_channels, k, k)
            if self.conv_kernels[i].shape != want:
                raise ArchitectureError(
                    f"conv layer {i + 1} kernels {self.conv_kernels[i].shape} != {want}"
                )
            if self.conv_biases[i].shape != (layer.out_channels,):
                raise ArchitectureError(f"conv layer {i + 1} bias shape mismatch")
        fc_sizes = self.spec.classifier_sizes()
        if len(self.fc_weights) != len(fc_sizes):
            raise ArchitectureError("classifier parameter count disagrees with spec")
        for i, (fan_in, fan_out) in enumerate(fc_sizes):
            if self.fc_weights[i].shape != (fan_out, fan_in):
                raise ArchitectureError(
                    f"classifier layer {i + 1} weights {self.fc_weights[i].shape} != {(fan_out, fan_in)}"
                )
            if self.fc_biases[i].shape != (fan_out,):
                raise ArchitectureError(f"classifier layer {i + 1} bias shape mismatch")
        for arr in self.all_arrays().values():
            if not np.all(np.isfinite(arr)):
                raise ArchitectureError("model contains non-finite values")

    def all_arrays(self) -> dict[str, np.ndarray]:
        named = {}
        for i, (k, b) in enumerate(zip(self.conv_kernels, self.conv_biases)):
            named[f"conv{i + 1}.kernels"] = k
            named[f"conv{i + 1}.bias"] = b
        for i, (w, b) in enumerate(zip(self.fc_weights, self.fc_biases)):
            named[f"fc{i + 1}.weights"] = w
            named[f"fc{i + 1}.bias"] = b
        return named

    def copy(self) -> "ModelState":
        return ModelState(
            spec=self.spec,
            conv_kernels=[a.copy() for a in self.conv_kernels],
            conv_biases=[a.copy() for a in self.conv_biases],
            fc_weights=[a.copy() for a in self.fc_weights],
            fc_biases=[a.copy() for a in self.fc_biases],
        )

    def astype(self, dtype) -> "ModelState":
        return ModelState(
            spec=self.spec,
            conv_kernels=[a.astype(dtype) for a in self.conv_kernels],
            conv_biases=[a.astype(dtype) for a in self.conv_biases],
            fc_weights=[a.astype(dtype) for a in self.fc_weights],
            fc_biases=[a.astype(dtype) for a in self.fc_biases],
        )

    def parameter_count(self) -> int:
        return sum(a.size for a in self.all_arrays().values())


def models_equal(a: ModelState, b: ModelState) -> bool:
    """Bitwise equality of specs and every parameter array."""
    if a.spec != b.spec:
        return False
    aa, bb = a.all_arrays(), b.all_arrays()
    return all(
        aa[k].shape == bb[k].shape and np.array_equal(aa[k], bb[k], equal_nan=True)
        for k in aa
    )


# ---------------------------------------------------------------------------
# initialization and presets

def _glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_model(spec: ArchitectureSpec, seed: int, dtype=np.float32) -> ModelState:
    """Glorot-initialized weights, zero biases, deterministic in the seed."""
    rng = np.random.default_rng(seed)
    conv_kernels, conv_biases = [], []
    for layer in spec.conv_layers:
        k = layer.kernel_extent
        fan_in = layer.in_channels * k * k
        fan_out = layer.out_channels * k * k
        shape = (layer.out_channels, layer.in_channels, k, k)
        conv_kernels.append(_glorot_uniform(rng, shape, fan_in, fan_out, dtype))
        conv_biases.append(np.zeros(layer.out_channels, dtype=dtype))
    fc_weights, fc_biases = [], []
    for fan_in, fan_out in spec.classifier_sizes():
        fc_weights.append(_glorot_uniform(rng, (fan_out, fan_in), fan_in, fan_out, dtype))
        fc_biases.append(np.zeros(fan_out, dtype=dtype))
    model = ModelState(spec, conv_kernels, conv_biases, fc_weights, fc_biases)
    model.validate()
    return model


VGG16_KERNEL_COUNTS = [64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512]
_VGG16_POOL_AFTER = {2, 4, 7, 10, 13}
_TINYVGG_KERNEL_COUNTS = [8, 8, 16, 16]
_TINYVGG_POOL_AFTER = {2, 4}


def preset_spec(name: str, input_resolution: tuple[int, int, int], class_count: int) -> ArchitectureSpec:
    if name == "vgg16":
        counts, pools, hidden = VGG16_KERNEL_COUNTS, _VGG16_POOL_AFTER, (4096, 4096)
    elif name == "tinyvgg":
        counts, pools, hidden = _TINYVGG_KERNEL_COUNTS, _TINYVGG_POOL_AFTER, (32,)
    else:
        raise ArchitectureError(f"unknown preset '{name}' (expected vgg16 or tinyvgg)")
    layers = []
    in_ch = input_resolution[0]
    for i, out_ch in enumerate(counts, start=1):
        layers.append(ConvLayerSpec(in_ch, out_ch, 3, pool_after=i in pools))
        in_ch = out_ch
    return ArchitectureSpec(tuple(layers), ClassifierSpec(hidden, class_count), tuple(input_resolution))


def build_preset(
    name: str,
    input_resolution: tuple[int, int, int],
    class_count: int,
    seed: int = 0,
    dtype=np.float32,
) -> ModelState:
    return init_model(preset_spec(name, input_resolution, class_count), seed, dtype)


def glorot_reinit_classifier(model: ModelState, seed: int) -> ModelState:
    """Fresh Glorot classifier weights and zero biases; conv layers untouched."""
    rng = np.random.default_rng(seed)
    dtype = model.fc_weights[0].dtype
    fc_weights, fc_biases = [], []
    for fan_in, fan_out in model.spec.classifier_sizes():
        fc_weights.append(_glorot_uniform(rng, (fan_out, fan_in), fan_in, fan_out, dtype))
        fc_biases.append(np.zeros(fan_out, dtype=dtype))
    return ModelState(
        spec=model.spec,
        conv_kernels=[a.copy() for a in model.conv_kernels],
        conv_biases=[a.copy() for a in model.conv_biases],
        fc_weights=fc_weights,
        fc_biases=fc_biases,
    )


# ---------------------------------------------------------------------------
# inference forward passes (plain numpy, no gradient bookkeeping)

def _apply_mask(pre_activation: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    if mask is None:
        return pre_activation
    return pre_activation * mask.astype(pre_activation.dtype)[None, :, None, None]


def run_conv_stack(
    model: ModelState,
    images: np.ndarray,
    upto: int | None = None,
    channel_masks: dict[int, np.ndarray] | None = None,
    start: int = 1,
) -> np.ndarray:
    """Activations after conv layer ``upto`` (ReLU and pooling included).

    ``channel_masks`` maps a 1-based layer index to a per-kernel 0/1 vector
    multiplied into that layer's convolution output, which silences the
    masked kernels exactly as structural removal would. ``start`` lets a
    caller resume from a cached activation: ``images`` is then the output of
    layer ``start - 1``.
    """
    L = model.spec.layer_count
    upto = L if upto is None else upto
    if not 1 <= upto <= L or not 1 <= start <= upto:
        raise ArchitectureError(f"conv layer range {start}..{upto} invalid for 1..{L}")
    x = images.astype(model.conv_kernels[0].dtype, copy=False)
    for i in range(start - 1, upto):
        pre = T.conv2d_forward(x, model.conv_kernels[i], model.conv_biases[i])
        if channel_masks and (i + 1) in channel_masks:
            pre = _apply_mask(pre, channel_masks[i + 1])
        x = np.maximum(pre, 0)
        if model.spec.conv_layers[i].pool_after:
            x, _ = T.maxpool2d_forward(x)
    return x


def relu_maps(
    model: ModelState,
    images: np.ndarray,
    l: int,
    channel_masks: dict[int, np.ndarray] | None = None,
) -> np.ndarray:
    """Post-ReLU (pre-pool) maps of conv layer ``l``, for zero-activation stats."""
    L = model.spec.layer_count
    if not 1 <= l <= L:
        raise ArchitectureError(f"conv layer index {l} out of range 1..{L}")
    x = images
    if l > 1:
        x = run_conv_stack(model, images, upto=l - 1, channel_masks=channel_masks)
    x = x.astype(model.conv_kernels[0].dtype, copy=False)
    pre = T.conv2d_forward(x, model.conv_kernels[l - 1], model.conv_biases[l - 1])
    if channel_masks and l in channel_masks:
        pre = _apply_mask(pre, channel_masks[l])
    return np.maximum(pre, 0)


def forward_to_layer(
    model: ModelState,
    images: np.ndarray,
    l: int,
    channel_masks: dict[int, np.ndarray] | None = None,
) -> np.ndarray:
    """Output of layer ``l`` in 1..L+1, where L+1 is the first classifier layer.

    Conv outputs include the layer's ReLU and pooling. The L+1 output is the
    first classifier layer's activation (ReLU applied when it is a hidden
    layer, raw scores when the classifier has no hidden layers).
    """
    L = model.spec.layer_count
    if not 1 <= l <= L + 1:
        raise ArchitectureError(f"layer index {l} out of range 1..{L + 1}")
    if l <= L:
        return run_conv_stack(model, images, upto=l, channel_masks=channel_masks)
    x = run_conv_stack(model, images, upto=L, channel_masks=channel_masks)
    flat = x.reshape(x.shape[0], -1)
    out = T.dense_forward(flat, model.fc_weights[0], model.fc_biases[0])
    if model.spec.classifier.hidden_sizes:
        out = np.maximum(out, 0)
    return out


def forward_logits(
    model: ModelState,
    images: np.ndarray,
    channel_masks: dict[int, np.ndarray] | None = None,
    start: int = 1,
) -> np.ndarray:
    x = run_conv_stack(model, images, channel_masks=channel_masks, start=start)
    x = x.reshape(x.shape[0], -1)
    last = len(model.fc_weights) - 1
    for i, (w, b) in enumerate(zip(model.fc_weights, model.fc_biases)):
        x = T.dense_forward(x, w, b)
        if i < last:
            x = np.maximum(x, 0)
    return x


# ---------------------------------------------------------------------------
# graph forward pass (training); parameters arrive as autodiff tensors

@dataclass
class TensorParams:
    """Autodiff views of a model's arrays for one training run."""
    spec: ArchitectureSpec
    conv_kernels: list[T.Tensor]
    conv_biases: list[T.Tensor]
    fc_weights: list[T.Tensor]
    fc_biases: list[T.Tensor]

    def trainable(self) -> list[T.Tensor]:
        every = self.conv_kernels + self.conv_biases + self.fc_weights + self.fc_biases
        return [p for p in every if p.requires_grad]

    def zero_grads(self) -> None:
        for p in self.trainable():
            p.zero_grad()


def wrap_parameters(
    model: ModelState,
    train_conv: set[int] | None = None,
    train_fc: set[int] | None = None,
) -> TensorParams:
    """Wrap arrays as graph leaves; ``train_*`` hold 1-based trainable indices.

    ``None`` marks every layer of that group trainable; an empty set freezes
    the whole group. The wrapped tensors alias the model's arrays, so callers
    train on a private ``model.copy()``.
    """
    L = model.spec.layer_count
    n_fc = len(model.fc_weights)
    conv_idx = set(range(1, L + 1)) if train_conv is None else train_conv
    fc_idx = set(range(1, n_fc + 1)) if train_fc is None else train_fc
    return TensorParams(
        spec=model.spec,
        conv_kernels=[T.Tensor(a, requires_grad=(i + 1) in conv_idx) for i, a in enumerate(model.conv_kernels)],
        conv_biases=[T.Tensor(a, requires_grad=(i + 1) in conv_idx) for i, a in enumerate(model.conv_biases)],
        fc_weights=[T.Tensor(a, requires_grad=(i + 1) in fc_idx) for i, a in enumerate(model.fc_weights)],
        fc_biases=[T.Tensor(a, requires_grad=(i + 1) in fc_idx) for i, a in enumerate(model.fc_biases)],
    )


def graph_forward_to_layer(params: TensorParams, images: np.ndarray, l: int) -> T.Tensor:
    """Graph version of :func:`forward_to_layer` (same 1..L+1 indexing)."""
    L = params.spec.layer_count
    if not 1 <= l <= L + 1:
        raise ArchitectureError(f"layer index {l} out of range 1..{L + 1}")
    x = T.Tensor(images.astype(params.conv_kernels[0].data.dtype, copy=False))
    for i in range(min(l, L)):
        x = T.relu(T.conv2d(x, params.conv_kernels[i], params.conv_biases[i]))
        if params.spec.conv_layers[i].pool_after:
            x = T.maxpool2d(x)
    if l <= L:
        return x
    x = T.dense(T.flatten(x), params.fc_weights[0], params.fc_biases[0])
    if params.spec.classifier.hidden_sizes:
        x = T.relu(x)
    return x


def graph_forward_logits(params: TensorParams, images: np.ndarray) -> T.Tensor:
    x = T.Tensor(images.astype(params.conv_kernels[0].data.dtype, copy=False))
    for i in range(params.spec.layer_count):
        x = T.relu(T.conv2d(x, params.conv_kernels[i], params.conv_biases[i]))
        if params.spec.conv_layers[i].pool_after:
            x = T.maxpool2d(x)
    x = T.flatten(x)
    last = len(params.fc_weights) - 1
    for i in range(last + 1):
        x = T.dense(x, params.fc_weights[i], params.fc_biases[i])
        if i < last:
            x = T.relu(x)
    return x


# ---------------------------------------------------------------------------
# structural surgery

def prune_layer(model: ModelState, l: int, removal: set[int] | list[int]) -> ModelState:
    """Remove kernels ``removal`` from conv layer ``l`` (1-based).

    Drops the corresponding kernel and bias rows of layer l, the matching
    input-channel slices of layer l+1, and, when l is the last conv layer,
    the classifier columns of every spatial position of the removed channels
    (channel-major flattening). At least one kernel must survive.
    """
    L = model.spec.layer_count
    if not 1 <= l <= L:
        raise SurgeryError(f"conv layer index {l} out of range 1..{L}")
    k_l = model.spec.conv_layers[l - 1].out_channels
    removal = sorted(set(int(i) for i in removal))
    if removal and (removal[0] < 0 or removal[-1] >= k_l):
        raise SurgeryError(f"kernel index out of range for layer {l} with {k_l} kernels")
    if len(removal) >= k_l:
        raise SurgeryError(f"cannot remove all {k_l} kernels of layer {l}")
    keep = [i for i in range(k_l) if i not in set(removal)]

    conv_kernels = [a.copy() for a in model.conv_kernels]
    conv_biases = [a.copy() for a in model.conv_biases]
    fc_weights = [a.copy() for a in model.fc_weights]
    fc_biases = [a.copy() for a in model.fc_biases]

    conv_kernels[l - 1] = model.conv_kernels[l - 1][keep].copy()
    conv_biases[l - 1] = model.conv_biases[l - 1][keep].copy()

    layers = list(model.spec.conv_layers)
    layers[l - 1] = replace(layers[l - 1], out_channels=len(keep))
    if l < L:
        conv_kernels[l] = model.conv_kernels[l][:, keep].copy()
        layers[l] = replace(layers[l], in_channels=len(keep))
    else:
        h, w = model.spec.spatial_sizes()[-1]
        w0 = model.fc_weights[0]
        fc_weights[0] = w0.reshape(w0.shape[0], k_l, h, w)[:, keep].reshape(w0.shape[0], -1).copy()

    new_spec = ArchitectureSpec(tuple(layers), model.spec.classifier, model.spec.input_resolution)
    pruned = ModelState(new_spec, conv_kernels, conv_biases, fc_weights, fc_biases)
    pruned.validate()
    return pruned


def removal_mask(kernel_count: int, removal: set[int] | list[int]) -> np.ndarray:
    """0/1 vector that zeroes the removed kernels, for masked forward passes."""
    mask = np.ones(kernel_count, dtype=np.float64)
    for i in removal:
        mask[int(i)] = 0.0
    return mask


def uniformly_pruned_spec(spec: ArchitectureSpec, fraction: float) -> ArchitectureSpec:
    """Architecture after removing floor(fraction * K_l) kernels per layer."""
    if not 0 < fraction < 1:
        raise SurgeryError("fraction must be in (0, 1)")
    layers = []
    in_ch = spec.input_resolution[0]
    for layer in spec.conv_layers:
        kept = layer.out_channels - int(fraction * layer.out_channels)
        layers.append(replace(layer, in_channels=in_ch, out_channels=kept))
        in_ch = kept
    return ArchitectureSpec(tuple(layers), spec.classifier, spec.input_resolution)


# ---------------------------------------------------------------------------
# FLOPs accounting

@dataclass(frozen=True)
class FlopsReport:
    """Analytic FLOPs per forward pass.

    Convention: one multiply-accumulate counts as 2 FLOPs; a conv layer costs
    2 * H_out * W_out * kh * kw * C_in * C_out and a classifier layer
    2 * fan_in * fan_out. Bias adds, ReLU, and pooling are not counted.
    Totals are reported both without and with the classifier layers.
    """
    conv_layers: tuple[int, ...]
    classifier_layers: tuple[int, ...]

    @property
    def conv_total(self) -> int:
        return sum(self.conv_layers)

    @property
    def classifier_total(self) -> int:
        return sum(self.classifier_layers)

    @property
    def total(self) -> int:
        return self.conv_total + self.classifier_total

    def as_dict(self) -> dict:
        return {
            "convention": "2*H_out*W_out*kh*kw*C_in*C_out per conv layer; "
            "2*fan_in*fan_out per classifier layer; bias/ReLU/pool excluded",
            "conv_layers": list(self.conv_layers),
            "classifier_layers": list(self.classifier_layers),
            "conv_total": self.conv_total,
            "classifier_total": self.classifier_total,
            "total": self.total,
        }


def flops(spec: ArchitectureSpec) -> FlopsReport:
    conv = []
    _, h, w = spec.input_resolution
    for layer in spec.conv_layers:
        k = layer.kernel_extent
        conv.append(2 * h * w * k * k * layer.in_channels * layer.out_channels)
        if layer.pool_after:
            h, w = h // 2, w // 2
    fc = [2 * fan_in * fan_out for fan_in, fan_out in spec.classifier_sizes()]
    return FlopsReport(tuple(conv), tuple(fc))


# ---------------------------------------------------------------------------
# checkpoint persistence
#
# Byte layout (little-endian throughout), version 1:
#   magic   4 bytes  b"CNNP"
#   version uint32
#   json    uint32 length + UTF-8 architecture description
#   count   uint32 number of tensor records
#   record  uint32 name length + UTF-8 name
#           uint32 rank
#           rank * uint64 extents
#           uint8  dtype code (0 = float32, 1 = float64)
#           raw little-endian values
# Full schema documented in docs/formats.md.

CHECKPOINT_MAGIC = b"CNNP"
CHECKPOINT_VERSION = 1
_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def _spec_to_json(spec: ArchitectureSpec) -> dict:
    return {
        "input_resolution": list(spec.input_resolution),
        "conv_layers": [
            {
                "in_channels": layer.in_channels,
                "out_channels": layer.out_channels,
                "kernel_extent": layer.kernel_extent,
                "pool_after": layer.pool_after,
            }
            for layer in spec.conv_layers
        ],
        "classifier": {
            "hidden_sizes": list(spec.classifier.hidden_sizes),
            "class_count": spec.classifier.class_count,
        },
    }


def spec_from_json(doc: dict) -> ArchitectureSpec:
    return ArchitectureSpec(
        conv_layers=tuple(
            ConvLayerSpec(
                in_channels=c["in_channels"],
                out_channels=c["out_channels"],
                kernel_extent=c.get("kernel_extent", 3),
                pool_after=c.get("pool_after", False),
            )
            for c in doc["conv_layers"]
        ),
        classifier=ClassifierSpec(
            hidden_sizes=tuple(doc["classifier"]["hidden_sizes"]),
            class_count=doc["classifier"]["class_count"],
        ),
        input_resolution=tuple(doc["input_resolution"]),
    )


def save_checkpoint(model: ModelState, path) -> None:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    spec_bytes = json.dumps(_spec_to_json(model.spec), sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(spec_bytes)))
    buf.write(spec_bytes)
    arrays = model.all_arrays()
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        nb = name.encode("utf-8")
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<I", arr.ndim))
        for ext in arr.shape:
            buf.write(struct.pack("<Q", ext))
        code = 0 if arr.dtype == np.float32 else 1
        buf.write(struct.pack("<B", code))
        buf.write(np.ascontiguousarray(arr, dtype=_DTYPE_CODES[code]).tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint file")
    return data


def load_checkpoint(path) -> ModelState:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != CHECKPOINT_MAGIC:
            raise CheckpointError("bad magic bytes: not a checkpoint file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (spec_len,) = struct.unpack("<I", _read_exact(fh, 4))
        try:
            spec = spec_from_json(json.loads(_read_exact(fh, spec_len)))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CheckpointError(f"unreadable architecture description: {exc}") from exc
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4))
            name = _read_exact(fh, name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4))
            shape = tuple(struct.unpack("<Q", _read_exact(fh, 8))[0] for _ in range(rank))
            (code,) = struct.unpack("<B", _read_exact(fh, 1))
            if code not in _DTYPE_CODES:
                raise CheckpointError(f"unknown dtype code {code}")
            dtype = _DTYPE_CODES[code]
            n = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = _read_exact(fh, n * dtype.itemsize)
            tensors[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
        if fh.read(1):
            raise CheckpointError("trailing bytes after last tensor record")

    L = len(spec.conv_layers)
    n_fc = len(spec.classifier.hidden_sizes) + 1
    try:
        model = ModelState(
            spec=spec,
            conv_kernels=[tensors[f"conv{i + 1}.kernels"] for i in range(L)],
            conv_biases=[tensors[f"conv{i + 1}.bias"] for i in range(L)],
            fc_weights=[tensors[f"fc{i + 1}.weights"] for i in range(n_fc)],
            fc_biases=[tensors[f"fc{i + 1}.bias"] for i in range(n_fc)],
        )
    except KeyError as exc:
        raise CheckpointError(f"missing tensor record {exc}") from exc
    try:
        model.validate()
    except ArchitectureError as exc:
        raise CheckpointError(f"tensor shapes disagree with embedded spec: {exc}") from exc
    return model
