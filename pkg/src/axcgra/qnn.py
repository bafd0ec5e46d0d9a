"""Deterministic INT8 CNN inference with per-output-channel multiplier binding.

Every output channel of every convolution is bound to either the exact
integer multiplier or a DRUM-k approximate multiplier (via its product
table). Quantization is symmetric, per-tensor for activations and
per-output-channel for weights, zero points fixed at 0. Accumulation is
pure integer, so results are bit-reproducible.

On-disk formats: a JSON manifest describes the layer chain and scales and
points at tensor blobs; blobs are little-endian with a
{magic 'AXT1', dtype, rank, dims} header followed by raw data.
"""

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .axmul import DrumConfig, SIGN_MAGNITUDE, build_lut
from .errors import AccumulatorOverflowError, FormatError, ValidationError

BLOB_MAGIC = b"AXT1"
_DTYPE_CODES = {0: np.int8, 1: np.int32}
_DTYPE_TO_CODE = {np.dtype(np.int8): 0, np.dtype(np.int32): 1}

INT8_MIN, INT8_MAX = -128, 127
_ACC_LIMIT = 2 ** 31


@dataclass
class TensorI8:
    """Symmetric-quantized int8 tensor, shape (batch, channels, h, w)."""

    data: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.int8)
        if self.data.ndim != 4:
            raise ValidationError(
                f"expected 4D (batch, c, h, w) tensor, got shape {self.data.shape}"
            )
        if not self.scale > 0:
            raise ValidationError(f"scale must be positive, got {self.scale}")

    @property
    def shape(self):
        return self.data.shape

    def dequantized(self):
        return self.data.astype(np.float64) * self.scale

    def digest(self):
        h = hashlib.sha256()
        h.update(struct.pack("<4I", *self.shape))
        h.update(struct.pack("<d", self.scale))
        h.update(self.data.tobytes())
        return h.hexdigest()[:16]


@dataclass
class ConvSpec:
    """One convolution: int8 weights (oc, ic, kh, kw), per-channel weight
    scales, int32 bias."""

    in_channels: int
    out_channels: int
    kernel: tuple
    stride: int
    padding: int
    weights: np.ndarray
    weight_scales: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.kernel = tuple(int(v) for v in self.kernel)
        self.weights = np.asarray(self.weights, dtype=np.int8)
        self.weight_scales = np.asarray(self.weight_scales, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.int32)
        kh, kw = self.kernel
        want = (self.out_channels, self.in_channels, kh, kw)
        if self.weights.shape != want:
            raise ValidationError(
                f"weight shape {self.weights.shape} != declared {want}"
            )
        if self.weight_scales.shape != (self.out_channels,):
            raise ValidationError(
                f"need {self.out_channels} weight scales, got "
                f"{self.weight_scales.shape}"
            )
        if np.any(self.weight_scales <= 0):
            raise ValidationError("weight scales must be positive")
        if self.bias.shape != (self.out_channels,):
            raise ValidationError(f"bias shape {self.bias.shape} is wrong")

    def out_size(self, h, w):
        kh, kw = self.kernel
        oh = (h + 2 * self.padding - kh) // self.stride + 1
        ow = (w + 2 * self.padding - kw) // self.stride + 1
        return oh, ow

    def macs_per_channel(self, h, w):
        oh, ow = self.out_size(h, w)
        kh, kw = self.kernel
        return self.in_channels * kh * kw * oh * ow


@dataclass
class Layer:
    """conv -> optional ReLU -> requantize (no requantize on the last layer,
    which emits real-valued logits instead)."""

    name: str
    conv: ConvSpec
    relu: bool = True
    out_scale: float | None = None


@dataclass
class ModelGraph:
    """Simple chain of conv layers (no branches)."""

    input_shape: tuple  # (channels, h, w)
    input_scale: float
    layers: list = field(default_factory=list)

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        prev = self.input_shape[0]
        for layer in self.layers:
            if layer.conv.in_channels != prev:
                raise ValidationError(
                    f"layer {layer.name}: in_channels {layer.conv.in_channels} "
                    f"!= previous out_channels {prev}"
                )
            prev = layer.conv.out_channels
        for layer in self.layers[:-1]:
            if layer.out_scale is None or not layer.out_scale > 0:
                raise ValidationError(
                    f"layer {layer.name}: non-final layers need a positive "
                    f"out_scale"
                )

    @property
    def channel_counts(self):
        return [layer.conv.out_channels for layer in self.layers]

    def total_macs(self):
        """MACs for one inference (batch of one)."""
        c, h, w = self.input_shape
        total = 0
        for layer in self.layers:
            total += layer.conv.out_channels * layer.conv.macs_per_channel(h, w)
            h, w = layer.conv.out_size(h, w)
        return total


@dataclass
class MappingPlan:
    """Per-layer sets of output channels bound to the approximate multiplier."""

    qos_quantile: float
    approx_channels: list  # list[frozenset[int]], one per layer
    drum: DrumConfig

    def __post_init__(self):
        if not 0.0 <= self.qos_quantile <= 1.0:
            raise ValidationError(
                f"qos_quantile must be in [0,1], got {self.qos_quantile}"
            )
        self.approx_channels = [frozenset(int(c) for c in s)
                                for s in self.approx_channels]

    def validate_against(self, model):
        if len(self.approx_channels) != len(model.layers):
            raise ValidationError(
                f"plan covers {len(self.approx_channels)} layers, model has "
                f"{len(model.layers)}"
            )
        for i, (chans, layer) in enumerate(zip(self.approx_channels, model.layers)):
            bad = [c for c in chans if not 0 <= c < layer.conv.out_channels]
            if bad:
                raise ValidationError(f"plan layer {i}: channels {bad} out of range")

    def split_counts(self, model):
        """(accurate, approximate) channel totals across the whole model."""
        ax = sum(len(s) for s in self.approx_channels)
        total = sum(model.channel_counts)
        return total - ax, ax

    def to_dict(self):
        return {
            "format": "axcgra-plan-v1",
            "qos_quantile": self.qos_quantile,
            "drum": self.drum.to_dict(),
            "approx_channels": [sorted(s) for s in self.approx_channels],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "axcgra-plan-v1":
            raise FormatError(f"not a plan file (format={d.get('format')!r})")
        return cls(
            qos_quantile=float(d["qos_quantile"]),
            approx_channels=[frozenset(s) for s in d["approx_channels"]],
            drum=DrumConfig.from_dict(d["drum"]),
        )

    @classmethod
    def empty(cls, model, drum):
        return cls(0.0, [frozenset() for _ in model.layers], drum)

    @classmethod
    def full(cls, model, drum):
        return cls(
            1.0,
            [frozenset(range(l.conv.out_channels)) for l in model.layers],
            drum,
        )


def _signed_lut(drum):
    """256x256 int32 DRUM product table indexed by (a + 128, b + 128)."""
    cfg = DrumConfig(drum.k, drum.input_width, SIGN_MAGNITUDE)
    lut = build_lut(cfg)
    n = 1 << cfg.input_width
    half = n // 2
    # reorder two's-complement indexing to offset indexing
    order = np.concatenate([np.arange(half, n), np.arange(half)])
    return lut[np.ix_(order, order)]


def _im2col(data, kernel, stride, padding):
    """Patch matrix (batch, oh, ow, ic*kh*kw), int8, input-channel-major
    then kernel row then kernel column."""
    kh, kw = kernel
    b, c, h, w = data.shape
    padded = np.pad(
        data, ((0, 0), (0, 0), (padding, padding), (padding, padding))
    )
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    cols = np.empty((b, oh, ow, c, kh, kw), dtype=np.int8)
    for r in range(kh):
        for s in range(kw):
            cols[:, :, :, :, r, s] = padded[
                :, :, r : r + oh * stride : stride, s : s + ow * stride : stride
            ].transpose(0, 2, 3, 1)
    return cols.reshape(b, oh, ow, c * kh * kw)


def conv2d(inp, spec, approx_channels=frozenset(), drum=None):
    """Convolution to int64 accumulators (batch, oc, oh, ow).

    Channels in approx_channels take every product from the DRUM table,
    all other channels multiply exactly. Raises on shape mismatch and on
    accumulators leaving the signed 32-bit range.
    """
    if inp.data.shape[1] != spec.in_channels:
        raise ValidationError(
            f"input has {inp.data.shape[1]} channels, conv expects "
            f"{spec.in_channels}"
        )
    approx_channels = frozenset(approx_channels)
    if approx_channels and drum is None:
        raise ValidationError("approximate channels bound but no DrumConfig given")
    bad = [c for c in approx_channels if not 0 <= c < spec.out_channels]
    if bad:
        raise ValidationError(f"approximate channels {bad} out of range")

    patches = _im2col(inp.data, spec.kernel, spec.stride, spec.padding)
    b, oh, ow, kdim = patches.shape
    wmat = spec.weights.reshape(spec.out_channels, kdim)

    acc = patches.astype(np.int64) @ wmat.astype(np.int64).T  # (b, oh, ow, oc)
    acc = acc.transpose(0, 3, 1, 2)

    if approx_channels:
        lut = _signed_lut(drum)
        ocs = sorted(approx_channels)
        wsel = wmat[ocs].astype(np.int16) + 128  # (n_ax, kdim)
        xsel = patches.astype(np.int16) + 128  # (b, oh, ow, kdim)
        prods = lut[wsel[:, None, None, None, :], xsel[None]]
        acc[:, ocs] = prods.sum(axis=-1, dtype=np.int64).transpose(1, 0, 2, 3)

    acc += spec.bias.astype(np.int64)[None, :, None, None]
    if np.any(np.abs(acc) >= _ACC_LIMIT):
        worst = int(np.max(np.abs(acc)))
        raise AccumulatorOverflowError(
            f"accumulator magnitude {worst} exceeds signed 32-bit range"
        )
    return acc


def requantize(acc, in_scale, weight_scales, out_scale):
    """Rescale accumulators to int8: round half to even, clamp to [-128, 127]."""
    if not (in_scale > 0 and out_scale > 0):
        raise ValidationError("scales must be positive")
    weight_scales = np.asarray(weight_scales, dtype=np.float64)
    if np.any(weight_scales <= 0):
        raise ValidationError("weight scales must be positive")
    mult = in_scale * weight_scales / out_scale
    scaled = acc.astype(np.float64) * mult[None, :, None, None]
    return np.clip(np.rint(scaled), INT8_MIN, INT8_MAX).astype(np.int8)


@dataclass
class ForwardResult:
    """All per-layer activations plus the final real-valued logits."""

    feature_maps: list  # TensorI8 per non-final layer, logits array for final
    logits: np.ndarray


def forward(model, inp, plan=None):
    """Run the chain; plan=None (or empty sets) is the fully accurate path."""
    if inp.data.shape[1:] != model.input_shape:
        raise ValidationError(
            f"input shape {inp.data.shape[1:]} != model entry {model.input_shape}"
        )
    if plan is not None:
        plan.validate_against(model)

    maps = []
    x = inp
    last = len(model.layers) - 1
    for i, layer in enumerate(model.layers):
        approx = plan.approx_channels[i] if plan is not None else frozenset()
        drum = plan.drum if plan is not None else None
        acc = conv2d(x, layer.conv, approx, drum)
        if layer.relu:
            acc = np.maximum(acc, 0)
        if i == last:
            mult = x.scale * layer.conv.weight_scales
            logits = acc.astype(np.float64) * mult[None, :, None, None]
            maps.append(logits)
            return ForwardResult(feature_maps=maps, logits=logits)
        out = TensorI8(
            requantize(acc, x.scale, layer.conv.weight_scales, layer.out_scale),
            layer.out_scale,
        )
        maps.append(out)
        x = out
    raise ValidationError("model has no layers")


# ---------------------------------------------------------------------------
# tensor blob + manifest I/O
# ---------------------------------------------------------------------------

def write_blob(path, arr):
    """Write an int8/int32 array as a little-endian AXT1 blob."""
    arr = np.ascontiguousarray(arr)
    code = _DTYPE_TO_CODE.get(arr.dtype)
    if code is None:
        raise FormatError(f"unsupported blob dtype {arr.dtype}")
    with open(path, "wb") as f:
        f.write(BLOB_MAGIC)
        f.write(struct.pack("<II", code, arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(arr.astype(arr.dtype.newbyteorder("<")).tobytes())


def read_blob(path):
    """Read an AXT1 blob back into a numpy array."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != BLOB_MAGIC:
        raise FormatError(f"{path}: bad magic bytes {raw[:4]!r}")
    code, rank = struct.unpack_from("<II", raw, 4)
    if code not in _DTYPE_CODES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    dims = struct.unpack_from(f"<{rank}I", raw, 12)
    dtype = np.dtype(_DTYPE_CODES[code]).newbyteorder("<")
    data = np.frombuffer(raw, dtype=dtype, offset=12 + 4 * rank)
    want = int(np.prod(dims)) if rank else 1
    if data.size != want:
        raise FormatError(
            f"{path}: payload has {data.size} elements, header declares {want}"
        )
    return data.reshape(dims).astype(_DTYPE_CODES[code])


def save_tensor(path, tensor):
    write_blob(path, tensor.data)


def load_tensor(path, scale=1.0):
    """Load an int8 blob as a TensorI8 (scale is carried by the manifest,
    not the blob, so callers supply it)."""
    arr = read_blob(path)
    if arr.dtype != np.int8:
        raise FormatError(f"{path}: expected int8 tensor, got {arr.dtype}")
    return TensorI8(arr, scale)


def save_model(model, out_dir):
    """Write manifest.json plus one blob per weight/bias tensor."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    layers = []
    for layer in model.layers:
        wname = f"{layer.name}.w.axt"
        bname = f"{layer.name}.b.axt"
        write_blob(out_dir / wname, layer.conv.weights)
        write_blob(out_dir / bname, layer.conv.bias)
        entry = {
            "name": layer.name,
            "in_channels": layer.conv.in_channels,
            "out_channels": layer.conv.out_channels,
            "kernel": list(layer.conv.kernel),
            "stride": layer.conv.stride,
            "padding": layer.conv.padding,
            "weights": wname,
            "bias": bname,
            "weight_scales": [float(s) for s in layer.conv.weight_scales],
            "relu": layer.relu,
            "out_scale": None if layer.out_scale is None else float(layer.out_scale),
        }
        layers.append(entry)
    manifest = {
        "format": "axcgra-model-v1",
        "input_shape": list(model.input_shape),
        "input_scale": float(model.input_scale),
        "layers": layers,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    return out_dir / "manifest.json"


def load_model(manifest_path):
    """Load a model directory; manifest_path may be the dir or the file."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{manifest_path}: not valid JSON ({e})") from e
    if manifest.get("format") != "axcgra-model-v1":
        raise FormatError(
            f"{manifest_path}: unknown manifest format "
            f"{manifest.get('format')!r}"
        )
    base = manifest_path.parent
    layers = []
    for entry in manifest["layers"]:
        weights = read_blob(base / entry["weights"])
        bias = read_blob(base / entry["bias"])
        try:
            conv = ConvSpec(
                in_channels=int(entry["in_channels"]),
                out_channels=int(entry["out_channels"]),
                kernel=tuple(entry["kernel"]),
                stride=int(entry["stride"]),
                padding=int(entry["padding"]),
                weights=weights,
                weight_scales=entry["weight_scales"],
                bias=bias,
            )
        except ValidationError as e:
            raise FormatError(f"layer {entry.get('name')}: {e}") from e
        out_scale = entry.get("out_scale")
        layers.append(
            Layer(
                name=str(entry["name"]),
                conv=conv,
                relu=bool(entry.get("relu", False)),
                out_scale=None if out_scale is None else float(out_scale),
            )
        )
    try:
        return ModelGraph(
            input_shape=tuple(manifest["input_shape"]),
            input_scale=float(manifest["input_scale"]),
            layers=layers,
        )
    except ValidationError as e:
        raise FormatError(f"{manifest_path}: {e}") from e
