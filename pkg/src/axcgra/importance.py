"""Per-channel importance scoring and quantile-driven multiplier assignment.

A channel's importance is the mean squared error its approximation alone
introduces: rerun the channel with every product taken from the DRUM table,
keep everything else accurate, and compare feature maps. 'layer_local'
compares the layer's own output (inputs taken from the accurate pass, so
channels are independent and one accurate forward is shared);
'end_to_end' compares final logits instead.

A plan for a quality quantile q binds, per layer with C channels, the
floor(q*C) lowest-importance channels to the approximate multiplier.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ValidationError
from .axmul import DrumConfig
from .qnn import MappingPlan, TensorI8, conv2d, forward, requantize

MODE_LAYER_LOCAL = "layer_local"
MODE_END_TO_END = "end_to_end"


@dataclass
class ImportanceTable:
    """Map (layer_index, output_channel) -> importance score."""

    entries: dict = field(default_factory=dict)
    data_digest: str = ""
    mode: str = MODE_LAYER_LOCAL
    drum: DrumConfig | None = None
    channel_counts: list = field(default_factory=list)

    def layers(self):
        return sorted({l for l, _ in self.entries})

    def channels(self, layer):
        if layer not in {l for l, _ in self.entries}:
            raise ValidationError(f"layer {layer} not in importance table")
        return sorted(c for (l, c) in self.entries if l == layer)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["layer", "channel", "importance"])
        for (l, c) in sorted(self.entries):
            w.writerow([l, c, repr(self.entries[(l, c)])])
        return buf.getvalue()

    def to_dict(self):
        return {
            "format": "axcgra-importance-v1",
            "mode": self.mode,
            "data_digest": self.data_digest,
            "drum": self.drum.to_dict() if self.drum else None,
            "channel_counts": list(self.channel_counts),
            "entries": [
                {"layer": l, "channel": c, "importance": v}
                for (l, c), v in sorted(self.entries.items())
            ],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "axcgra-importance-v1":
            raise FormatError(
                f"not an importance table (format={d.get('format')!r})"
            )
        entries = {
            (int(e["layer"]), int(e["channel"])): float(e["importance"])
            for e in d["entries"]
        }
        drum = DrumConfig.from_dict(d["drum"]) if d.get("drum") else None
        return cls(
            entries=entries,
            data_digest=str(d.get("data_digest", "")),
            mode=str(d.get("mode", MODE_LAYER_LOCAL)),
            drum=drum,
            channel_counts=[int(c) for c in d.get("channel_counts", [])],
        )


def _accurate_inputs(model, data):
    """Input tensor of every layer under the fully accurate pass."""
    result = forward(model, data)
    inputs = [data]
    for fm in result.feature_maps[:-1]:
        inputs.append(fm)
    return inputs, result


def _layer_output(model, layer_index, acc, in_scale):
    """Post-activation output values of one layer: dequantized int8 codes
    for non-final layers, real logits for the final layer."""
    layer = model.layers[layer_index]
    if layer.relu:
        acc = np.maximum(acc, 0)
    mult = in_scale * layer.conv.weight_scales
    if layer_index == len(model.layers) - 1:
        return acc.astype(np.float64) * mult[None, :, None, None]
    codes = requantize(acc, in_scale, layer.conv.weight_scales, layer.out_scale)
    return codes.astype(np.float64) * layer.out_scale


def _layer_local_importance(model, layer_inputs, layer_index, channel, drum):
    layer = model.layers[layer_index]
    if not 0 <= channel < layer.conv.out_channels:
        raise ValidationError(
            f"channel {channel} out of range for layer {layer_index}"
        )
    inp = layer_inputs[layer_index]
    acc_accurate = conv2d(inp, layer.conv)
    acc_approx = acc_accurate.copy()
    approx = conv2d(inp, layer.conv, frozenset([channel]), drum)
    acc_approx[:, channel] = approx[:, channel]

    out_a = _layer_output(model, layer_index, acc_accurate, inp.scale)
    out_x = _layer_output(model, layer_index, acc_approx, inp.scale)
    return float(np.mean((out_a - out_x) ** 2))


def channel_importance(model, data, layer_index, channel, drum,
                       mode=MODE_LAYER_LOCAL):
    """Importance of one (layer, channel) pair; see module docstring."""
    if mode == MODE_LAYER_LOCAL:
        inputs, _ = _accurate_inputs(model, data)
        return _layer_local_importance(model, inputs, layer_index, channel, drum)
    if mode == MODE_END_TO_END:
        base = forward(model, data).logits
        sets = [frozenset() for _ in model.layers]
        sets[layer_index] = frozenset([channel])
        plan = MappingPlan(0.0, sets, drum)
        approx = forward(model, data, plan).logits
        return float(np.mean((base - approx) ** 2))
    raise ValidationError(f"unknown importance mode {mode!r}")


def compute_all(model, data, drum, mode=MODE_LAYER_LOCAL):
    """Importance of every (layer, channel); one accurate forward is shared."""
    if data.data.shape[0] == 0:
        raise ValidationError("need a non-empty data batch")
    table = ImportanceTable(
        data_digest=data.digest(),
        mode=mode,
        drum=drum,
        channel_counts=model.channel_counts,
    )
    inputs, base = _accurate_inputs(model, data)
    for li, layer in enumerate(model.layers):
        if mode == MODE_LAYER_LOCAL:
            inp = inputs[li]
            acc_accurate = conv2d(inp, layer.conv)
            out_a = _layer_output(model, li, acc_accurate, inp.scale)
            for oc in range(layer.conv.out_channels):
                acc_x = acc_accurate.copy()
                approx = conv2d(inp, layer.conv, frozenset([oc]), drum)
                acc_x[:, oc] = approx[:, oc]
                out_x = _layer_output(model, li, acc_x, inp.scale)
                table.entries[(li, oc)] = float(np.mean((out_a - out_x) ** 2))
        else:
            for oc in range(layer.conv.out_channels):
                sets = [frozenset() for _ in model.layers]
                sets[li] = frozenset([oc])
                plan = MappingPlan(0.0, sets, drum)
                approx = forward(model, data, plan).logits
                table.entries[(li, oc)] = float(
                    np.mean((base.logits - approx) ** 2)
                )
    return table


def rank_channels(table, layer):
    """Channels of one layer, highest importance first, ties by index."""
    chans = table.channels(layer)
    return sorted(chans, key=lambda c: (-table.entries[(layer, c)], c))


def quantile_assign(table, q):
    """MappingPlan binding the floor(q*C) least important channels per layer."""
    if not 0.0 <= q <= 1.0:
        raise ValidationError(f"quantile must be in [0,1], got {q}")
    if table.drum is None:
        raise ValidationError("importance table carries no DrumConfig")
    sets = []
    for layer in table.layers():
        chans = table.channels(layer)
        # epsilon guards floor() against binary representation of q*C
        n = int(math.floor(q * len(chans) + 1e-9))
        lowest = sorted(chans, key=lambda c: (table.entries[(layer, c)], c))
        sets.append(frozenset(lowest[:n]))
    return MappingPlan(q, sets, table.drum)


@dataclass
class PlanEvaluation:
    final_rmse: float
    per_layer_rmse: list

    def to_dict(self):
        return {
            "final_rmse": self.final_rmse,
            "per_layer_rmse": list(self.per_layer_rmse),
        }


def evaluate_plan(model, data, plan):
    """RMSE of the planned run against the accurate run, overall and per layer."""
    plan.validate_against(model)
    base = forward(model, data)
    approx = forward(model, data, plan)
    per_layer = []
    for i in range(len(model.layers)):
        a, x = base.feature_maps[i], approx.feature_maps[i]
        if isinstance(a, TensorI8):
            diff = a.dequantized() - x.dequantized()
        else:
            diff = a - x
        per_layer.append(float(np.sqrt(np.mean(diff ** 2))))
    final = float(np.sqrt(np.mean((base.logits - approx.logits) ** 2)))
    return PlanEvaluation(final_rmse=final, per_layer_rmse=per_layer)


def random_plan(model, fractions, drum, rng, quantile=0.0):
    """Uniformly random plan with floor(f*C) approximate channels per layer;
    baseline for importance-guided comparisons."""
    sets = []
    for frac, layer in zip(fractions, model.layers):
        c = layer.conv.out_channels
        n = int(math.floor(frac * c + 1e-9))
        sets.append(frozenset(rng.choice(c, size=n, replace=False).tolist()))
    return MappingPlan(quantile, sets, drum)
