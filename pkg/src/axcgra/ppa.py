"""Power, timing, and area model with static voltage islands.

Tile delays scale with supply voltage by the alpha-power law
    delay(v) = base * [v / (v - Vth)^alpha] / [vnom / (vnom - Vth)^alpha],
dynamic power scales with (v/vnom)^2 and utilization, leakage linearly
with v/vnom. Island assignment drops voltage-scaling candidates (the
approximate multipliers, ALUs, register files, and the switchboxes touching
them) to the low supply whenever their scaled delay still meets the clock
period; address multipliers and the accurate multipliers always stay at
nominal. Level shifters are charged once per NoC adjacency that crosses
domains.

The non-multiplier tile costs shipped in data/default_costs.json are
engineering estimates, not measurements; every check that depends on them
is a direction or band check.
"""

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import FormatError, TimingViolationError, ValidationError
from .fabric import SIDE_STEP, TileKind

# published efficiency range of comparable fabrics; reporting context only
REFERENCE_GOPS_PER_WATT_RANGE = (378.0, 440.0)

SCALING_CANDIDATE_KINDS = (
    TileKind.MUL_APPROX,
    TileKind.ALU,
    TileKind.REGISTER_FILE,
)
ALWAYS_NOMINAL_KINDS = (TileKind.MUL_ACCURATE, TileKind.ADDR_MUL32)

DEFAULT_PERIOD_PS = 2500.0  # 400 MHz


@dataclass(frozen=True)
class CostEntry:
    delay_ps: float
    dynamic_power_uw: float
    leakage_uw: float
    area_um2: float

    def __post_init__(self):
        for name in ("delay_ps", "dynamic_power_uw", "leakage_uw", "area_um2"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"cost entry field {name} must be positive")


@dataclass
class TileCostTable:
    """Per-kind costs; approximate multipliers are keyed by their k."""

    entries: dict  # kind value -> CostEntry
    approx_entries: dict  # k (int) -> CostEntry

    def __post_init__(self):
        acc = self.entries.get(TileKind.MUL_ACCURATE.value)
        for k, e in self.approx_entries.items():
            if k <= 7 and acc is not None and not acc.delay_ps > e.delay_ps:
                raise ValidationError(
                    f"accurate multiplier must be slower than DRUM{k}"
                )

    def for_tile(self, tile):
        if tile.kind is TileKind.MUL_APPROX:
            entry = self.approx_entries.get(tile.drum_k)
            if entry is None:
                raise ValidationError(
                    f"no cost entry for approximate multiplier k={tile.drum_k}"
                )
            return entry
        entry = self.entries.get(tile.kind.value)
        if entry is None:
            raise ValidationError(f"no cost entry for kind {tile.kind.value}")
        return entry

    def to_dict(self):
        d = {
            kind: vars(e).copy() for kind, e in sorted(self.entries.items())
        }
        d["mul_approx"] = {
            str(k): vars(e).copy() for k, e in sorted(self.approx_entries.items())
        }
        return d

    @classmethod
    def from_dict(cls, d):
        entries = {}
        approx = {}
        for kind, e in d.items():
            if kind == "mul_approx":
                approx = {int(k): CostEntry(**v) for k, v in e.items()}
            else:
                entries[kind] = CostEntry(**e)
        return cls(entries=entries, approx_entries=approx)


@dataclass(frozen=True)
class ScalingModel:
    v_nominal: float = 0.8
    v_threshold: float = 0.35
    alpha: float = 1.3
    power_exponent: float = 2.0
    shifter_area_um2: float = 12.0
    shifter_power_uw: float = 10.0

    def to_dict(self):
        return vars(self).copy()

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class VoltageDomain:
    name: str
    voltage_v: float
    members: set  # tile ids

    def __post_init__(self):
        if not 0.5 <= self.voltage_v <= 1.0:
            raise ValidationError(
                f"domain voltage {self.voltage_v} outside the model's "
                f"[0.5, 1.0] V validity range"
            )
        self.members = set(self.members)


def load_cost_config(path=None):
    """(TileCostTable, ScalingModel) from a JSON file; None loads defaults."""
    if path is None:
        text = resources.files("axcgra").joinpath(
            "data/default_costs.json"
        ).read_text()
    else:
        text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"cost config is not valid JSON ({e})") from e
    if d.get("format") != "axcgra-costs-v1":
        raise FormatError(f"not a cost config (format={d.get('format')!r})")
    table = TileCostTable.from_dict(d["tiles"])
    scaling = ScalingModel.from_dict(d.get("scaling", {}))
    return table, scaling


def delay_at(base_delay_ps, v, m):
    """Alpha-power-law delay at supply v."""
    if v <= m.v_threshold:
        raise ValidationError(
            f"supply {v} V at or below threshold {m.v_threshold} V"
        )
    factor = (v / (v - m.v_threshold) ** m.alpha) / (
        m.v_nominal / (m.v_nominal - m.v_threshold) ** m.alpha
    )
    return base_delay_ps * factor


def nominal_domains(fabric, m=None):
    """Single all-nominal domain pair (low domain empty)."""
    m = m or ScalingModel()
    return (
        VoltageDomain("low", 0.6, set()),
        VoltageDomain("nominal", m.v_nominal, {t.id for t in fabric.tiles}),
    )


def assign_islands(fabric, costs, clock_period_ps=DEFAULT_PERIOD_PS, m=None,
                   low_voltage=0.6):
    """Two static domains: candidates whose scaled delay still meets the
    period join the low-voltage island, everything else stays nominal."""
    m = m or ScalingModel()
    candidate_ids = set()
    candidate_cells = set()
    for t in fabric.functional_tiles():
        if t.kind in SCALING_CANDIDATE_KINDS:
            candidate_ids.add(t.id)
            candidate_cells.add(t.position)
    for sb in fabric.switchboxes():
        r, c = sb.position
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            if (r + dr, c + dc) in candidate_cells:
                candidate_ids.add(sb.id)
                break

    low, high = set(), set()
    for t in fabric.tiles:
        if t.kind in ALWAYS_NOMINAL_KINDS or t.id not in candidate_ids:
            high.add(t.id)
            continue
        scaled = delay_at(costs.for_tile(t).delay_ps, low_voltage, m)
        if scaled <= clock_period_ps:
            low.add(t.id)
        else:
            high.add(t.id)
    return (
        VoltageDomain("low", low_voltage, low),
        VoltageDomain("nominal", m.v_nominal, high),
    )


@dataclass
class TimingReport:
    period_ps: float
    slacks: dict  # tile id -> slack ps
    slack_min: float
    slack_max: float
    slack_spread_ps: float  # over functional (non-switchbox) tiles

    def to_dict(self):
        return {
            "period_ps": self.period_ps,
            "slack_min": self.slack_min,
            "slack_max": self.slack_max,
            "slack_spread_ps": self.slack_spread_ps,
        }


def _domain_voltage(domains, tile_id):
    for d in domains:
        if tile_id in d.members:
            return d.voltage_v
    raise ValidationError(f"tile {tile_id} belongs to no voltage domain")


def _check_domains_cover(fabric, domains):
    seen = set()
    for d in domains:
        dup = seen & d.members
        if dup:
            raise ValidationError(f"tiles in more than one domain: {sorted(dup)}")
        seen |= d.members
    missing = {t.id for t in fabric.tiles} - seen
    if missing:
        raise ValidationError(f"tiles in no domain: {sorted(missing)}")


def timing_check(fabric, domains, costs, period_ps=DEFAULT_PERIOD_PS, m=None):
    """Slack of every tile at its domain voltage; raises listing offenders
    when any slack is negative."""
    m = m or ScalingModel()
    _check_domains_cover(fabric, domains)
    slacks = {}
    offenders = []
    spread_values = []
    for t in fabric.tiles:
        v = _domain_voltage(domains, t.id)
        d = delay_at(costs.for_tile(t).delay_ps, v, m)
        slack = period_ps - d
        slacks[t.id] = slack
        if t.kind is not TileKind.SWITCHBOX:
            spread_values.append(slack)
        if slack < 0:
            offenders.append((t.id, d, slack))
    if offenders:
        raise TimingViolationError(offenders, period_ps)
    return TimingReport(
        period_ps=period_ps,
        slacks=slacks,
        slack_min=min(slacks.values()),
        slack_max=max(slacks.values()),
        slack_spread_ps=max(spread_values) - min(spread_values),
    )


def count_domain_crossings(fabric, domains):
    """Adjacent (tile, switchbox) ports and (switchbox, switchbox) channels
    whose endpoints sit in different domains; one shifter bank each."""
    volt = {}
    for d in domains:
        for tid in d.members:
            volt[tid] = d.voltage_v
    crossings = 0
    for t in fabric.functional_tiles():
        for sb in fabric.adjacent_switchboxes(t):
            if volt[t.id] != volt[sb.id]:
                crossings += 1
    for a, b in fabric.noc_channels():
        ta, tb = fabric.at(a), fabric.at(b)
        if volt[ta.id] != volt[tb.id]:
            crossings += 1
    return crossings


@dataclass
class PpaReport:
    total_area_um2: float
    power_mw: dict  # domain name -> mW
    total_power_mw: float
    shifter_power_mw: float
    shifter_area_um2: float
    level_shifter_overhead_fraction: float
    crossings: int
    slack_min: float
    slack_max: float
    slack_spread_ps: float
    energy_per_inference_uj: float | None
    gops: float | None
    gops_per_watt: float | None
    cycles: int | None
    reference_gops_per_watt: tuple = REFERENCE_GOPS_PER_WATT_RANGE

    def to_dict(self):
        d = {
            "total_area_um2": self.total_area_um2,
            "power_mw": dict(self.power_mw),
            "total_power_mw": self.total_power_mw,
            "shifter_power_mw": self.shifter_power_mw,
            "shifter_area_um2": self.shifter_area_um2,
            "level_shifter_overhead_fraction":
                self.level_shifter_overhead_fraction,
            "crossings": self.crossings,
            "slack_min": self.slack_min,
            "slack_max": self.slack_max,
            "slack_spread_ps": self.slack_spread_ps,
            "energy_per_inference_uj": self.energy_per_inference_uj,
            "gops": self.gops,
            "gops_per_watt": self.gops_per_watt,
            "cycles": self.cycles,
            "reference_gops_per_watt": list(self.reference_gops_per_watt),
        }
        return d


def power_report(fabric, domains, costs, m=None, cycles=None, activity=None,
                 total_macs=None, period_ps=DEFAULT_PERIOD_PS):
    """Full PPA report.

    activity maps tile-kind value -> utilization in [0,1] (missing kinds
    default to 1). Energy/GOPS fields need cycles and total_macs; they stay
    None otherwise. Per-domain power plus shifter power sums exactly to the
    total.
    """
    m = m or ScalingModel()
    _check_domains_cover(fabric, domains)
    activity = activity or {}

    power_uw = {d.name: 0.0 for d in domains}
    area = 0.0
    for t in fabric.tiles:
        entry = costs.for_tile(t)
        v = _domain_voltage(domains, t.id)
        util = float(activity.get(t.kind.value, 1.0))
        if not 0.0 <= util <= 1.0:
            raise ValidationError(f"utilization {util} for {t.kind.value}")
        ratio = v / m.v_nominal
        dyn = entry.dynamic_power_uw * ratio ** m.power_exponent * util
        leak = entry.leakage_uw * ratio
        for d in domains:
            if t.id in d.members:
                power_uw[d.name] += dyn + leak
        area += entry.area_um2

    crossings = count_domain_crossings(fabric, domains)
    shifter_power_uw = crossings * m.shifter_power_uw
    shifter_area = crossings * m.shifter_area_um2
    total_uw = sum(power_uw.values()) + shifter_power_uw
    total_area = area + shifter_area

    timing = timing_check(fabric, domains, costs, period_ps, m)

    energy = gops = gops_per_watt = None
    if cycles is not None:
        freq_hz = 1e12 / period_ps
        seconds = cycles / freq_hz
        energy = total_uw * seconds  # uW * s = uJ
        if total_macs is not None:
            gops = 2.0 * total_macs / seconds / 1e9
            gops_per_watt = gops / (total_uw / 1e6)

    return PpaReport(
        total_area_um2=total_area,
        power_mw={k: v / 1e3 for k, v in power_uw.items()},
        total_power_mw=total_uw / 1e3,
        shifter_power_mw=shifter_power_uw / 1e3,
        shifter_area_um2=shifter_area,
        level_shifter_overhead_fraction=shifter_area / total_area,
        crossings=crossings,
        slack_min=timing.slack_min,
        slack_max=timing.slack_max,
        slack_spread_ps=timing.slack_spread_ps,
        energy_per_inference_uj=energy,
        gops=gops,
        gops_per_watt=gops_per_watt,
        cycles=cycles,
    )
