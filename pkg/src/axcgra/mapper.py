"""Workload mapping onto the fabric: analytic transfer schedule, virtual
connection pruning, annealed placement, and negotiated-congestion routing.

The per-layer cycle model charges ceil(max(accurate, approximate channels)
* MACs-per-channel / lane width) plus fixed setup and per-layer overheads;
accurate and approximate channel streams execute concurrently, so a plan
and its complement cost the same. The transfer trace aggregates one
weighted transfer per (producer, consumer) pair per layer phase.

Pruning starts from the fully connected virtual architecture and greedily
drops the lightest connections; a dropped used connection may reroute
through a register file relay while the added relay cycles stay within a
budget. Placement seeds greedily (heaviest pairs adjacent) and refines by
simulated annealing with a fixed, documented schedule. Routing is
PathFinder-style negotiated congestion over the per-plane track graphs of
the Wilton mesh.
"""

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RoutingFailedError, ValidationError
from .fabric import (
    OPPOSITE,
    SIDE_STEP,
    STEP_SIDE,
    TileKind,
    wilton_permutation,
)

DATA = "data"
CONTROL = "control"


@dataclass
class Transfer:
    cycle: int
    src: str
    dst: str
    kind: str  # data | control
    weight: int

    def __post_init__(self):
        if self.cycle < 0:
            raise ValidationError("transfer cycle must be non-negative")
        if self.src == self.dst:
            raise ValidationError(f"self-transfer on {self.src}")


@dataclass
class TransferTrace:
    transfers: list = field(default_factory=list)

    def aggregated(self):
        """Total weight per (src, dst, kind)."""
        out = {}
        for t in self.transfers:
            key = (t.src, t.dst, t.kind)
            out[key] = out.get(key, 0) + t.weight
        return out

    def pair_weights(self):
        """Total weight per (src, dst), both planes combined."""
        out = {}
        for t in self.transfers:
            key = (t.src, t.dst)
            out[key] = out.get(key, 0) + t.weight
        return out


@dataclass
class VirtualArch:
    """Functional units plus a weighted directed connection set (complete
    minus self-loops when fresh from a fabric)."""

    fus: dict  # fu_id -> (TileKind, drum_k | None)
    connections: dict  # (src, dst) -> weight

    @classmethod
    def from_fabric(cls, fabric):
        fus = {
            t.id: (t.kind, t.drum_k)
            for t in fabric.functional_tiles()
        }
        ids = sorted(fus)
        conns = {(a, b): 0 for a in ids for b in ids if a != b}
        return cls(fus=fus, connections=conns)

    def register_files(self):
        return sorted(
            f for f, (kind, _) in self.fus.items()
            if kind is TileKind.REGISTER_FILE
        )


@dataclass
class ScheduleResult:
    trace: TransferTrace
    cycles: int
    per_layer_cycles: list
    total_macs: int
    utilization: dict  # kind value -> [0, 1]


def _round_robin(items):
    i = 0
    while True:
        yield items[i % len(items)]
        i += 1


def schedule_workload(model, plan, fabric):
    """Analytic schedule of the planned model on a preset fabric."""
    plan.validate_against(model)
    by_kind = {
        kind: sorted(t.id for t in fabric.tiles_of_kind(kind))
        for kind in TileKind
    }
    for kind in (TileKind.MUL_ACCURATE, TileKind.MUL_APPROX, TileKind.ALU,
                 TileKind.REGISTER_FILE, TileKind.LOAD_STORE_SRAM):
        if not by_kind[kind]:
            raise ValidationError(f"fabric has no {kind.value} tile")

    controlled = {}
    for t in fabric.functional_tiles():
        if t.controller is not None:
            controlled.setdefault(t.controller, []).append(t.id)

    lane = fabric.lane_width
    rf_cycle = _round_robin(by_kind[TileKind.REGISTER_FILE])
    alu_cycle = _round_robin(by_kind[TileKind.ALU])
    lsu_cycle = _round_robin(by_kind[TileKind.LOAD_STORE_SRAM])
    imm_cycle = _round_robin(by_kind[TileKind.IMMEDIATE_UNIT] or
                             by_kind[TileKind.REGISTER_FILE])
    addr_cycle = _round_robin(by_kind[TileKind.ADDR_MUL32] or
                              by_kind[TileKind.MUL_ACCURATE])

    transfers = []
    per_layer_cycles = []
    total_macs = 0
    busy = {"acc": 0, "ax": 0, "mem": 0}
    start = 0
    c, h, w = model.input_shape

    for li, layer in enumerate(model.layers):
        spec = layer.conv
        n_ax = len(plan.approx_channels[li])
        n_acc = spec.out_channels - n_ax
        macs_per_oc = spec.macs_per_channel(h, w)
        oh, ow = spec.out_size(h, w)
        out_elems = spec.out_channels * oh * ow
        in_elems = c * h * w
        total_macs += spec.out_channels * macs_per_oc

        stream = int(math.ceil(max(n_acc, n_ax) * macs_per_oc / lane))
        layer_cycles = fabric.setup_cycles + stream
        per_layer_cycles.append(layer_cycles)
        busy["acc"] += int(math.ceil(n_acc * macs_per_oc / lane))
        busy["ax"] += int(math.ceil(n_ax * macs_per_oc / lane))
        busy["mem"] += int(math.ceil((out_elems + in_elems) / lane))

        def emit(src, dst, kind, weight):
            if weight > 0 and src != dst:
                transfers.append(Transfer(start, src, dst, kind, int(weight)))

        # operand fetch + accumulate + writeback per multiplier class
        for cls_kind, n_ch in ((TileKind.MUL_ACCURATE, n_acc),
                               (TileKind.MUL_APPROX, n_ax)):
            units = by_kind[cls_kind]
            if n_ch == 0:
                continue
            shares = [n_ch // len(units)] * len(units)
            for i in range(n_ch % len(units)):
                shares[i] += 1
            for unit, share in zip(units, shares):
                if share == 0:
                    continue
                macs = share * macs_per_oc
                alu = next(alu_cycle)
                emit(next(rf_cycle), unit, DATA, macs)
                emit(unit, alu, DATA, macs)
                emit(alu, next(lsu_cycle), DATA, share * oh * ow)

        # address generation and activation reload
        addr = next(addr_cycle)
        emit(next(imm_cycle), addr, DATA, oh * ow)
        emit(addr, next(lsu_cycle), DATA, out_elems)
        emit(next(lsu_cycle), next(rf_cycle), DATA, in_elems)

        # control words, one instruction per cycle per controlled tile
        for id_tile, members in sorted(controlled.items()):
            for member in members:
                emit(id_tile, member, CONTROL, layer_cycles)

        start += layer_cycles
        c, h, w = spec.out_channels, oh, ow

    cycles = start + fabric.layer_overhead_cycles * len(model.layers)
    util = _utilization(by_kind, busy, cycles)
    return ScheduleResult(
        trace=TransferTrace(transfers),
        cycles=cycles,
        per_layer_cycles=per_layer_cycles,
        total_macs=total_macs,
        utilization=util,
    )


def _utilization(by_kind, busy, cycles):
    """Per-kind activity estimate in [0,1]; feeds the power model."""
    def frac(x):
        return min(1.0, x / cycles) if cycles > 0 else 0.0

    compute = frac(busy["acc"] + busy["ax"])
    mem = frac(busy["mem"])
    return {
        TileKind.INSTRUCTION_DECODE.value: 1.0,
        TileKind.MUL_ACCURATE.value: frac(busy["acc"]),
        TileKind.MUL_APPROX.value: frac(busy["ax"]),
        TileKind.ALU.value: compute,
        TileKind.REGISTER_FILE.value: compute,
        TileKind.LOAD_STORE_SRAM.value: mem,
        TileKind.ADDR_MUL32.value: mem,
        TileKind.IMMEDIATE_UNIT.value: mem,
        TileKind.SWITCHBOX.value: 0.6,
    }


# ---------------------------------------------------------------------------
# pruning
# ---------------------------------------------------------------------------

@dataclass
class PruneResult:
    arch: VirtualArch
    removed: list
    relay_map: dict  # (src, dst) -> relay register file id
    relay_cost: int
    initial_count: int

    @property
    def kept_count(self):
        return len(self.arch.connections)

    @property
    def removed_fraction(self):
        if self.initial_count == 0:
            return 0.0
        return len(self.removed) / self.initial_count


def prune(arch, trace, relay_budget_fraction=0.05, base_cycles=None):
    """Drop connections lightest-first while every transfer pair keeps a
    path, either direct or through one register-file relay. Relay traffic
    (one extra cycle per transferred item) is capped at
    relay_budget_fraction * base_cycles."""
    pairs = trace.pair_weights()
    for (src, dst) in pairs:
        for fu in (src, dst):
            if fu not in arch.fus:
                raise ValidationError(f"trace references unknown FU {fu}")
    if base_cycles is None:
        base_cycles = sum(pairs.values())
    budget = relay_budget_fraction * base_cycles

    conns = dict.fromkeys(arch.connections, 0)
    rfs = arch.register_files()

    def routing_of(pair):
        """(via, cost): via=None for direct, rf id for relayed; membership
        checks only, no mutation."""
        if pair in conns:
            return None, 0
        src, dst = pair
        for rf in rfs:
            if rf not in (src, dst) and (src, rf) in conns and (rf, dst) in conns:
                return rf, pairs[pair]
        return "unroutable", None

    def try_routing():
        """Total relay cost, or None if some transfer pair lost all paths."""
        cost = 0
        for pair in pairs:
            via, c = routing_of(pair)
            if via == "unroutable":
                return None
            if via is not None:
                cost += c
        return cost

    def recompute_loads():
        for key in conns:
            conns[key] = 0
        for pair, weight in pairs.items():
            via, _ = routing_of(pair)
            if via is None:
                conns[pair] += weight
            else:
                conns[(pair[0], via)] += weight
                conns[(via, pair[1])] += weight

    recompute_loads()
    removed = []

    # connections carrying no traffic sit on no route; drop them in one batch
    for key in sorted(k for k, load in conns.items() if load == 0):
        del conns[key]
        removed.append(key)

    relay_cost = 0
    kept_forever = set()
    while True:
        candidates = sorted(
            (load, key) for key, load in conns.items() if key not in kept_forever
        )
        progressed = False
        for _, key in candidates:
            saved = conns.pop(key)
            cost = try_routing()
            if cost is None or cost > budget:
                conns[key] = saved
                kept_forever.add(key)
                continue
            removed.append(key)
            relay_cost = cost
            recompute_loads()
            progressed = True
            break
        if not progressed:
            break

    relay_map = {}
    for pair in pairs:
        via, _ = routing_of(pair)
        if via is not None and via != "unroutable":
            relay_map[pair] = via

    pruned = VirtualArch(fus=dict(arch.fus), connections=dict(conns))
    return PruneResult(
        arch=pruned,
        removed=removed,
        relay_map=relay_map,
        relay_cost=relay_cost,
        initial_count=len(arch.connections),
    )


def apply_relays(trace, relay_map):
    """Split relayed transfers into their two physical legs."""
    if not relay_map:
        return trace
    out = []
    for t in trace.transfers:
        via = relay_map.get((t.src, t.dst))
        if via is None:
            out.append(t)
        else:
            out.append(Transfer(t.cycle, t.src, via, t.kind, t.weight))
            out.append(Transfer(t.cycle, via, t.dst, t.kind, t.weight))
    return TransferTrace(out)


# ---------------------------------------------------------------------------
# placement
# ---------------------------------------------------------------------------

@dataclass
class Placement:
    cells: dict  # fu_id -> (row, col)
    cost: float
    greedy_cost: float

    def to_dict(self):
        return {fu: list(pos) for fu, pos in sorted(self.cells.items())}


def _manhattan(a, b):
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def _group_key(kind, drum_k):
    return (kind.value, drum_k if kind is TileKind.MUL_APPROX else None)


def place(arch, fabric, seed=0):
    """Assign every FU to a compatible grid cell, minimizing total
    weight * Manhattan distance over the arch's connections.

    Greedy seed puts the heaviest-talking pairs on nearby cells, then
    simulated annealing (fixed seed; T0 = 2x mean sampled move delta,
    100 moves per connected FU per temperature, 0.95 geometric cooling,
    stop below 1e-3*T0) refines by same-group swaps and relocations.
    The returned cost never exceeds the greedy cost.
    """
    cells_by_group = {}
    for t in fabric.functional_tiles():
        cells_by_group.setdefault(_group_key(t.kind, t.drum_k), []).append(
            t.position
        )
    for group in cells_by_group.values():
        group.sort()

    fu_group = {}
    for fu, (kind, drum_k) in arch.fus.items():
        key = _group_key(kind, drum_k)
        if key not in cells_by_group:
            raise ValidationError(f"no fabric cell can host {fu} ({key})")
        fu_group[fu] = key
    for key in set(fu_group.values()):
        need = sum(1 for f in fu_group if fu_group[f] == key)
        if need > len(cells_by_group[key]):
            raise ValidationError(
                f"{need} FUs of group {key} but only "
                f"{len(cells_by_group[key])} cells"
            )

    weighted = [
        (wgt, pair) for pair, wgt in arch.connections.items() if wgt > 0
    ]
    weighted.sort(key=lambda x: (-x[0], x[1]))
    incident = {}
    for wgt, (src, dst) in weighted:
        incident.setdefault(src, []).append((dst, wgt))
        incident.setdefault(dst, []).append((src, wgt))

    taken = set()
    assign = {}
    center = ((fabric.rows - 1) / 2, (fabric.cols - 1) / 2)

    def nearest_free(group, target):
        best = None
        for cell in cells_by_group[group]:
            if cell in taken:
                continue
            d = abs(cell[0] - target[0]) + abs(cell[1] - target[1])
            if best is None or (d, cell) < best:
                best = (d, cell)
        return best[1]

    for _, (src, dst) in weighted:
        if src not in assign:
            anchor = assign.get(dst, center)
            assign[src] = nearest_free(fu_group[src], anchor)
            taken.add(assign[src])
        if dst not in assign:
            assign[dst] = nearest_free(fu_group[dst], assign[src])
            taken.add(assign[dst])
    for fu in sorted(arch.fus):
        if fu not in assign:
            assign[fu] = nearest_free(fu_group[fu], center)
            taken.add(assign[fu])

    def total_cost(a):
        return float(
            sum(w * _manhattan(a[s], a[d]) for (s, d), w in
                arch.connections.items() if w > 0)
        )

    def fu_cost(fu, pos, a):
        return float(
            sum(w * _manhattan(pos, a[o]) for o, w in incident.get(fu, ()))
        )

    greedy_cost = total_cost(assign)
    active = sorted(incident)
    if not active:
        return Placement(cells=assign, cost=greedy_cost, greedy_cost=greedy_cost)

    rng = np.random.default_rng(seed)
    occupant = {pos: fu for fu, pos in assign.items()}

    def propose():
        fu = active[int(rng.integers(len(active)))]
        group = cells_by_group[fu_group[fu]]
        cell = group[int(rng.integers(len(group)))]
        if cell == assign[fu]:
            return None
        other = occupant.get(cell)
        old = assign[fu]
        delta = -fu_cost(fu, old, assign) + fu_cost(fu, cell, assign)
        if other is not None:
            delta += -fu_cost(other, cell, assign) + fu_cost(other, old, assign)
            # subtract double-counted mutual edges (their distance is unchanged)
            for o, w in incident.get(fu, ()):
                if o == other:
                    delta -= 2 * w * (
                        _manhattan(cell, assign[other]) - _manhattan(old, assign[other])
                    )
        return fu, other, old, cell, delta

    def commit(fu, other, old, cell):
        assign[fu] = cell
        occupant[cell] = fu
        if other is not None:
            assign[other] = old
            occupant[old] = other
        else:
            del occupant[old]

    # temperature from sampled move magnitudes
    samples = []
    for _ in range(100):
        p = propose()
        if p is not None:
            samples.append(abs(p[4]))
    t0 = 2.0 * (sum(samples) / len(samples)) if samples else 0.0

    cost = greedy_cost
    best_cost = cost
    best = dict(assign)
    temp = t0
    while temp > 1e-3 * t0 and t0 > 0:
        for _ in range(100 * len(active)):
            p = propose()
            if p is None:
                continue
            fu, other, old, cell, delta = p
            if delta <= 0 or rng.random() < math.exp(-delta / temp):
                commit(fu, other, old, cell)
                cost += delta
                if cost < best_cost:
                    best_cost = cost
                    best = dict(assign)
        temp *= 0.95

    return Placement(cells=best, cost=total_cost(best), greedy_cost=greedy_cost)


# ---------------------------------------------------------------------------
# routing
# ---------------------------------------------------------------------------

@dataclass
class Hop:
    switchbox: tuple
    in_side: str  # 'P' when entering from the tile port
    in_track: int | None
    out_side: str  # 'P' when leaving into the tile port
    out_track: int | None

    def to_list(self):
        return [
            list(self.switchbox),
            self.in_side,
            self.in_track,
            self.out_side,
            self.out_track,
        ]


@dataclass
class RoutingResult:
    status: str  # routed | congested
    paths: dict  # (src, dst, kind) -> [Hop, ...]
    occupancy: dict  # plane -> {wire -> count}
    max_congestion: float
    iterations: int
    overused: list

    def to_dict(self):
        return {
            "status": self.status,
            "iterations": self.iterations,
            "max_congestion": self.max_congestion,
            "paths": {
                f"{kind}:{src}->{dst}": [h.to_list() for h in hops]
                for (src, dst, kind), hops in sorted(self.paths.items())
            },
        }


class _TrackGraph:
    """Directed-wire graph of one NoC plane."""

    def __init__(self, fabric):
        self.fabric = fabric
        self.tracks = fabric.track_count
        sbs = {t.position for t in fabric.switchboxes()}
        self.wires = []  # (pos_a, pos_b, track), pos_a < pos_b
        self.wire_idx = {}
        for a, b in fabric.noc_channels():
            lo, hi = (a, b) if a < b else (b, a)
            for t in range(self.tracks):
                self.wire_idx[(lo, hi, t)] = len(self.wires)
                self.wires.append((lo, hi, t))
        n = len(self.wires)
        # directed node = wire * 2 + end_bit (0: toward pos_a, 1: toward pos_b)
        self.succ = [[] for _ in range(2 * n)]
        for wi, (a, b, t) in enumerate(self.wires):
            for end_bit, (end, other) in enumerate(((a, b), (b, a))):
                entry_side = STEP_SIDE[(other[0] - end[0], other[1] - end[1])]
                for turn in ("straight", "left", "right"):
                    out_side, out_track = wilton_permutation(
                        entry_side, t, turn, self.tracks
                    )
                    step = SIDE_STEP[out_side]
                    nxt = (end[0] + step[0], end[1] + step[1])
                    if nxt not in sbs:
                        continue
                    lo, hi = (end, nxt) if end < nxt else (nxt, end)
                    wj = self.wire_idx.get((lo, hi, out_track))
                    if wj is None:
                        continue
                    to_bit = 1 if (self.wires[wj][1] == nxt) else 0
                    self.succ[wi * 2 + end_bit].append(wj * 2 + to_bit)

    def node_wire(self, node):
        return node // 2

    def node_end(self, node):
        a, b, _ = self.wires[node // 2]
        return b if node % 2 else a

    def node_entry(self, node):
        a, b, _ = self.wires[node // 2]
        return a if node % 2 else b

    def ports(self, position):
        """Directed start nodes leaving each switchbox adjacent to a cell."""
        out = []
        for sb in self.fabric.adjacent_switchboxes(tuple(position)):
            for t in range(self.tracks):
                for side in SIDE_STEP:
                    step = SIDE_STEP[side]
                    nxt = (sb.position[0] + step[0], sb.position[1] + step[1])
                    lo, hi = (
                        (sb.position, nxt) if sb.position < nxt else (nxt, sb.position)
                    )
                    wi = self.wire_idx.get((lo, hi, t))
                    if wi is None:
                        continue
                    to_bit = 1 if self.wires[wi][1] == nxt else 0
                    out.append(wi * 2 + to_bit)
        return sorted(set(out))

    def sink_sbs(self, position):
        return {sb.position for sb in
                self.fabric.adjacent_switchboxes(tuple(position))}


def route(placement, trace, fabric, max_iterations=50, raise_on_failure=False):
    """Negotiated-congestion routing of every aggregated transfer.

    Control and data transfers route on separate planes of the same mesh.
    Connections are processed heaviest first; each iteration rips up and
    reroutes everything with growing congestion penalties until no wire is
    over capacity. On failure the over-capacity wire list is returned in
    the result (or raised, if asked).
    """
    graphs = {DATA: _TrackGraph(fabric), CONTROL: _TrackGraph(fabric)}
    conns = sorted(
        trace.aggregated().items(), key=lambda kv: (-kv[1], kv[0])
    )
    for (src, dst, kind), _ in conns:
        for fu in (src, dst):
            if fu not in placement.cells:
                raise ValidationError(f"FU {fu} missing from placement")

    hist = {plane: np.zeros(len(g.wires)) for plane, g in graphs.items()}
    occ = {plane: np.zeros(len(g.wires), dtype=np.int64)
           for plane, g in graphs.items()}
    routes = {}
    pres_fac = 0.5
    iterations = 0

    for iteration in range(1, max_iterations + 1):
        iterations = iteration
        for plane in occ:
            occ[plane][:] = 0
        routes.clear()
        for (src, dst, kind), _weight in conns:
            g = graphs[kind]
            nodes = _dijkstra(
                g,
                placement.cells[src],
                placement.cells[dst],
                occ[kind],
                hist[kind],
                pres_fac,
            )
            if nodes is None:
                # no path exists at any cost: topological, not congestion
                raise RoutingFailedError(
                    [((kind, src, dst), 0)], iteration
                )
            routes[(src, dst, kind)] = nodes
            for node in nodes:
                occ[kind][g.node_wire(node)] += 1
        over = {
            plane: np.flatnonzero(occ[plane] > 1) for plane in occ
        }
        if not any(len(v) for v in over.values()):
            break
        for plane in occ:
            hist[plane][over[plane]] += occ[plane][over[plane]] - 1
        pres_fac *= 1.5

    overused = []
    for plane, g in graphs.items():
        for wi in np.flatnonzero(occ[plane] > 1):
            overused.append(((plane,) + g.wires[int(wi)], int(occ[plane][wi])))
    status = "congested" if overused else "routed"
    if status == "congested" and raise_on_failure:
        raise RoutingFailedError(overused, iterations)

    max_cong = 0.0
    for plane in occ:
        if len(occ[plane]):
            max_cong = max(max_cong, float(np.max(occ[plane])))
    paths = {
        key: _to_hops(graphs[key[2]], nodes, placement.cells[key[0]],
                      placement.cells[key[1]])
        for key, nodes in routes.items()
    }
    return RoutingResult(
        status=status,
        paths=paths,
        occupancy={
            plane: {g.wires[i]: int(v) for i, v in enumerate(occ[plane]) if v}
            for plane, g in graphs.items()
        },
        max_congestion=max_cong,
        iterations=iterations,
        overused=overused,
    )


def _dijkstra(graph, src_cell, dst_cell, occ, hist, pres_fac):
    """Cheapest directed-wire sequence from src ports to dst-adjacent ends."""
    sinks = graph.sink_sbs(dst_cell)

    def node_cost(node):
        w = graph.node_wire(node)
        over = occ[w]  # adding us makes occupancy occ+1; capacity is 1
        return (1.0 + hist[w]) * (1.0 + pres_fac * over)

    dist = {}
    prev = {}
    heap = []
    for node in graph.ports(src_cell):
        c = node_cost(node)
        if c < dist.get(node, math.inf):
            dist[node] = c
            heapq.heappush(heap, (c, node, -1))
    while heap:
        d, node, parent = heapq.heappop(heap)
        if node in prev:
            continue
        prev[node] = parent
        if graph.node_end(node) in sinks:
            seq = []
            while node != -1:
                seq.append(node)
                node = prev[node]
            return list(reversed(seq))
        for nxt in graph.succ[node]:
            if nxt in prev:
                continue
            nd = d + node_cost(nxt)
            if nd < dist.get(nxt, math.inf):
                dist[nxt] = nd
                heapq.heappush(heap, (nd, nxt, node))
    return None


def _to_hops(graph, nodes, src_cell, dst_cell):
    """Convert a directed-wire sequence into per-switchbox hop records."""
    hops = []
    first = nodes[0]
    entry_sb = graph.node_entry(first)
    a, b, t0 = graph.wires[graph.node_wire(first)]
    out_side = STEP_SIDE[
        (graph.node_end(first)[0] - entry_sb[0],
         graph.node_end(first)[1] - entry_sb[1])
    ]
    hops.append(Hop(entry_sb, "P", None, out_side, t0))
    for here, nxt in zip(nodes, nodes[1:]):
        sb = graph.node_end(here)
        _, _, t_in = graph.wires[graph.node_wire(here)]
        in_side = STEP_SIDE[
            (graph.node_entry(here)[0] - sb[0], graph.node_entry(here)[1] - sb[1])
        ]
        _, _, t_out = graph.wires[graph.node_wire(nxt)]
        out_side = STEP_SIDE[
            (graph.node_end(nxt)[0] - sb[0], graph.node_end(nxt)[1] - sb[1])
        ]
        hops.append(Hop(sb, in_side, t_in, out_side, t_out))
    last = nodes[-1]
    sb = graph.node_end(last)
    _, _, t_last = graph.wires[graph.node_wire(last)]
    in_side = STEP_SIDE[
        (graph.node_entry(last)[0] - sb[0], graph.node_entry(last)[1] - sb[1])
    ]
    hops.append(Hop(sb, in_side, t_last, "P", None))
    return hops


def export_dot(arch, placement, path):
    """Placed connection graph for offline visualization."""
    lines = ["digraph mapped {", "  node [shape=box];"]
    for fu, cell in sorted(placement.cells.items()):
        kind = arch.fus[fu][0].value if fu in arch.fus else "?"
        lines.append(
            f'  "{fu}" [label="{fu}\\n{kind}\\n{cell}", '
            f'pos="{cell[1]},{-cell[0]}!"];'
        )
    for (src, dst), w in sorted(arch.connections.items()):
        if w > 0:
            lines.append(f'  "{src}" -> "{dst}" [label="{w}"];')
    lines.append("}")
    text = "\n".join(lines) + "\n"
    with open(path, "w") as f:
        f.write(text)
    return path
