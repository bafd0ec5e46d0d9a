"""Heterogeneous CGRA fabric model: tile inventory on a 2D grid plus the
programmable NoC of Wilton switchboxes.

Layout convention: switchboxes occupy every even-parity cell (row + col
even), functional tiles sit on odd-parity cells, so each functional tile is
4-adjacent to up to four switchboxes. Switchboxes are mutually adjacent
diagonally; that diagonal sublattice is itself a square mesh, and its four
directions carry the N/E/S/W channel labels. Two identical NoC planes (one
for control words, one for data) share this topology with disjoint wires.

Three presets mirror a scalar design and two dual-lane vector designs of
width 4 and 8.
"""

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import FormatError, ValidationError


class TileKind(str, Enum):
    INSTRUCTION_DECODE = "instruction_decode"
    ALU = "alu"
    MUL_ACCURATE = "mul_accurate"
    MUL_APPROX = "mul_approx"
    ADDR_MUL32 = "addr_mul32"
    REGISTER_FILE = "register_file"
    LOAD_STORE_SRAM = "load_store_sram"
    IMMEDIATE_UNIT = "immediate_unit"
    SWITCHBOX = "switchbox"


MULTIPLIER_KINDS = (TileKind.MUL_ACCURATE, TileKind.MUL_APPROX, TileKind.ADDR_MUL32)
COMPUTE_KINDS = MULTIPLIER_KINDS + (TileKind.ALU,)

# Sides of a switchbox, mapped onto the diagonal steps of the sublattice.
SIDES = ("N", "E", "S", "W")
SIDE_STEP = {"N": (-1, -1), "E": (-1, 1), "S": (1, 1), "W": (1, -1)}
STEP_SIDE = {v: k for k, v in SIDE_STEP.items()}
OPPOSITE = {"N": "S", "S": "N", "E": "W", "W": "E"}
LEFT_EXIT = {"W": "N", "N": "E", "E": "S", "S": "W"}
RIGHT_EXIT = {"W": "S", "S": "E", "E": "N", "N": "W"}

PRESET_NAMES = ("scalar", "vector4", "vector8")


@dataclass
class Tile:
    id: str
    kind: TileKind
    position: tuple  # (row, col)
    domain: str | None = None
    drum_k: int | None = None
    controller: str | None = None  # id of the instruction-decode tile

    def __post_init__(self):
        self.position = (int(self.position[0]), int(self.position[1]))
        self.kind = TileKind(self.kind)

    def to_dict(self):
        d = {"id": self.id, "kind": self.kind.value, "position": list(self.position)}
        if self.domain is not None:
            d["domain"] = self.domain
        if self.drum_k is not None:
            d["drum_k"] = self.drum_k
        if self.controller is not None:
            d["controller"] = self.controller
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            id=str(d["id"]),
            kind=TileKind(d["kind"]),
            position=tuple(d["position"]),
            domain=d.get("domain"),
            drum_k=d.get("drum_k"),
            controller=d.get("controller"),
        )


@dataclass
class FabricConfig:
    rows: int
    cols: int
    tiles: list = field(default_factory=list)
    track_count: int = 4
    preset_name: str = "custom"
    lane_width: int = 1
    # analytic schedule constants; shift absolute cycle counts only
    setup_cycles: int = 64
    layer_overhead_cycles: int = 256

    def __post_init__(self):
        if self.track_count < 1:
            raise ValidationError("track_count must be >= 1")
        self._by_id = {t.id: t for t in self.tiles}
        self._by_pos = {t.position: t for t in self.tiles}
        if len(self._by_id) != len(self.tiles):
            raise ValidationError("duplicate tile ids")

    def tile(self, tile_id):
        return self._by_id[tile_id]

    def at(self, position):
        return self._by_pos.get(tuple(position))

    def switchboxes(self):
        return [t for t in self.tiles if t.kind is TileKind.SWITCHBOX]

    def functional_tiles(self):
        return [t for t in self.tiles if t.kind is not TileKind.SWITCHBOX]

    def tiles_of_kind(self, kind):
        return [t for t in self.tiles if t.kind is kind]

    def adjacent_switchboxes(self, tile):
        """Switchboxes 4-adjacent to a functional tile's cell."""
        r, c = tile.position if isinstance(tile, Tile) else tile
        out = []
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            sb = self.at((r + dr, c + dc))
            if sb is not None and sb.kind is TileKind.SWITCHBOX:
                out.append(sb)
        return out

    def noc_channels(self):
        """Undirected switchbox-to-switchbox channels, canonical order."""
        chans = []
        for sb in self.switchboxes():
            r, c = sb.position
            for side in ("E", "S"):  # each diagonal pair emitted once
                dr, dc = SIDE_STEP[side]
                other = self.at((r + dr, c + dc))
                if other is not None and other.kind is TileKind.SWITCHBOX:
                    chans.append((sb.position, other.position))
        return chans

    def to_dict(self):
        return {
            "format": "axcgra-fabric-v1",
            "preset_name": self.preset_name,
            "rows": self.rows,
            "cols": self.cols,
            "track_count": self.track_count,
            "lane_width": self.lane_width,
            "setup_cycles": self.setup_cycles,
            "layer_overhead_cycles": self.layer_overhead_cycles,
            "tiles": [t.to_dict() for t in self.tiles],
        }

    def save(self, path):
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        )

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "axcgra-fabric-v1":
            raise FormatError(f"not a fabric file (format={d.get('format')!r})")
        return cls(
            rows=int(d["rows"]),
            cols=int(d["cols"]),
            tiles=[Tile.from_dict(t) for t in d["tiles"]],
            track_count=int(d.get("track_count", 4)),
            preset_name=str(d.get("preset_name", "custom")),
            lane_width=int(d.get("lane_width", 1)),
            setup_cycles=int(d.get("setup_cycles", 64)),
            layer_overhead_cycles=int(d.get("layer_overhead_cycles", 256)),
        )

    @classmethod
    def load(cls, path):
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: not valid JSON ({e})") from e


def wilton_permutation(side, track, turn, track_count):
    """Exit (side, track) for a signal entering a switchbox on `side`.

    The turn permutations are fixed constants chosen for determinism:
      left from W: t -> (T - t) mod T        left from N: t -> (t + 1) mod T
      left from E: t -> (2T - 2 - t) mod T   left from S: t -> (t + 1) mod T
    Right turns are the inverses of the matching left turns, so every
    physical wire pairing is consistent in both directions. Straight
    connections keep the track index.
    """
    if side not in SIDES:
        raise ValidationError(f"unknown side {side!r}")
    if not 0 <= track < track_count:
        raise ValidationError(
            f"track {track} out of range for {track_count} tracks"
        )
    t, w = track, track_count
    if turn == "straight":
        return OPPOSITE[side], t
    if turn == "left":
        exit_side = LEFT_EXIT[side]
        perm = {
            "W": (w - t) % w,
            "N": (t + 1) % w,
            "E": (2 * w - 2 - t) % w,
            "S": (t + 1) % w,
        }[side]
        return exit_side, perm
    if turn == "right":
        exit_side = RIGHT_EXIT[side]
        perm = {
            "N": (w - t) % w,       # inverse of left-from-W
            "E": (t - 1) % w,       # inverse of left-from-N
            "S": (2 * w - 2 - t) % w,  # inverse of left-from-E
            "W": (t - 1) % w,       # inverse of left-from-S
        }[side]
        return exit_side, perm
    raise ValidationError(f"unknown turn {turn!r}")


def validate(fabric):
    """Structural diagnostics; an empty list means the fabric is sound."""
    diags = []
    seen = {}
    for t in fabric.tiles:
        r, c = t.position
        if not (0 <= r < fabric.rows and 0 <= c < fabric.cols):
            diags.append(f"tile {t.id} at {t.position} is outside the grid")
        if t.position in seen:
            diags.append(
                f"tiles {seen[t.position]} and {t.id} share position {t.position}"
            )
        else:
            seen[t.position] = t.id
        if t.kind is TileKind.MUL_APPROX and t.drum_k is None:
            diags.append(f"approximate multiplier {t.id} carries no drum_k")

    for t in fabric.functional_tiles():
        if not fabric.adjacent_switchboxes(t):
            diags.append(f"tile {t.id} has no adjacent switchbox port")

    # control reachability: controller assigned and on a shared NoC component
    comp = _switchbox_components(fabric)
    for t in fabric.functional_tiles():
        if t.kind is TileKind.INSTRUCTION_DECODE:
            continue
        if t.controller is None:
            diags.append(f"tile {t.id} has no instruction-decode controller")
            continue
        ctrl = fabric._by_id.get(t.controller)
        if ctrl is None or ctrl.kind is not TileKind.INSTRUCTION_DECODE:
            diags.append(f"tile {t.id}: controller {t.controller} is not an ID tile")
            continue
        mine = {comp.get(sb.position) for sb in fabric.adjacent_switchboxes(t)}
        theirs = {comp.get(sb.position) for sb in fabric.adjacent_switchboxes(ctrl)}
        if not (mine & theirs):
            diags.append(
                f"tile {t.id} unreachable from controller {t.controller} "
                f"on the control NoC"
            )
    return diags


def _switchbox_components(fabric):
    """Connected-component label per switchbox position (diagonal mesh)."""
    comp = {}
    nxt = 0
    for sb in fabric.switchboxes():
        if sb.position in comp:
            continue
        stack = [sb.position]
        comp[sb.position] = nxt
        while stack:
            r, c = stack.pop()
            for dr, dc in SIDE_STEP.values():
                q = (r + dr, c + dc)
                nb = fabric.at(q)
                if (
                    nb is not None
                    and nb.kind is TileKind.SWITCHBOX
                    and q not in comp
                ):
                    comp[q] = nxt
                    stack.append(q)
        nxt += 1
    return comp


def noc_is_connected(fabric):
    comp = _switchbox_components(fabric)
    return len(set(comp.values())) <= 1


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def _odd_cells(rows, cols):
    return [
        (r, c) for r in range(rows) for c in range(cols) if (r + c) % 2 == 1
    ]


def _even_cells(rows, cols):
    return [
        (r, c) for r in range(rows) for c in range(cols) if (r + c) % 2 == 0
    ]


def _roster_scalar(drum_k):
    """(id, kind, controller, drum_k) tuples; every functional tile gets its
    own instruction decoder. Voltage-scaling candidates (ALUs, register
    files, the approximate multiplier) lead the roster so they cluster."""
    tiles = []

    def fu(tid, kind, k=None):
        tiles.append((tid, kind, f"id_{tid}", k))
        tiles.append((f"id_{tid}", TileKind.INSTRUCTION_DECODE, None, None))

    fu("mul_ax0", TileKind.MUL_APPROX, drum_k)
    for i in range(4):
        fu(f"alu{i}", TileKind.ALU)
    for i in range(2):
        fu(f"rf{i}", TileKind.REGISTER_FILE)
    fu("mul_acc0", TileKind.MUL_ACCURATE)
    for i in range(2):
        fu(f"addr_mul{i}", TileKind.ADDR_MUL32)
    fu("lsu0", TileKind.LOAD_STORE_SRAM)
    fu("imm0", TileKind.IMMEDIATE_UNIT)
    return tiles


def _roster_vector(lanes_width, drum_k):
    """Two vector lanes; each lane's ALU group, multiplier group and memory
    tiles share instruction decoders. A small scalar region handles
    addresses and constants."""
    w = lanes_width
    tiles = []
    for lane in ("a", "b"):
        id_alu = f"id_{lane}_alu"
        id_mul = f"id_{lane}_mul"
        id_mem = f"id_{lane}_mem"
        tiles.append((id_alu, TileKind.INSTRUCTION_DECODE, None, None))
        for i in range(w):
            tiles.append((f"{lane}_alu{i}", TileKind.ALU, id_alu, None))
        tiles.append((id_mul, TileKind.INSTRUCTION_DECODE, None, None))
        for i in range(w // 2):
            tiles.append((f"{lane}_mul_acc{i}", TileKind.MUL_ACCURATE, id_mul, None))
        for i in range(w // 2):
            tiles.append(
                (f"{lane}_mul_ax{i}", TileKind.MUL_APPROX, id_mul, drum_k)
            )
        tiles.append((id_mem, TileKind.INSTRUCTION_DECODE, None, None))
        n_rf = w // 2 + 1
        for i in range(n_rf):
            tiles.append((f"{lane}_rf{i}", TileKind.REGISTER_FILE, id_mem, None))
        for i in range(max(1, w // 4)):
            tiles.append((f"{lane}_lsu{i}", TileKind.LOAD_STORE_SRAM, id_mem, None))
    # scalar region: address generation and constant propagation
    # (lane ALUs+muls = 4w, scalar addr muls = w/2, scalar ALUs = w/4,
    #  so the ALU+multiplier tally is 19 at w=4 and 38 at w=8)
    id_s = "id_scalar"
    tiles.append((id_s, TileKind.INSTRUCTION_DECODE, None, None))
    for i in range(w // 2):
        tiles.append((f"s_addr_mul{i}", TileKind.ADDR_MUL32, id_s, None))
    for i in range(w // 4):
        tiles.append((f"s_alu{i}", TileKind.ALU, id_s, None))
    for i in range(2):
        tiles.append((f"s_rf{i}", TileKind.REGISTER_FILE, id_s, None))
        tiles.append((f"s_imm{i}", TileKind.IMMEDIATE_UNIT, id_s, None))
    return tiles


_PRESET_GRIDS = {"scalar": (7, 7), "vector4": (9, 9), "vector8": (11, 12)}


def build_preset(name, drum_k=7):
    """One of the three reference fabrics; unknown names raise."""
    if name not in PRESET_NAMES:
        raise ValidationError(
            f"unknown preset {name!r}, expected one of {PRESET_NAMES}"
        )
    if name == "scalar":
        roster, lane_width = _roster_scalar(drum_k), 1
    elif name == "vector4":
        roster, lane_width = _roster_vector(4, drum_k), 4
    else:
        roster, lane_width = _roster_vector(8, drum_k), 8

    rows, cols = _PRESET_GRIDS[name]
    cells = _odd_cells(rows, cols)
    if len(roster) > len(cells):
        raise ValidationError(
            f"preset {name}: {len(roster)} tiles do not fit "
            f"{len(cells)} functional cells"
        )
    tiles = [
        Tile(id=tid, kind=kind, position=cell, controller=ctrl, drum_k=k)
        for (tid, kind, ctrl, k), cell in zip(roster, cells)
    ]
    tiles.extend(
        Tile(id=f"sb_{r}_{c}", kind=TileKind.SWITCHBOX, position=(r, c))
        for r, c in _even_cells(rows, cols)
    )
    fabric = FabricConfig(
        rows=rows,
        cols=cols,
        tiles=tiles,
        track_count=4,
        preset_name=name,
        lane_width=lane_width,
    )
    diags = validate(fabric)
    if diags:
        raise ValidationError(f"preset {name} failed validation: {diags}")
    return fabric
