"""Power-grid data model: buses, lines, line graphs, cascade depths, CSV io.

Grids are immutable after construction and validated eagerly: unique ids,
positive line parameters, a balanced base case, and a connected intact
topology. The line graph re-expresses the grid with lines as nodes so that
message passing and depth computations operate at line granularity.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import GridFormatError, GridValidationError, InvalidSampleError

# Tolerance for the balanced-base-case invariant (per-unit).
BALANCE_TOL = 1e-9

# Additive capacity floor used by the synthetic generator so zero-flow lines
# still carry a meaningful rating.
CAPACITY_FLOOR = 0.05

# Rich-get-richer strength for ring-mesh chord endpoints; higher values
# concentrate chords on fewer buses and widen the bus-degree spectrum.
CHORD_PREFERENCE = 40.0

# Depth value marking line-graph nodes unreachable from every initial failure.
# Mask logic must consult `CascadeDepths.reachable`, never compare against
# this sentinel directly (-1 <= t would admit everything).
UNREACHABLE = -1

SYNTHETIC_FAMILIES = ("ring-mesh", "hub-spoke")

_BUS_HEADER = ["id", "generation", "load"]
_LINE_HEADER = ["id", "from_bus", "to_bus", "susceptance", "capacity"]


@dataclass(frozen=True)
class Bus:
    """A bus with its real power injection and withdrawal (per-unit)."""

    id: int
    generation: float
    load: float


@dataclass(frozen=True)
class Line:
    """A transmission line with susceptance and a hard flow limit (per-unit)."""

    id: int
    from_bus: int
    to_bus: int
    susceptance: float
    capacity: float


@dataclass(frozen=True)
class PowerGrid:
    """An immutable grid: ordered buses and lines plus a display name."""

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    name: str = "grid"

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        _validate_grid(self)

    @cached_property
    def bus_position(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def line_position(self) -> dict[int, int]:
        return {l.id: i for i, l in enumerate(self.lines)}

    @cached_property
    def line_ids(self) -> np.ndarray:
        arr = np.array([l.id for l in self.lines], dtype=np.int64)
        arr.flags.writeable = False
        return arr

    @cached_property
    def line_endpoints(self) -> np.ndarray:
        """(L, 2) array of (from, to) bus positions per line."""
        pos = self.bus_position
        arr = np.array(
            [[pos[l.from_bus], pos[l.to_bus]] for l in self.lines], dtype=np.int64
        )
        arr.flags.writeable = False
        return arr

    @cached_property
    def susceptances(self) -> np.ndarray:
        arr = np.array([l.susceptance for l in self.lines], dtype=np.float64)
        arr.flags.writeable = False
        return arr

    @cached_property
    def capacities(self) -> np.ndarray:
        arr = np.array([l.capacity for l in self.lines], dtype=np.float64)
        arr.flags.writeable = False
        return arr

    @cached_property
    def injections(self) -> np.ndarray:
        """Per-bus net injection generation - load (per-unit)."""
        arr = np.array([b.generation - b.load for b in self.buses], dtype=np.float64)
        arr.flags.writeable = False
        return arr

    @property
    def bus_count(self) -> int:
        return len(self.buses)

    @property
    def line_count(self) -> int:
        return len(self.lines)

    def line_positions_for(self, line_ids: Iterable[int]) -> list[int]:
        """Map line ids to positions, rejecting unknown ids."""
        out = []
        for lid in line_ids:
            if lid not in self.line_position:
                raise InvalidSampleError(f"unknown line id {lid} in grid '{self.name}'")
            out.append(self.line_position[lid])
        return out


def _validate_grid(grid: PowerGrid) -> None:
    if not grid.buses:
        raise GridValidationError("grid has no buses")
    if not grid.lines:
        raise GridValidationError("grid has no lines")

    bus_ids = set()
    for b in grid.buses:
        if b.id in bus_ids:
            raise GridValidationError(f"duplicate bus id {b.id}")
        bus_ids.add(b.id)
        if not (math.isfinite(b.generation) and math.isfinite(b.load)):
            raise GridValidationError(f"bus {b.id}: non-finite injection")
        if b.generation < 0 or b.load < 0:
            raise GridValidationError(f"bus {b.id}: negative generation or load")

    line_ids = set()
    pairs = set()
    for l in grid.lines:
        if l.id in line_ids:
            raise GridValidationError(f"duplicate line id {l.id}")
        line_ids.add(l.id)
        if l.from_bus == l.to_bus:
            raise GridValidationError(f"line {l.id}: from_bus equals to_bus")
        for end in (l.from_bus, l.to_bus):
            if end not in bus_ids:
                raise GridValidationError(f"line {l.id}: unknown bus {end}")
        pair = frozenset((l.from_bus, l.to_bus))
        if pair in pairs:
            raise GridValidationError(
                f"line {l.id}: parallel line between buses "
                f"{l.from_bus} and {l.to_bus} is not supported"
            )
        pairs.add(pair)
        if not (math.isfinite(l.susceptance) and l.susceptance > 0):
            raise GridValidationError(f"line {l.id}: susceptance must be > 0")
        if not (math.isfinite(l.capacity) and l.capacity > 0):
            raise GridValidationError(f"line {l.id}: capacity must be > 0")

    imbalance = sum(b.generation for b in grid.buses) - sum(b.load for b in grid.buses)
    if abs(imbalance) > BALANCE_TOL:
        raise GridValidationError(
            f"grid is unbalanced: generation - load = {imbalance:.3e} per-unit"
        )

    if not _intact_connected(grid):
        raise GridValidationError("grid is not connected in the intact state")


def _intact_connected(grid: PowerGrid) -> bool:
    n = grid.bus_count
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in grid.line_endpoints:
        adj[i].append(j)
        adj[j].append(i)
    seen = [False] * n
    queue = deque([0])
    seen[0] = True
    count = 1
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                count += 1
                queue.append(v)
    return count == n


@dataclass(frozen=True)
class LineGraph:
    """Lines-as-nodes graph. Node i corresponds to grid.lines[i].

    `src`/`dst` hold directed edges sorted by (dst, src): both directions of
    every shared-bus adjacency plus one self-loop per node. `shared_bus` is
    the common bus id, or -1 on self-loops.
    """

    node_count: int
    src: np.ndarray
    dst: np.ndarray
    shared_bus: np.ndarray
    line_ids: np.ndarray

    def __post_init__(self):
        for name in ("src", "dst", "shared_bus", "line_ids"):
            getattr(self, name).flags.writeable = False

    @property
    def edge_count(self) -> int:
        return len(self.src)

    @cached_property
    def self_loop_mask(self) -> np.ndarray:
        m = self.src == self.dst
        m.flags.writeable = False
        return m

    @cached_property
    def neighbors(self) -> list[list[int]]:
        """Adjacency lists excluding self-loops (symmetric by construction)."""
        adj: list[list[int]] = [[] for _ in range(self.node_count)]
        for u, v in zip(self.src, self.dst):
            if u != v:
                adj[int(u)].append(int(v))
        return adj

    def node_for_line_id(self, line_id: int) -> int:
        idx = np.flatnonzero(self.line_ids == line_id)
        if len(idx) == 0:
            raise InvalidSampleError(f"unknown line id {line_id}")
        return int(idx[0])


def build_line_graph(grid: PowerGrid) -> LineGraph:
    """Convert a grid to its line graph: lines become nodes, shared buses edges."""
    n_lines = grid.line_count
    incident: dict[int, list[int]] = {b.id: [] for b in grid.buses}
    for pos, line in enumerate(grid.lines):
        incident[line.from_bus].append(pos)
        incident[line.to_bus].append(pos)

    edges: list[tuple[int, int, int]] = []
    for bus_id, members in incident.items():
        for a_idx in range(len(members)):
            for b_idx in range(a_idx + 1, len(members)):
                u, v = members[a_idx], members[b_idx]
                edges.append((u, v, bus_id))
                edges.append((v, u, bus_id))
    for u in range(n_lines):
        edges.append((u, u, -1))

    edges.sort(key=lambda e: (e[1], e[0]))
    src = np.array([e[0] for e in edges], dtype=np.int64)
    dst = np.array([e[1] for e in edges], dtype=np.int64)
    shared = np.array([e[2] for e in edges], dtype=np.int64)
    return LineGraph(
        node_count=n_lines,
        src=src,
        dst=dst,
        shared_bus=shared,
        line_ids=np.array(grid.line_ids, dtype=np.int64),
    )


@dataclass(frozen=True)
class CascadeDepths:
    """Multi-source BFS distances from the initial failures, per line-graph node.

    `depth` holds UNREACHABLE (-1) where `reachable` is False; admission tests
    must check `reachable` first so the sentinel can never pass a mask.
    """

    depth: np.ndarray
    reachable: np.ndarray

    def __post_init__(self):
        self.depth.flags.writeable = False
        self.reachable.flags.writeable = False


def cascade_depth(lg: LineGraph, initial_failures: Iterable[int]) -> CascadeDepths:
    """Shortest-path distance in the line graph to the nearest initial failure.

    `initial_failures` are line ids. Self-loops are ignored; nodes in no path
    from any source get the UNREACHABLE sentinel.
    """
    sources = sorted(set(initial_failures))
    if not sources:
        raise InvalidSampleError("initial failure set is empty")
    source_nodes = [lg.node_for_line_id(lid) for lid in sources]

    depth = np.full(lg.node_count, UNREACHABLE, dtype=np.int64)
    queue = deque()
    for node in source_nodes:
        depth[node] = 0
        queue.append(node)
    while queue:
        u = queue.popleft()
        for v in lg.neighbors[u]:
            if depth[v] == UNREACHABLE:
                depth[v] = depth[u] + 1
                queue.append(v)
    return CascadeDepths(depth=depth, reachable=depth != UNREACHABLE)


# ---------------------------------------------------------------------------
# Synthetic grids
# ---------------------------------------------------------------------------


def generate_synthetic_grid(
    n_buses: int,
    family: str,
    capacity_factor: float,
    seed: int,
    name: str | None = None,
) -> PowerGrid:
    """Generate a connected, balanced grid of the requested family.

    Line capacities are set to capacity_factor * |base-case flow| plus a small
    floor, so the base case is feasible but single-line outages can overload
    neighbors. Deterministic in (n_buses, family, capacity_factor, seed).
    """
    if n_buses < 3:
        raise GridValidationError("synthetic grids need n_buses >= 3")
    if capacity_factor <= 1:
        raise GridValidationError("capacity_factor must be > 1")
    if family not in SYNTHETIC_FAMILIES:
        raise GridValidationError(
            f"unknown family '{family}' (expected one of {SYNTHETIC_FAMILIES})"
        )

    rng = np.random.default_rng(seed)
    if family == "ring-mesh":
        pairs = _ring_mesh_topology(n_buses, rng)
    else:
        pairs = _hub_spoke_topology(n_buses, rng)

    susceptance = rng.uniform(0.5, 2.0, size=len(pairs))
    generation, load = _balanced_injections(n_buses, rng)

    if name is None:
        name = f"{family}-{n_buses}b-s{seed}"
    # Provisional unit capacities; replaced after the base-case solve.
    lines = [
        Line(id=k, from_bus=int(i), to_bus=int(j), susceptance=float(susceptance[k]), capacity=1.0)
        for k, (i, j) in enumerate(pairs)
    ]
    buses = [
        Bus(id=i, generation=float(generation[i]), load=float(load[i]))
        for i in range(n_buses)
    ]
    grid = PowerGrid(buses=tuple(buses), lines=tuple(lines), name=name)

    from .powerflow import solve_dc  # deferred: powerflow imports this module

    base = solve_dc(grid)
    capacities = capacity_factor * np.abs(base.flow) + CAPACITY_FLOOR
    lines = [
        Line(id=l.id, from_bus=l.from_bus, to_bus=l.to_bus,
             susceptance=l.susceptance, capacity=float(capacities[k]))
        for k, l in enumerate(grid.lines)
    ]
    return PowerGrid(buses=grid.buses, lines=tuple(lines), name=name)


def _ring_mesh_topology(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Buses on a ring plus random chords drawn rich-get-richer.

    Chord endpoints are sampled with probability proportional to
    1 + CHORD_PREFERENCE * (chords already touching the bus), so a handful of
    buses accumulate high degree while most stay sparse. The wide degree
    spectrum is deliberate: attention neighborhoods in the line graph scale
    with endpoint degrees, and a model trained only on near-uniform degrees
    does not transfer to grids with concentrated connectivity.
    """
    pairs = [(i, (i + 1) % n) for i in range(n)]
    existing = {frozenset(p) for p in pairs}
    n_chords = n
    chord_degree = np.zeros(n)
    added = 0
    for _ in range(n_chords * 20):  # rejection sampling, bounded
        if added >= n_chords:
            break
        weights = 1.0 + CHORD_PREFERENCE * chord_degree
        u, v = rng.choice(n, size=2, replace=False, p=weights / weights.sum())
        key = frozenset((int(u), int(v)))
        if key in existing:
            continue
        existing.add(key)
        pairs.append((min(int(u), int(v)), max(int(u), int(v))))
        chord_degree[[int(u), int(v)]] += 1.0
        added += 1
    return pairs


def _hub_spoke_topology(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """A few high-degree hubs; every leaf is double-homed onto two hubs.

    Hubs are tied together through the shared leaves rather than direct
    hub-hub lines (a direct line between two hubs would join both hub
    neighborhoods into one oversized attention clique). A handful of
    leaf-leaf chords adds the longer corridors that let failures propagate
    beyond a single hub neighborhood.
    """
    n_hubs = max(2, round(n / 10))
    hubs = list(range(n_hubs))
    leaves = list(range(n_hubs, n))

    # Least-loaded homing with random tie-breaks: hub degrees stay within one
    # of each other, which bounds the largest attention clique in the line
    # graph while keeping the hubs few and heavily loaded.
    pairs: list[tuple[int, int]] = []
    homed: list[tuple[int, int]] = []
    loads = np.zeros(n_hubs, dtype=np.int64)
    for leaf in leaves:
        tiebreak = rng.permutation(n_hubs)
        order = np.lexsort((tiebreak, loads))
        chosen = sorted(int(h) for h in order[: min(2, n_hubs)])
        for h in chosen:
            pairs.append((h, leaf))
            loads[h] += 1
        if len(chosen) == 2:
            homed.append((chosen[0], chosen[1]))

    # Leaves normally bridge every pair of hubs; on the rare seed where some
    # hub component stays isolated, tie the components with direct hub lines.
    parent = list(range(n_hubs))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in homed:
        parent[find(a)] = find(b)
    roots = sorted({find(h) for h in hubs})
    for a, b in zip(roots, roots[1:]):
        pairs.append((a, b))

    existing = {frozenset(p) for p in pairs}
    if len(leaves) >= 2:
        n_chords = max(1, round(n / 6))
        for _ in range(n_chords * 4):  # rejection sampling, bounded
            a, b = rng.choice(len(leaves), size=2, replace=False)
            u, v = leaves[int(a)], leaves[int(b)]
            key = frozenset((u, v))
            if key not in existing:
                existing.add(key)
                pairs.append((min(u, v), max(u, v)))
                n_chords -= 1
                if n_chords == 0:
                    break
    return pairs


def _balanced_injections(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Assign generators and loads to disjoint bus subsets, scaled to balance."""
    n_gen = max(2, n // 3)
    n_load = max(2, n // 3)
    order = rng.permutation(n)
    gen_buses = order[:n_gen]
    load_buses = order[n_gen:n_gen + n_load]

    generation = np.zeros(n)
    load = np.zeros(n)
    generation[gen_buses] = rng.uniform(0.5, 1.5, size=n_gen)
    load[load_buses] = rng.uniform(0.5, 1.5, size=n_load)
    load *= generation.sum() / load.sum()
    return generation, load


# ---------------------------------------------------------------------------
# CSV io
# ---------------------------------------------------------------------------


def save_grid(grid: PowerGrid, path: str | Path) -> None:
    """Write buses.csv and lines.csv under `path` (a directory)."""
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "buses.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_BUS_HEADER)
        for b in grid.buses:
            writer.writerow([b.id, repr(b.generation), repr(b.load)])
    with open(directory / "lines.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_LINE_HEADER)
        for l in grid.lines:
            writer.writerow(
                [l.id, l.from_bus, l.to_bus, repr(l.susceptance), repr(l.capacity)]
            )


def load_grid(path: str | Path, name: str | None = None) -> PowerGrid:
    """Read a grid from `path`/buses.csv and `path`/lines.csv."""
    directory = Path(path)
    bus_rows = _read_csv_rows(directory / "buses.csv", _BUS_HEADER)
    line_rows = _read_csv_rows(directory / "lines.csv", _LINE_HEADER)

    buses: list[Bus] = []
    seen_bus: set[int] = set()
    for row_no, row in bus_rows:
        bid = _parse_int(row[0], "buses.csv", row_no, "id")
        if bid in seen_bus:
            raise GridFormatError(f"buses.csv row {row_no}: duplicate bus id {bid}")
        seen_bus.add(bid)
        buses.append(
            Bus(
                id=bid,
                generation=_parse_float(row[1], "buses.csv", row_no, "generation"),
                load=_parse_float(row[2], "buses.csv", row_no, "load"),
            )
        )

    if not line_rows:
        raise GridFormatError("lines.csv: grid has no lines")
    lines: list[Line] = []
    seen_line: set[int] = set()
    for row_no, row in line_rows:
        lid = _parse_int(row[0], "lines.csv", row_no, "id")
        if lid in seen_line:
            raise GridFormatError(f"lines.csv row {row_no}: duplicate line id {lid}")
        seen_line.add(lid)
        from_bus = _parse_int(row[1], "lines.csv", row_no, "from_bus")
        to_bus = _parse_int(row[2], "lines.csv", row_no, "to_bus")
        for end in (from_bus, to_bus):
            if end not in seen_bus:
                raise GridFormatError(f"lines.csv row {row_no}: unknown bus {end}")
        lines.append(
            Line(
                id=lid,
                from_bus=from_bus,
                to_bus=to_bus,
                susceptance=_parse_float(row[3], "lines.csv", row_no, "susceptance"),
                capacity=_parse_float(row[4], "lines.csv", row_no, "capacity"),
            )
        )

    if name is None:
        name = directory.name or "grid"
    return PowerGrid(buses=tuple(buses), lines=tuple(lines), name=name)


def _read_csv_rows(path: Path, header: list[str]) -> list[tuple[int, list[str]]]:
    """Return (file_row_number, fields) for data rows; '#' comments skipped."""
    if not path.exists():
        raise GridFormatError(f"{path.name}: file not found at {path}")
    rows: list[tuple[int, list[str]]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        header_seen = False
        for row_no, row in enumerate(csv.reader(fh), start=1):
            if not row or (row[0].lstrip().startswith("#")):
                continue
            fields = [f.strip() for f in row]
            if not header_seen:
                if fields != header:
                    raise GridFormatError(
                        f"{path.name} row {row_no}: expected header "
                        f"{','.join(header)}, got {','.join(fields)}"
                    )
                header_seen = True
                continue
            if len(fields) != len(header):
                raise GridFormatError(
                    f"{path.name} row {row_no}: expected {len(header)} fields, "
                    f"got {len(fields)}"
                )
            rows.append((row_no, fields))
        if not header_seen:
            raise GridFormatError(f"{path.name}: missing header row")
    return rows


def _parse_int(text: str, fname: str, row_no: int, col: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise GridFormatError(
            f"{fname} row {row_no}: column '{col}' is not an integer: {text!r}"
        ) from None


def _parse_float(text: str, fname: str, row_no: int, col: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise GridFormatError(
            f"{fname} row {row_no}: column '{col}' is not a number: {text!r}"
        ) from None
