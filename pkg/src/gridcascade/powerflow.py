"""Linearized (DC) power flow, injection shift factors, and outage factors.

All solves are dense and per-island: buses are grouped by connectivity over
the active lines, injections are rebalanced proportionally inside each
island, and the island's reduced susceptance Laplacian is factorized with a
Cholesky decomposition. Angles are referenced to the lowest bus id of each
island.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ShapeError, SolverError
from .grid import PowerGrid

# Relative pivot tolerance for the reduced-Laplacian factorization.
PIVOT_TOL = 1e-12

# A line whose removal would split its island has a self-transfer factor of
# 1; below this margin the outage distribution column is undefined.
RADIAL_TOL = 1e-9


@dataclass(frozen=True)
class FlowSolution:
    """DC solution over a fixed active-line set.

    Arrays are positional: `theta`/`generation`/`load`/`island_id` follow bus
    order, `flow`/`active` follow line order. Inactive lines carry zero flow.
    `generation` and `load` are the rebalanced values actually solved for.
    """

    theta: np.ndarray
    flow: np.ndarray
    active: np.ndarray
    island_id: np.ndarray
    island_count: int
    generation: np.ndarray
    load: np.ndarray

    def __post_init__(self):
        for name in ("theta", "flow", "active", "island_id", "generation", "load"):
            getattr(self, name).flags.writeable = False

    @property
    def injection(self) -> np.ndarray:
        return self.generation - self.load


def _bus_islands(
    n_buses: int, endpoints: np.ndarray, active: np.ndarray
) -> tuple[np.ndarray, int]:
    """Label buses by connected component over the active lines."""
    adj: list[list[int]] = [[] for _ in range(n_buses)]
    for pos in np.flatnonzero(active):
        i, j = endpoints[pos]
        adj[i].append(int(j))
        adj[j].append(int(i))
    island_id = np.full(n_buses, -1, dtype=np.int64)
    count = 0
    for start in range(n_buses):
        if island_id[start] >= 0:
            continue
        island_id[start] = count
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if island_id[v] < 0:
                    island_id[v] = count
                    queue.append(v)
        count += 1
    return island_id, count


def _rebalanced(
    grid: PowerGrid, island_id: np.ndarray, island_count: int
) -> tuple[np.ndarray, np.ndarray]:
    """Proportionally match generation and load inside every island.

    Surplus generation is scaled down; deficit sheds load pro-rata. An island
    lacking either side ends up with all-zero injections.
    """
    generation = np.array([b.generation for b in grid.buses], dtype=np.float64)
    load = np.array([b.load for b in grid.buses], dtype=np.float64)
    for isl in range(island_count):
        mask = island_id == isl
        total_gen = generation[mask].sum()
        total_load = load[mask].sum()
        # total_gen > total_load implies total_gen > 0 (both non-negative),
        # so the ratios below never divide by zero.
        if total_gen > total_load:
            generation[mask] *= total_load / total_gen
        elif total_load > total_gen:
            load[mask] *= total_gen / total_load
    return generation, load


def _reduced_laplacian(
    island_buses: np.ndarray,
    ref_pos: int,
    endpoints: np.ndarray,
    susceptance: np.ndarray,
    line_mask: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, dict[int, int]]:
    """Susceptance Laplacian of one island with the reference row/col removed.

    Returns (B_red, non_ref_positions, position -> reduced index).
    """
    non_ref = np.array([p for p in island_buses if p != ref_pos], dtype=np.int64)
    index = {int(p): k for k, p in enumerate(non_ref)}
    m = len(non_ref)
    b_red = np.zeros((m, m), dtype=np.float64)
    for pos in np.flatnonzero(line_mask):
        i, j = int(endpoints[pos, 0]), int(endpoints[pos, 1])
        b = susceptance[pos]
        ii = index.get(i)
        jj = index.get(j)
        if ii is not None:
            b_red[ii, ii] += b
        if jj is not None:
            b_red[jj, jj] += b
        if ii is not None and jj is not None:
            b_red[ii, jj] -= b
            b_red[jj, ii] -= b
    return b_red, non_ref, index


def _factorize(b_red: np.ndarray, context: str):
    """Cholesky-factorize a reduced Laplacian, rejecting near-singular pivots."""
    try:
        factor = cho_factor(b_red, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"{context}: reduced system is not positive definite") from exc
    pivots = np.diag(factor[0]) ** 2
    if pivots.min() < PIVOT_TOL * max(1.0, pivots.max()):
        raise SolverError(f"{context}: reduced system is numerically singular")
    return factor


def solve_dc(grid: PowerGrid, active: np.ndarray | None = None) -> FlowSolution:
    """Solve the DC power flow over the active lines (all lines by default).

    Each island is rebalanced proportionally and solved independently with
    the lowest bus id as its angle reference. Line flow is
    susceptance * (theta_from - theta_to); inactive lines carry zero.
    """
    n = grid.bus_count
    endpoints = grid.line_endpoints
    if active is None:
        active = np.ones(grid.line_count, dtype=bool)
    else:
        active = np.asarray(active, dtype=bool)
        if active.shape != (grid.line_count,):
            raise ShapeError(
                f"active mask has shape {active.shape}, expected ({grid.line_count},)"
            )

    island_id, island_count = _bus_islands(n, endpoints, active)
    generation, load = _rebalanced(grid, island_id, island_count)
    injection = generation - load

    bus_ids = np.array([b.id for b in grid.buses], dtype=np.int64)
    theta = np.zeros(n, dtype=np.float64)
    susceptance = grid.susceptances
    line_island = island_id[endpoints[:, 0]]

    for isl in range(island_count):
        island_buses = np.flatnonzero(island_id == isl)
        if len(island_buses) == 1:
            continue
        if not np.any(np.abs(injection[island_buses]) > 0):
            continue
        ref_pos = int(island_buses[np.argmin(bus_ids[island_buses])])
        line_mask = active & (line_island == isl)
        b_red, non_ref, _ = _reduced_laplacian(
            island_buses, ref_pos, endpoints, susceptance, line_mask
        )
        factor = _factorize(b_red, f"grid '{grid.name}' island {isl}")
        theta[non_ref] = cho_solve(factor, injection[non_ref], check_finite=False)

    flow = np.where(
        active, susceptance * (theta[endpoints[:, 0]] - theta[endpoints[:, 1]]), 0.0
    )
    return FlowSolution(
        theta=theta,
        flow=flow,
        active=active.copy(),
        island_id=island_id,
        island_count=island_count,
        generation=generation,
        load=load,
    )


@dataclass(frozen=True)
class Ptdf:
    """Injection shift factors: isf[l, s] is the flow induced on line l by a
    unit injection at bus position s withdrawn at the island reference.

    Reference columns are zero; lines and buses of different islands do not
    interact. `transfer` gives the flow on a line per unit of power moved
    from one bus to another (zero across islands).
    """

    isf: np.ndarray
    island_id: np.ndarray
    active: np.ndarray

    def __post_init__(self):
        for name in ("isf", "island_id", "active"):
            getattr(self, name).flags.writeable = False

    def transfer(self, line_pos: int, from_pos: int, to_pos: int) -> float:
        if self.island_id[from_pos] != self.island_id[to_pos]:
            return 0.0
        return float(self.isf[line_pos, from_pos] - self.isf[line_pos, to_pos])


def compute_ptdf(grid: PowerGrid, active: np.ndarray | None = None) -> Ptdf:
    """Injection shift factor matrix over the active-line topology."""
    n = grid.bus_count
    L = grid.line_count
    endpoints = grid.line_endpoints
    if active is None:
        active = np.ones(L, dtype=bool)
    else:
        active = np.asarray(active, dtype=bool)

    island_id, island_count = _bus_islands(n, endpoints, active)
    bus_ids = np.array([b.id for b in grid.buses], dtype=np.int64)
    susceptance = grid.susceptances
    line_island = island_id[endpoints[:, 0]]

    isf = np.zeros((L, n), dtype=np.float64)
    for isl in range(island_count):
        island_buses = np.flatnonzero(island_id == isl)
        if len(island_buses) == 1:
            continue
        ref_pos = int(island_buses[np.argmin(bus_ids[island_buses])])
        line_mask = active & (line_island == isl)
        lines = np.flatnonzero(line_mask)
        if len(lines) == 0:
            continue
        b_red, non_ref, index = _reduced_laplacian(
            island_buses, ref_pos, endpoints, susceptance, line_mask
        )
        factor = _factorize(b_red, f"grid '{grid.name}' island {isl}")
        # theta response of non-ref buses to a unit injection at each of them
        response = cho_solve(factor, np.eye(len(non_ref)), check_finite=False)
        for pos in lines:
            i, j = int(endpoints[pos, 0]), int(endpoints[pos, 1])
            row = np.zeros(len(non_ref), dtype=np.float64)
            if i != ref_pos:
                row += response[index[i]]
            if j != ref_pos:
                row -= response[index[j]]
            isf[pos, non_ref] = susceptance[pos] * row
    return Ptdf(isf=isf, island_id=island_id, active=active.copy())


@dataclass(frozen=True)
class SensitivityMatrices:
    """Outage distribution factors derived from a Ptdf.

    lodf[l, k] is the fraction of line k's pre-outage flow that appears on
    line l after k trips. Diagonal entries are -1 so that
    flow + lodf[:, k] * flow[k] zeroes the tripped line itself. Columns of
    radial lines (whose removal splits the island) are NaN and flagged.
    """

    lodf: np.ndarray
    radial: np.ndarray

    def __post_init__(self):
        self.lodf.flags.writeable = False
        self.radial.flags.writeable = False


def compute_lodf(grid: PowerGrid, ptdf: Ptdf | None = None) -> SensitivityMatrices:
    """Line outage distribution factors for every (monitored, tripped) pair."""
    if ptdf is None:
        ptdf = compute_ptdf(grid)
    endpoints = grid.line_endpoints
    from_pos = endpoints[:, 0]
    to_pos = endpoints[:, 1]

    transfer = ptdf.isf[:, from_pos] - ptdf.isf[:, to_pos]
    # A line whose endpoints fell into different islands has no valid
    # self-transfer; zero the column (cannot happen on an intact grid).
    same_island = ptdf.island_id[from_pos] == ptdf.island_id[to_pos]
    transfer[:, ~same_island] = 0.0

    denom = 1.0 - np.diag(transfer)
    radial = (np.abs(denom) < RADIAL_TOL) | ~ptdf.active | ~same_island
    safe = np.where(radial, 1.0, denom)
    lodf = transfer / safe[np.newaxis, :]
    np.fill_diagonal(lodf, -1.0)
    lodf[:, radial] = np.nan
    return SensitivityMatrices(lodf=lodf, radial=radial)


def predict_outage_flows(
    base_flow: np.ndarray, sens: SensitivityMatrices, line_pos: int
) -> np.ndarray:
    """Linear estimate of all line flows after tripping one non-radial line."""
    if sens.radial[line_pos]:
        raise SolverError(
            f"line position {line_pos} is radial; its outage splits the island"
        )
    return base_flow + sens.lodf[:, line_pos] * base_flow[line_pos]


def save_flows(grid: PowerGrid, solution: FlowSolution, path: str | Path) -> None:
    """Write per-line flows as CSV: line_id, flow, capacity, utilization."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["line_id", "flow", "capacity", "utilization"])
        for pos, line in enumerate(grid.lines):
            flow = float(solution.flow[pos])
            writer.writerow(
                [line.id, repr(flow), repr(line.capacity), repr(abs(flow) / line.capacity)]
            )
