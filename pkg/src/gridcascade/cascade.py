"""Cascading-failure simulation and labeled-dataset construction.

A cascade starts from an exogenous set of tripped lines (iteration 1). Each
later iteration removes everything failed so far, re-solves the DC flow, and
trips every line loaded strictly beyond its capacity, all at once. The label
of a line is the iteration at which it failed, 0 if it survived.

Training datasets oversample deep cascades: retained samples (depth >= 2)
are drawn with replacement with probability proportional to a depth weight,
so rare long chains are seen as often as shallow ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InvalidSampleError, SolverError
from .grid import PowerGrid
from .powerflow import solve_dc
from .seeding import derive_seed

DEFAULT_K_RANGE = (1, 3)

# Holdout construction keeps drawing until n samples propagate; give up after
# this many attempts per requested sample.
_MAX_ATTEMPTS_PER_SAMPLE = 200

_NO_PROPAGATION = "no propagating cascades; lower capacity_factor"


@dataclass(frozen=True)
class CascadeSample:
    """One simulated cascade: per-line failure iterations.

    labels[i] is 0 if grid line position i survived, 1 if it was an initial
    failure, g >= 2 if it tripped at iteration g.
    """

    grid_name: str
    seed: int
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        labels.flags.writeable = False
        _validate_labels(labels)

    @property
    def max_iteration(self) -> int:
        """G: the last iteration at which anything failed."""
        return int(self.labels.max())

    @property
    def failed_positions(self) -> np.ndarray:
        return np.flatnonzero(self.labels > 0)

    @property
    def initial_positions(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 1)


def _validate_labels(labels: np.ndarray) -> None:
    if labels.ndim != 1 or len(labels) == 0:
        raise InvalidSampleError("labels must be a non-empty 1-d array")
    if labels.min() < 0:
        raise InvalidSampleError("labels must be non-negative")
    top = int(labels.max())
    if top < 1:
        raise InvalidSampleError("sample has no initial failure (no label equal to 1)")
    present = set(np.unique(labels).tolist())
    if 1 not in present:
        raise InvalidSampleError("sample has no initial failure (no label equal to 1)")
    missing = [g for g in range(2, top + 1) if g not in present]
    if missing:
        raise InvalidSampleError(
            f"labels skip iteration(s) {missing}; failure iterations must be contiguous"
        )


@dataclass(frozen=True)
class Dataset:
    """A bag of cascade samples with its construction provenance."""

    samples: tuple[CascadeSample, ...]
    role: str
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.role not in ("training", "heldout"):
            raise InvalidSampleError(f"unknown dataset role {self.role!r}")
        if self.role == "training":
            for s in self.samples:
                if s.max_iteration < 2:
                    raise InvalidSampleError(
                        "training datasets must not contain non-propagating samples"
                    )

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def grid_names(self) -> list[str]:
        seen: dict[str, None] = {}
        for s in self.samples:
            seen.setdefault(s.grid_name, None)
        return list(seen)


def simulate_cascade(
    grid: PowerGrid, initial_failures: Iterable[int], seed: int = 0
) -> CascadeSample:
    """Run one cascade from the given initially tripped line ids.

    Deterministic in (grid, initial_failures); `seed` is recorded provenance
    for samples whose initial set was randomly drawn.
    """
    positions = grid.line_positions_for(sorted(set(initial_failures)))
    if not positions:
        raise InvalidSampleError("initial failure set is empty")

    labels = np.zeros(grid.line_count, dtype=np.int64)
    labels[positions] = 1
    capacities = grid.capacities
    g = 1
    while True:
        active = labels == 0
        if not active.any():
            break
        try:
            solution = solve_dc(grid, active)
        except SolverError as exc:
            raise SolverError(f"cascade iteration {g + 1}: {exc}") from exc
        overloaded = active & (np.abs(solution.flow) > capacities)
        if not overloaded.any():
            break
        g += 1
        labels[overloaded] = g
    return CascadeSample(grid_name=grid.name, seed=seed, labels=labels)


def draw_initial_failures(
    grid: PowerGrid, rng: np.random.Generator, k_range: tuple[int, int]
) -> list[int]:
    """Uniformly draw an initial-failure set: size uniform in k_range, lines
    uniform without replacement."""
    k_min, k_max = k_range
    if not (1 <= k_min <= k_max):
        raise InvalidSampleError(f"invalid initial-failure range {k_range}")
    k = int(rng.integers(k_min, k_max + 1))
    k = min(k, grid.line_count)
    chosen = rng.choice(grid.line_count, size=k, replace=False)
    return [int(grid.line_ids[c]) for c in sorted(chosen)]


def _random_sample(
    grid: PowerGrid, sample_seed: int, k_range: tuple[int, int]
) -> CascadeSample:
    rng = np.random.default_rng(sample_seed)
    initial = draw_initial_failures(grid, rng, k_range)
    return simulate_cascade(grid, initial, seed=sample_seed)


def build_training_dataset(
    grids: Sequence[PowerGrid],
    pool_per_grid: int,
    cap: int,
    k_range: tuple[int, int] = DEFAULT_K_RANGE,
    seed: int = 0,
    weight: Callable[[int], float] | None = None,
    max_label: int | None = None,
) -> Dataset:
    """Simulate pools on every grid, then depth-weight-oversample each to cap.

    Per grid: `pool_per_grid` cascades from random initial sets; samples that
    never propagate (G = 1) are discarded, as are samples deeper than
    `max_label` when given; the survivors are resampled with replacement,
    probability proportional to weight(G) (default: G itself). The per-grid
    selections are concatenated.
    """
    if cap <= 0:
        raise InvalidSampleError("cap must be positive")
    if weight is None:
        weight = float

    selected: list[CascadeSample] = []
    discarded_deep = 0
    per_grid: dict[str, dict] = {}
    for grid in grids:
        retained: list[CascadeSample] = []
        for i in range(pool_per_grid):
            sample = _random_sample(grid, derive_seed(seed, grid.name, i), k_range)
            if sample.max_iteration < 2:
                continue
            if max_label is not None and sample.max_iteration > max_label:
                discarded_deep += 1
                continue
            retained.append(sample)
        if not retained:
            raise InvalidSampleError(f"grid '{grid.name}': {_NO_PROPAGATION}")
        weights = np.array([weight(s.max_iteration) for s in retained], dtype=np.float64)
        if weights.min() < 0:
            raise InvalidSampleError("depth weights must be non-negative")
        rng = np.random.default_rng(derive_seed(seed, grid.name, "select"))
        picks = rng.choice(len(retained), size=cap, replace=True, p=weights / weights.sum())
        selected.extend(retained[int(p)] for p in picks)
        per_grid[grid.name] = {
            "retained": len(retained),
            "retained_mean_depth": float(
                np.mean([s.max_iteration for s in retained])
            ),
        }

    return Dataset(
        samples=tuple(selected),
        role="training",
        provenance={
            "pool_size": pool_per_grid,
            "cap": cap,
            "seed": seed,
            "k_range": list(k_range),
            "grids": [g.name for g in grids],
            "discarded_deep": discarded_deep,
            "per_grid": per_grid,
        },
    )


def build_holdout_pool(
    grid: PowerGrid,
    n: int,
    k_range: tuple[int, int] = DEFAULT_K_RANGE,
    seed: int = 0,
) -> Dataset:
    """Draw random cascades until n of them propagate (G >= 2).

    The seed stream must be disjoint from training and exposure streams;
    callers derive it with a distinct domain tag.
    """
    if n <= 0:
        raise InvalidSampleError("holdout size must be positive")
    retained: list[CascadeSample] = []
    attempts = 0
    limit = n * _MAX_ATTEMPTS_PER_SAMPLE
    while len(retained) < n:
        if attempts >= limit:
            raise InvalidSampleError(f"grid '{grid.name}': {_NO_PROPAGATION}")
        sample = _random_sample(grid, derive_seed(seed, grid.name, attempts), k_range)
        attempts += 1
        if sample.max_iteration >= 2:
            retained.append(sample)
    return Dataset(
        samples=tuple(retained),
        role="heldout",
        provenance={
            "pool_size": attempts,
            "cap": n,
            "seed": seed,
            "k_range": list(k_range),
            "grids": [grid.name],
        },
    )


def pool_statistics(dataset: Dataset) -> dict[str, float]:
    """Mean cascade scale (fraction of lines failing beyond the initial
    iteration) and mean depth G over a pool."""
    if len(dataset) == 0:
        raise InvalidSampleError("empty dataset")
    scales = [float(np.mean(s.labels >= 2)) for s in dataset]
    depths = [s.max_iteration for s in dataset]
    return {
        "mean_scale": float(np.mean(scales)),
        "mean_depth": float(np.mean(depths)),
        "sample_count": float(len(dataset)),
    }


def save_dataset(dataset: Dataset, directory: str | Path) -> None:
    """Write samples.jsonl plus a manifest.json with provenance."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "samples.jsonl", "w", encoding="utf-8") as fh:
        for s in dataset.samples:
            fh.write(
                json.dumps(
                    {"grid": s.grid_name, "seed": s.seed, "labels": s.labels.tolist()},
                    separators=(",", ":"),
                )
                + "\n"
            )
    manifest = {
        "role": dataset.role,
        "provenance": dataset.provenance,
        "sample_count": len(dataset),
    }
    with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(directory: str | Path) -> Dataset:
    """Read a dataset written by save_dataset."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    samples_path = directory / "samples.jsonl"
    if not manifest_path.exists() or not samples_path.exists():
        raise InvalidSampleError(f"no dataset at {directory}")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    samples: list[CascadeSample] = []
    with open(samples_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidSampleError(
                    f"samples.jsonl line {line_no}: invalid JSON"
                ) from exc
            samples.append(
                CascadeSample(
                    grid_name=record["grid"],
                    seed=int(record["seed"]),
                    labels=np.array(record["labels"], dtype=np.int64),
                )
            )
    return Dataset(
        samples=tuple(samples),
        role=manifest["role"],
        provenance=manifest.get("provenance", {}),
    )
