"""Static vulnerability baselines computed from grid structure alone.

Electric betweenness averages each line's absolute flow response over unit
transfers between every unordered bus pair. The outage-factor PageRank walks
a line-to-line transition matrix where an outaged line votes for the lines
that absorb its flow, weights taken from the outage distribution factors.
Neither method sees any cascade data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridValidationError, SolverError
from .exposure import rank_scores
from .grid import PowerGrid
from .powerflow import compute_lodf, compute_ptdf

DEFAULT_DAMPING = 0.85
_POWER_ITER_TOL = 1e-12
_POWER_ITER_MAX = 10_000


@dataclass(frozen=True)
class BaselineScores:
    """Positional per-line scores and 1-based ranks for one method."""

    method: str
    line_ids: np.ndarray
    scores: np.ndarray
    ranks: np.ndarray

    def __post_init__(self):
        for name in ("line_ids", "scores", "ranks"):
            getattr(self, name).flags.writeable = False


def electric_betweenness(grid: PowerGrid) -> BaselineScores:
    """Mean absolute per-line flow over uniform unit transfers between all
    unordered bus pairs."""
    ptdf = compute_ptdf(grid)
    if ptdf.island_id.max() != 0:
        raise GridValidationError(
            f"grid '{grid.name}' is not connected; electric betweenness "
            f"needs a single island"
        )
    n = grid.bus_count
    scores = np.zeros(grid.line_count, dtype=np.float64)
    pairs = 0
    for s in range(n):
        for t in range(s + 1, n):
            scores += np.abs(ptdf.isf[:, s] - ptdf.isf[:, t])
            pairs += 1
    scores /= pairs
    return BaselineScores(
        method="eb",
        line_ids=grid.line_ids.copy(),
        scores=scores,
        ranks=rank_scores(grid.line_ids, scores),
    )


def bodf_pagerank(grid: PowerGrid, damping: float = DEFAULT_DAMPING) -> BaselineScores:
    """Stationary score of the outage-factor transition matrix.

    Column k holds |lodf[l, k]| for l != k, normalized to sum 1; columns of
    radial lines fall back to the uniform distribution so the matrix stays
    stochastic. Solved by damped power iteration.
    """
    if not (0 < damping < 1):
        raise SolverError(f"damping must be in (0, 1), got {damping}")
    sens = compute_lodf(grid)
    L = grid.line_count
    transition = np.abs(sens.lodf).copy()
    np.fill_diagonal(transition, 0.0)
    uniform = np.full(L, 1.0 / L)
    for k in range(L):
        if sens.radial[k]:
            transition[:, k] = uniform
            continue
        total = transition[:, k].sum()
        if total <= 0:
            transition[:, k] = uniform
        else:
            transition[:, k] /= total

    scores = uniform.copy()
    teleport = (1.0 - damping) / L
    for _ in range(_POWER_ITER_MAX):
        updated = damping * (transition @ scores) + teleport
        residual = np.abs(updated - scores).sum()
        scores = updated
        if residual <= _POWER_ITER_TOL:
            break
    else:
        raise SolverError(
            f"grid '{grid.name}': power iteration did not converge within "
            f"{_POWER_ITER_MAX} steps"
        )
    return BaselineScores(
        method="pr",
        line_ids=grid.line_ids.copy(),
        scores=scores,
        ranks=rank_scores(grid.line_ids, scores),
    )
