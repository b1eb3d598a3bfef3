"""Evaluation: ground-truth vulnerability tables and ranking-quality metrics.

Ground truth comes from held-out cascades only: a line's vulnerability is
the fraction of cascades in which it failed as a propagated failure (its
iteration label is 2 or more). Failures are split into shallow and deep at
the pool's floored mean depth. Rankings are scored by the mean vulnerability
of their top slice, by the mean percentile rank of the high-vulnerability
population, and by how quickly the ranking stabilizes as exposure samples
accumulate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import kendalltau

from .cascade import CascadeSample, Dataset
from .errors import InvalidSampleError
from .exposure import aggregate_contributions, per_sample_exposure
from .grid import LineGraph
from .model import GruGatModel


@dataclass(frozen=True)
class VulnerabilityTable:
    """Per-line failure fractions from a held-out cascade pool.

    total[v]: fraction of cascades where line v failed at iteration >= 2;
    shallow/deep split that fraction at the cutoff iteration. avg_scale and
    avg_depth summarize the pool; cutoff = floor(mean depth).
    """

    total: np.ndarray
    shallow: np.ndarray
    deep: np.ndarray
    avg_scale: float
    avg_depth: float
    cutoff: int

    def __post_init__(self):
        for name in ("total", "shallow", "deep"):
            getattr(self, name).flags.writeable = False

    @property
    def line_count(self) -> int:
        return len(self.total)


def ground_truth_vulnerability(
    holdout: Dataset, cutoff: int | None = None
) -> VulnerabilityTable:
    """Build the vulnerability table from a held-out pool of one grid."""
    if len(holdout) == 0:
        raise InvalidSampleError("empty holdout pool")
    names = holdout.grid_names
    if len(names) != 1:
        raise InvalidSampleError(
            f"holdout pool must cover exactly one grid, found {names}"
        )
    labels = np.stack([s.labels for s in holdout.samples])
    depths = labels.max(axis=1)
    avg_depth = float(depths.mean())
    if cutoff is None:
        cutoff = int(math.floor(avg_depth))
    propagated = labels >= 2
    total = propagated.mean(axis=0)
    shallow = (propagated & (labels <= cutoff)).mean(axis=0)
    deep = (labels > cutoff).mean(axis=0)
    avg_scale = float(propagated.mean(axis=1).mean())
    return VulnerabilityTable(
        total=total,
        shallow=shallow,
        deep=deep,
        avg_scale=avg_scale,
        avg_depth=avg_depth,
        cutoff=cutoff,
    )


def top_slice_size(tau_percent: float, line_count: int) -> int:
    return int(math.ceil(tau_percent / 100.0 * line_count))


def mean_top_tau(
    ranks: np.ndarray, values: np.ndarray, tau_percent: float
) -> float:
    """Mean of `values` over the top tau% of lines by rank (rank 1 first)."""
    if not (0 < tau_percent <= 100):
        raise InvalidSampleError(
            f"tau must be in (0, 100], got {tau_percent}"
        )
    ranks = np.asarray(ranks)
    values = np.asarray(values, dtype=np.float64)
    if ranks.shape != values.shape:
        raise InvalidSampleError(
            f"ranking covers {ranks.shape} lines but values cover {values.shape}"
        )
    n = top_slice_size(tau_percent, len(ranks))
    return float(values[ranks <= n].mean())


@dataclass(frozen=True)
class HighExposureSet:
    """Line positions whose vulnerability strictly exceeds the median over
    lines that ever failed."""

    members: np.ndarray
    threshold: float

    def __post_init__(self):
        self.members.flags.writeable = False

    def __len__(self) -> int:
        return len(self.members)


def high_exposure_set(values: np.ndarray) -> HighExposureSet:
    """Median rule over the failed population: members strictly exceed the
    median of positive vulnerabilities."""
    values = np.asarray(values, dtype=np.float64)
    failed = values > 0
    if not failed.any():
        raise InvalidSampleError("no line ever failed; high-exposure set undefined")
    threshold = float(np.median(values[failed]))
    members = np.flatnonzero(values > threshold)
    return HighExposureSet(members=members, threshold=threshold)


def mean_percentile_rank(
    ranks: np.ndarray, members: HighExposureSet | np.ndarray, line_count: int | None = None
) -> float:
    """Mean of r(v)/L over the member lines; 0.5 for a random ranking."""
    ranks = np.asarray(ranks)
    if isinstance(members, HighExposureSet):
        member_positions = members.members
    else:
        member_positions = np.asarray(members)
    if len(member_positions) == 0:
        raise InvalidSampleError("high-exposure set is empty")
    if line_count is None:
        line_count = len(ranks)
    return float(ranks[member_positions].mean() / line_count)


def perfect_mpr(set_size: int, line_count: int) -> float:
    """MPR of a ranker placing all members first: mean of 1..|E| over L."""
    return (set_size + 1) / (2 * line_count)


def macro_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Unweighted mean F1 over the classes present in either argument."""
    y_true = np.asarray(y_true).reshape(-1)
    y_pred = np.asarray(y_pred).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise InvalidSampleError(
            f"shape mismatch: {y_true.shape} vs {y_pred.shape}"
        )
    if len(y_true) == 0:
        raise InvalidSampleError("empty label arrays")
    classes = np.union1d(np.unique(y_true), np.unique(y_pred))
    f1_sum = 0.0
    for cls in classes:
        tp = np.count_nonzero((y_true == cls) & (y_pred == cls))
        fp = np.count_nonzero((y_true != cls) & (y_pred == cls))
        fn = np.count_nonzero((y_true == cls) & (y_pred != cls))
        denom = 2 * tp + fp + fn
        f1_sum += (2 * tp / denom) if denom else 0.0
    return f1_sum / len(classes)


@dataclass(frozen=True)
class EfficiencyPoint:
    n_samples: int
    top10_mean: float
    kendall_vs_max: float


def sample_efficiency_sweep(
    model: GruGatModel,
    lg: LineGraph,
    sample_pool: Sequence[CascadeSample],
    vul: VulnerabilityTable,
    ns_list: Sequence[int],
    mask_self_loops: bool = True,
) -> list[EfficiencyPoint]:
    """Exposure quality as a function of how many cascade samples feed it.

    For each N in ns_list, aggregate exposure from the first N pool samples,
    record the top-10% mean vulnerability, and compare the ranking against
    the largest-N ranking with Kendall's tau.
    """
    ns_list = sorted(set(int(n) for n in ns_list))
    if not ns_list or ns_list[0] <= 0:
        raise InvalidSampleError("ns_list must contain positive sizes")
    if len(sample_pool) < ns_list[-1]:
        raise InvalidSampleError(
            f"sample pool has {len(sample_pool)} samples, sweep needs "
            f"{ns_list[-1]}"
        )
    contributions = per_sample_exposure(
        model, list(sample_pool[: ns_list[-1]]), lg, mask_self_loops
    )
    reference = aggregate_contributions(contributions, lg.line_ids)
    points: list[EfficiencyPoint] = []
    for n in ns_list:
        ranking = aggregate_contributions(contributions[:n], lg.line_ids)
        tau = kendalltau(ranking.ranks, reference.ranks).statistic
        points.append(
            EfficiencyPoint(
                n_samples=n,
                top10_mean=mean_top_tau(ranking.ranks, vul.total, 10),
                kendall_vs_max=float(tau),
            )
        )
    return points
