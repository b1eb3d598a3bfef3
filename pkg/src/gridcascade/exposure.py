"""Cascade exposure: turn attention traces into a per-line vulnerability
ranking.

For one cascade sample, a line's exposure is the sum of the head-averaged
attention it receives over the recurrent steps, counting only edges whose
source lies within the cascade's reach at that step: an edge (u, v) is
admitted at step t when u's line-graph distance from the initial failures is
at most t. Per-sample exposures are combined across samples by a weighted
mean, each sample weighted by how many lines failed beyond the initial
iteration.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .cascade import CascadeSample
from .errors import InvalidSampleError
from .grid import CascadeDepths, LineGraph, cascade_depth
from .model import ForwardTrace, GruGatModel


def mask_edges(
    lg: LineGraph,
    depths: CascadeDepths,
    t: int,
    mask_self_loops: bool = True,
) -> np.ndarray:
    """Boolean mask over lg's directed edges: admitted iff the source node is
    reachable with depth <= t.

    Unreachable sources are never admitted (their sentinel depth must not
    leak through the comparison). With mask_self_loops=False, self-loops are
    dropped from exposure sums entirely instead of following the depth rule.
    """
    if t < 0:
        raise InvalidSampleError(f"mask step must be non-negative, got {t}")
    src = lg.src
    admitted = depths.reachable[src] & (depths.depth[src] <= t)
    if not mask_self_loops:
        admitted = admitted & ~lg.self_loop_mask
    return admitted


def masked_incoming_attention(
    trace: ForwardTrace,
    lg: LineGraph,
    depths: CascadeDepths,
    sample: CascadeSample,
    mask_self_loops: bool = True,
) -> np.ndarray:
    """Per-node sum of admitted head-averaged attention over all steps."""
    if not trace.matches(sample):
        raise InvalidSampleError(
            f"trace was recorded for grid '{trace.grid_name}' with different "
            f"labels; it does not belong to this sample"
        )
    if len(depths.depth) != lg.node_count:
        raise InvalidSampleError("depths do not match the line graph")
    scores = np.zeros(lg.node_count, dtype=np.float64)
    for t in range(trace.step_count):
        admitted = mask_edges(lg, depths, t, mask_self_loops)
        att = trace.attention_mean[t]
        np.add.at(scores, lg.dst[admitted], att[admitted])
    return scores


def cascade_weight(sample: CascadeSample) -> int:
    """Number of lines that failed beyond the initial iteration."""
    return int(np.count_nonzero(sample.labels > 1))


@dataclass(frozen=True)
class ExposureRanking:
    """Per-line exposure scores and the derived 1-based ranking.

    Arrays are positional over the grid's lines; `ranks` is a permutation of
    1..L, rank 1 being the most exposed. Ties break toward the smaller line
    id.
    """

    line_ids: np.ndarray
    scores: np.ndarray
    ranks: np.ndarray
    sample_count: int

    def __post_init__(self):
        for name in ("line_ids", "scores", "ranks"):
            getattr(self, name).flags.writeable = False

    @property
    def order(self) -> np.ndarray:
        """Line positions from rank 1 to rank L."""
        return np.argsort(self.ranks)


def rank_scores(line_ids: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """1-based ranks, descending by score, ties by ascending line id."""
    line_ids = np.asarray(line_ids)
    scores = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((line_ids, -scores))
    ranks = np.empty(len(scores), dtype=np.int64)
    ranks[order] = np.arange(1, len(scores) + 1)
    return ranks


def per_sample_exposure(
    model: GruGatModel,
    samples: Sequence[CascadeSample],
    lg: LineGraph,
    mask_self_loops: bool = True,
    depths: Sequence[CascadeDepths] | None = None,
) -> list[tuple[np.ndarray, int]]:
    """(exposure vector, cascade weight) for each sample, inference only."""
    if depths is not None and len(depths) != len(samples):
        raise InvalidSampleError("need one depth table per sample")
    out: list[tuple[np.ndarray, int]] = []
    for k, sample in enumerate(samples):
        if depths is None:
            initial_ids = [int(i) for i in lg.line_ids[sample.labels == 1]]
            depth_table = cascade_depth(lg, initial_ids)
        else:
            depth_table = depths[k]
        _, trace = model.forward(sample, lg)
        scores = masked_incoming_attention(
            trace, lg, depth_table, sample, mask_self_loops
        )
        out.append((scores, cascade_weight(sample)))
    return out


def aggregate_contributions(
    contributions: Sequence[tuple[np.ndarray, int]], line_ids: np.ndarray
) -> ExposureRanking:
    """Weighted-mean exposure over per-sample contributions plus ranking."""
    if not contributions:
        raise InvalidSampleError("no samples to aggregate")
    total_weight = float(sum(w for _, w in contributions))
    if total_weight == 0:
        raise InvalidSampleError("no propagating samples")
    combined = np.zeros_like(contributions[0][0])
    for scores, w in contributions:
        combined += w * scores
    combined /= total_weight
    return ExposureRanking(
        line_ids=np.asarray(line_ids, dtype=np.int64).copy(),
        scores=combined,
        ranks=rank_scores(line_ids, combined),
        sample_count=len(contributions),
    )


def aggregate_exposure(
    model: GruGatModel,
    samples: Sequence[CascadeSample],
    lg: LineGraph,
    mask_self_loops: bool = True,
    depths: Sequence[CascadeDepths] | None = None,
) -> ExposureRanking:
    """Full pipeline: traces, masked sums, cascade-size-weighted mean, rank."""
    for sample in samples:
        if len(sample.labels) != lg.node_count:
            raise InvalidSampleError(
                f"sample for grid '{sample.grid_name}' does not match the "
                f"line graph ({len(sample.labels)} labels, "
                f"{lg.node_count} nodes)"
            )
    contributions = per_sample_exposure(model, samples, lg, mask_self_loops, depths)
    return aggregate_contributions(contributions, lg.line_ids)


def save_ranking(
    path: str | Path,
    line_ids: np.ndarray,
    scores: np.ndarray,
    ranks: np.ndarray,
    method: str | None = None,
) -> None:
    """Ranking CSV, best rank first: line_id,exposure_score,rank, with an
    optional leading method column."""
    order = np.argsort(ranks)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["line_id", "exposure_score", "rank"]
        if method is not None:
            header = ["method"] + header
        writer.writerow(header)
        for pos in order:
            row = [int(line_ids[pos]), repr(float(scores[pos])), int(ranks[pos])]
            if method is not None:
                row = [method] + row
            writer.writerow(row)


def load_ranking(path: str | Path) -> dict[int, tuple[float, int]]:
    """Read a ranking CSV back as {line_id: (score, rank)}."""
    out: dict[int, tuple[float, int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out[int(row["line_id"])] = (float(row["exposure_score"]), int(row["rank"]))
    return out
