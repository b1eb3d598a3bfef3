"""Estimator-style wrappers: fit on training grids, rank lines of new grids.

These adapt the library to the familiar fit/predict shape. The exposure
ranker owns the whole learning pipeline (simulate, oversample, train); the
two baselines are stateless analyses behind the same interface. predict
returns 1-based ranks aligned with the grid's line order.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .baselines import BaselineScores, bodf_pagerank, electric_betweenness
from .cascade import build_holdout_pool, build_training_dataset
from .errors import GridValidationError
from .exposure import ExposureRanking, aggregate_exposure
from .grid import PowerGrid, build_line_graph
from .model import GruGatModel, ModelConfig, train
from .seeding import derive_seed


def _as_grid_list(X) -> list[PowerGrid]:
    if isinstance(X, PowerGrid):
        return [X]
    grids = list(X)
    if not grids or not all(isinstance(g, PowerGrid) for g in grids):
        raise GridValidationError("expected a PowerGrid or a sequence of them")
    return grids


class CascadeExposureRanker(BaseEstimator):
    """Learns cascade structure on training grids, ranks lines zero-shot.

    fit(X) simulates cascades on every grid in X, trains the recurrent
    attention model on the combined dataset, and freezes it. score_lines /
    predict then rank the lines of structurally unseen grids from attention
    traces alone, with no parameter updates.
    """

    def __init__(
        self,
        hidden_dim: int = 80,
        heads: int = 4,
        classes: int = 100,
        lr: float = 1e-3,
        accumulation_steps: int = 4,
        max_epochs: int = 63,
        patience: int = 63,
        scheduler_t0: float = 1.0,
        scheduler_tmult: float = 2.0,
        validation_fraction: float = 0.1,
        pool_per_grid: int = 250,
        cap: int = 250,
        k_min: int = 1,
        k_max: int = 3,
        n_exposure_samples: int = 100,
        mask_self_loops: bool = True,
        random_state: int = 0,
    ):
        self.hidden_dim = hidden_dim
        self.heads = heads
        self.classes = classes
        self.lr = lr
        self.accumulation_steps = accumulation_steps
        self.max_epochs = max_epochs
        self.patience = patience
        self.scheduler_t0 = scheduler_t0
        self.scheduler_tmult = scheduler_tmult
        self.validation_fraction = validation_fraction
        self.pool_per_grid = pool_per_grid
        self.cap = cap
        self.k_min = k_min
        self.k_max = k_max
        self.n_exposure_samples = n_exposure_samples
        self.mask_self_loops = mask_self_loops
        self.random_state = random_state

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            hidden_dim=self.hidden_dim,
            heads=self.heads,
            classes=self.classes,
            lr=self.lr,
            accumulation_steps=self.accumulation_steps,
            max_epochs=self.max_epochs,
            patience=self.patience,
            scheduler_t0=self.scheduler_t0,
            scheduler_tmult=self.scheduler_tmult,
            validation_fraction=self.validation_fraction,
            seed=derive_seed(self.random_state, "model"),
        )

    def fit(self, X, y=None):
        grids = _as_grid_list(X)
        dataset = build_training_dataset(
            grids,
            pool_per_grid=self.pool_per_grid,
            cap=self.cap,
            k_range=(self.k_min, self.k_max),
            seed=derive_seed(self.random_state, "train-data"),
            max_label=self.classes - 1,
        )
        line_graphs = {g.name: build_line_graph(g) for g in grids}
        model = GruGatModel(self._model_config())
        self.history_ = train(model, dataset, line_graphs)
        self.model_ = model
        self.training_grids_ = [g.name for g in grids]
        return self

    def score_lines(self, grid: PowerGrid, n_samples: int | None = None) -> ExposureRanking:
        """Exposure ranking for one (typically unseen) grid."""
        check_is_fitted(self, "model_")
        n = n_samples or self.n_exposure_samples
        pool = build_holdout_pool(
            grid,
            n,
            k_range=(self.k_min, self.k_max),
            seed=derive_seed(self.random_state, "exposure", grid.name),
        )
        lg = build_line_graph(grid)
        return aggregate_exposure(
            self.model_, list(pool.samples), lg, self.mask_self_loops
        )

    def predict(self, X) -> np.ndarray:
        """1-based vulnerability ranks for a single grid's lines."""
        grids = _as_grid_list(X)
        if len(grids) != 1:
            raise GridValidationError("predict ranks one grid at a time")
        return self.score_lines(grids[0]).ranks


class ElectricBetweennessRanker(BaseEstimator):
    """Flow-betweenness ranking behind the estimator interface."""

    def fit(self, X=None, y=None):
        self.fitted_ = True
        return self

    def score_lines(self, grid: PowerGrid) -> BaselineScores:
        check_is_fitted(self, "fitted_")
        return electric_betweenness(grid)

    def predict(self, X) -> np.ndarray:
        grids = _as_grid_list(X)
        if len(grids) != 1:
            raise GridValidationError("predict ranks one grid at a time")
        return self.score_lines(grids[0]).ranks


class BodfPageRankRanker(BaseEstimator):
    """Outage-factor PageRank ranking behind the estimator interface."""

    def __init__(self, damping: float = 0.85):
        self.damping = damping

    def fit(self, X=None, y=None):
        self.fitted_ = True
        return self

    def score_lines(self, grid: PowerGrid) -> BaselineScores:
        check_is_fitted(self, "fitted_")
        return bodf_pagerank(grid, self.damping)

    def predict(self, X) -> np.ndarray:
        grids = _as_grid_list(X)
        if len(grids) != 1:
            raise GridValidationError("predict ranks one grid at a time")
        return self.score_lines(grids[0]).ranks
