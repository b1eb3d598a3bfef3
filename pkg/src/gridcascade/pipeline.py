"""End-to-end experiment stages over one output directory.

Stage order: grid-gen, dataset-build, train, exposure, baseline, evaluate,
report. Each stage reads only earlier stages' artifacts from the output
directory, records what it wrote plus its timing in manifest.json, and is
deterministic given the config. Training reads training grids only, so the
checkpoint is provably independent of the evaluation grids; exposure and
evaluation run the frozen model in inference mode.

Seed streams are derived from the master seed with per-purpose tags
(grid:NAME, train-data, model, exposure:NAME, holdout:NAME); the manifest
audit asserts they are pairwise distinct and every listed artifact exists.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .baselines import bodf_pagerank, electric_betweenness
from .cascade import (
    Dataset,
    build_holdout_pool,
    build_training_dataset,
    load_dataset,
    save_dataset,
)
from .config import ExperimentConfig, GridSpec
from .errors import InvalidSampleError, PipelineError
from .exposure import aggregate_exposure, load_ranking, save_ranking
from .grid import PowerGrid, build_line_graph, generate_synthetic_grid, load_grid, save_grid
from .metrics import (
    ground_truth_vulnerability,
    high_exposure_set,
    mean_percentile_rank,
    mean_top_tau,
    sample_efficiency_sweep,
)
from .model import (
    GruGatModel,
    load_checkpoint,
    reconstruction_macro_f1,
    save_checkpoint,
    train,
)
from .plot import svg_bar_chart, svg_line_chart
from .seeding import derive_seed
from .version import VERSION

METHODS = ("exposure", "eb", "pr")


class Pipeline:
    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.root = Path(config.out_dir)

    # -- paths ------------------------------------------------------------

    @property
    def grids_dir(self) -> Path:
        return self.root / "grids"

    @property
    def grid_index_path(self) -> Path:
        return self.grids_dir / "index.json"

    @property
    def dataset_dir(self) -> Path:
        return self.root / "datasets" / "training"

    @property
    def checkpoint_path(self) -> Path:
        return self.root / "model.ckpt"

    @property
    def history_path(self) -> Path:
        return self.root / "history.csv"

    def eval_dir(self, grid_name: str) -> Path:
        return self.root / "eval" / grid_name

    @property
    def report_dir(self) -> Path:
        return self.root / "report"

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    def _rel(self, path: Path) -> str:
        return path.relative_to(self.root).as_posix()

    # -- manifest ---------------------------------------------------------

    def _read_manifest(self) -> dict:
        if self.manifest_path.exists():
            with open(self.manifest_path, encoding="utf-8") as fh:
                return json.load(fh)
        return {
            "tool_version": VERSION,
            "config_hash": self.config.config_hash(),
            "master_seed": self.config.master_seed,
            "seeds": {},
            "stages": {},
        }

    def _record_stage(
        self, name: str, seconds: float, artifacts: list[Path], seeds: dict[str, int]
    ) -> None:
        manifest = self._read_manifest()
        manifest["config_hash"] = self.config.config_hash()
        manifest["master_seed"] = self.config.master_seed
        manifest["seeds"].update(seeds)
        manifest["stages"][name] = {
            "seconds": round(seconds, 3),
            "artifacts": sorted(self._rel(p) for p in artifacts),
        }
        self.root.mkdir(parents=True, exist_ok=True)
        with open(self.manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def audit(self) -> list[str]:
        """Manifest sanity: disjoint seed streams, artifacts present."""
        problems: list[str] = []
        if not self.manifest_path.exists():
            return ["manifest.json missing"]
        manifest = self._read_manifest()
        seeds = manifest.get("seeds", {})
        values = list(seeds.values())
        if len(set(values)) != len(values):
            problems.append("seed streams are not pairwise distinct")
        for stage, info in manifest.get("stages", {}).items():
            for rel in info.get("artifacts", []):
                if not (self.root / rel).exists():
                    problems.append(f"stage {stage}: missing artifact {rel}")
        return problems

    # -- grid helpers -----------------------------------------------------

    def _grid_name(self, role: str, index: int, spec: GridSpec) -> str:
        if spec.path:
            return Path(spec.path).name
        return f"{role}{index}-{spec.family}-{spec.buses}b"

    def _build_grid(self, spec: GridSpec, name: str) -> tuple[PowerGrid, dict[str, int]]:
        if spec.path:
            return load_grid(spec.path, name=name), {}
        seed = derive_seed(self.config.master_seed, "grid", name)
        grid = generate_synthetic_grid(
            spec.buses, spec.family, spec.capacity_factor, seed=seed, name=name
        )
        return grid, {f"grid:{name}": seed}

    def _load_index(self) -> dict:
        if not self.grid_index_path.exists():
            raise PipelineError(
                f"grid index not found at {self.grid_index_path}; run grid-gen first"
            )
        with open(self.grid_index_path, encoding="utf-8") as fh:
            return json.load(fh)

    def load_grids(self, role: str) -> dict[str, PowerGrid]:
        """Read saved grids of one role ('training' or 'eval') from disk."""
        index = self._load_index()
        out: dict[str, PowerGrid] = {}
        for name in index[role]:
            out[name] = load_grid(self.grids_dir / name, name=name)
        return out

    # -- stages -----------------------------------------------------------

    def run_grid_gen(self) -> dict[str, list[str]]:
        start = time.perf_counter()
        seeds: dict[str, int] = {}
        artifacts: list[Path] = []
        index: dict[str, list[str]] = {"training": [], "eval": []}
        for role, specs in (
            ("training", self.config.training_grids),
            ("eval", self.config.eval_grids),
        ):
            prefix = "train" if role == "training" else "eval"
            for i, spec in enumerate(specs):
                name = self._grid_name(prefix, i, spec)
                if name in index["training"] + index["eval"]:
                    raise PipelineError(f"duplicate grid name '{name}' in config")
                grid, used = self._build_grid(spec, name)
                seeds.update(used)
                target = self.grids_dir / name
                save_grid(grid, target)
                artifacts += [target / "buses.csv", target / "lines.csv"]
                index[role].append(name)
        with open(self.grid_index_path, "w", encoding="utf-8") as fh:
            json.dump(index, fh, indent=2, sort_keys=True)
            fh.write("\n")
        artifacts.append(self.grid_index_path)
        self._record_stage("grid-gen", time.perf_counter() - start, artifacts, seeds)
        return index

    def run_dataset_build(self) -> Dataset:
        start = time.perf_counter()
        grids = self.load_grids("training")
        seed = derive_seed(self.config.master_seed, "train-data")
        dataset = build_training_dataset(
            list(grids.values()),
            pool_per_grid=self.config.pool_per_grid,
            cap=self.config.cap,
            k_range=self.config.k_range,
            seed=seed,
            max_label=self.config.model.classes - 1,
        )
        save_dataset(dataset, self.dataset_dir)
        self._record_stage(
            "dataset-build",
            time.perf_counter() - start,
            [self.dataset_dir / "samples.jsonl", self.dataset_dir / "manifest.json"],
            {"train-data": seed},
        )
        return dataset

    def run_train(self) -> GruGatModel:
        start = time.perf_counter()
        grids = self.load_grids("training")
        if not (self.dataset_dir / "samples.jsonl").exists():
            raise PipelineError(
                f"training dataset not found at {self.dataset_dir}; "
                f"run dataset-build first"
            )
        dataset = load_dataset(self.dataset_dir)
        line_graphs = {name: build_line_graph(g) for name, g in grids.items()}
        model_seed = derive_seed(self.config.master_seed, "model")
        model = GruGatModel(replace(self.config.model, seed=model_seed))
        history = train(model, dataset, line_graphs)
        save_checkpoint(model, self.checkpoint_path)
        with open(self.history_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "train_loss", "val_loss", "lr", "improved"])
            for row in history.epochs:
                writer.writerow(
                    [
                        row["epoch"],
                        repr(row["train_loss"]),
                        repr(row["val_loss"]),
                        repr(row["lr"]),
                        int(row["improved"]),
                    ]
                )
        self._record_stage(
            "train",
            time.perf_counter() - start,
            [self.checkpoint_path, self.history_path],
            {"model": model_seed},
        )
        return model

    def _require_checkpoint(self) -> GruGatModel:
        if not self.checkpoint_path.exists():
            raise PipelineError(
                f"checkpoint not found at {self.checkpoint_path}; run train first"
            )
        return load_checkpoint(self.checkpoint_path)

    def run_exposure(self) -> None:
        start = time.perf_counter()
        model = self._require_checkpoint()
        grids = self.load_grids("eval")
        seeds: dict[str, int] = {}
        artifacts: list[Path] = []
        for name, grid in grids.items():
            seed = derive_seed(self.config.master_seed, "exposure", name)
            seeds[f"exposure:{name}"] = seed
            pool = build_holdout_pool(
                grid, self.config.n_exposure_samples, self.config.k_range, seed
            )
            directory = self.eval_dir(name)
            directory.mkdir(parents=True, exist_ok=True)
            save_dataset(pool, directory / "exposure-samples")
            lg = build_line_graph(grid)
            ranking = aggregate_exposure(
                model, list(pool.samples), lg, self.config.mask_self_loops
            )
            save_ranking(
                directory / "exposure.csv",
                ranking.line_ids,
                ranking.scores,
                ranking.ranks,
            )
            artifacts += [
                directory / "exposure.csv",
                directory / "exposure-samples" / "samples.jsonl",
                directory / "exposure-samples" / "manifest.json",
            ]
        self._record_stage("exposure", time.perf_counter() - start, artifacts, seeds)

    def run_baselines(self) -> None:
        start = time.perf_counter()
        grids = self.load_grids("eval")
        artifacts: list[Path] = []
        for name, grid in grids.items():
            directory = self.eval_dir(name)
            directory.mkdir(parents=True, exist_ok=True)
            path = directory / "baselines.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["method", "line_id", "exposure_score", "rank"])
                for scores in (
                    electric_betweenness(grid),
                    bodf_pagerank(grid, self.config.pagerank_damping),
                ):
                    for pos in np.argsort(scores.ranks):
                        writer.writerow(
                            [
                                scores.method,
                                int(scores.line_ids[pos]),
                                repr(float(scores.scores[pos])),
                                int(scores.ranks[pos]),
                            ]
                        )
            artifacts.append(path)
        self._record_stage("baseline", time.perf_counter() - start, artifacts, {})

    def _aligned_ranks(
        self, mapping: dict[int, tuple[float, int]], grid: PowerGrid, source: str
    ) -> np.ndarray:
        ranks = np.zeros(grid.line_count, dtype=np.int64)
        for pos, line_id in enumerate(grid.line_ids):
            if int(line_id) not in mapping:
                raise PipelineError(f"{source}: missing line id {int(line_id)}")
            ranks[pos] = mapping[int(line_id)][1]
        return ranks

    def _load_baselines(self, path: Path) -> dict[str, dict[int, tuple[float, int]]]:
        if not path.exists():
            raise PipelineError(f"baseline rankings not found at {path}; run baseline first")
        out: dict[str, dict[int, tuple[float, int]]] = {}
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                out.setdefault(row["method"], {})[int(row["line_id"])] = (
                    float(row["exposure_score"]),
                    int(row["rank"]),
                )
        return out

    def run_evaluate(self) -> None:
        start = time.perf_counter()
        model = self._require_checkpoint()
        grids = self.load_grids("eval")
        seeds: dict[str, int] = {}
        artifacts: list[Path] = []
        for name, grid in grids.items():
            directory = self.eval_dir(name)
            exposure_path = directory / "exposure.csv"
            if not exposure_path.exists():
                raise PipelineError(
                    f"exposure ranking not found at {exposure_path}; run exposure first"
                )
            rankings = {
                "exposure": self._aligned_ranks(
                    load_ranking(exposure_path), grid, "exposure.csv"
                )
            }
            for method, mapping in self._load_baselines(
                directory / "baselines.csv"
            ).items():
                rankings[method] = self._aligned_ranks(mapping, grid, "baselines.csv")

            seed = derive_seed(self.config.master_seed, "holdout", name)
            seeds[f"holdout:{name}"] = seed
            holdout = build_holdout_pool(
                grid, self.config.holdout_size, self.config.k_range, seed
            )
            save_dataset(holdout, directory / "holdout")
            vul = ground_truth_vulnerability(holdout)
            lg = build_line_graph(grid)

            rows: list[tuple[str, str, str, str, float]] = []
            rows.append((name, "pool", "avg_scale", "", vul.avg_scale))
            rows.append((name, "pool", "avg_depth", "", vul.avg_depth))
            rows.append((name, "pool", "cutoff", "", float(vul.cutoff)))
            rows.append((name, "pool", "samples", "", float(len(holdout))))

            members = high_exposure_set(vul.total)
            depth_members = {}
            for kind, values in (("shallow", vul.shallow), ("deep", vul.deep)):
                try:
                    candidate = high_exposure_set(values)
                except InvalidSampleError:
                    candidate = None
                if candidate is not None and len(candidate) == 0:
                    candidate = None
                depth_members[kind] = candidate
            for method in METHODS:
                ranks = rankings[method]
                for tau in self.config.tau_percents:
                    rows.append(
                        (
                            name,
                            method,
                            "top_tau_total",
                            str(tau),
                            mean_top_tau(ranks, vul.total, tau),
                        )
                    )
                rows.append(
                    (name, method, "top_tau_shallow", "10", mean_top_tau(ranks, vul.shallow, 10))
                )
                rows.append(
                    (name, method, "top_tau_deep", "10", mean_top_tau(ranks, vul.deep, 10))
                )
                if len(members) > 0:
                    rows.append(
                        (
                            name,
                            method,
                            "mpr_total",
                            "",
                            mean_percentile_rank(ranks, members),
                        )
                    )
                for kind in ("shallow", "deep"):
                    if depth_members[kind] is not None:
                        rows.append(
                            (
                                name,
                                method,
                                f"mpr_{kind}",
                                "",
                                mean_percentile_rank(ranks, depth_members[kind]),
                            )
                        )

            exposure_pool_dir = directory / "exposure-samples"
            if not (exposure_pool_dir / "samples.jsonl").exists():
                raise PipelineError(
                    f"exposure sample pool not found at {exposure_pool_dir}; "
                    f"run exposure first"
                )
            pool = load_dataset(exposure_pool_dir)
            sweep = sample_efficiency_sweep(
                model,
                lg,
                list(pool.samples),
                vul,
                list(self.config.ns_list),
                self.config.mask_self_loops,
            )
            for point in sweep:
                rows.append(
                    (
                        name,
                        "exposure",
                        "efficiency_top10",
                        str(point.n_samples),
                        point.top10_mean,
                    )
                )
                rows.append(
                    (
                        name,
                        "exposure",
                        "efficiency_kendall",
                        str(point.n_samples),
                        point.kendall_vs_max,
                    )
                )
            rows.append(
                (
                    name,
                    "exposure",
                    "reconstruction_macro_f1",
                    "",
                    reconstruction_macro_f1(model, list(holdout.samples), {name: lg}),
                )
            )

            metrics_path = directory / "metrics.csv"
            with open(metrics_path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["grid", "method", "metric", "parameter", "value"])
                for row in rows:
                    writer.writerow(list(row[:4]) + [repr(float(row[4]))])
            artifacts += [metrics_path, directory / "holdout" / "samples.jsonl"]
        self._record_stage("evaluate", time.perf_counter() - start, artifacts, seeds)

    def _read_metrics(self, grid_name: str) -> list[dict]:
        path = self.eval_dir(grid_name) / "metrics.csv"
        if not path.exists():
            raise PipelineError(f"metrics not found at {path}; run evaluate first")
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))

    def run_report(self) -> None:
        start = time.perf_counter()
        index = self._load_index()
        eval_names = index["eval"]
        self.report_dir.mkdir(parents=True, exist_ok=True)
        artifacts: list[Path] = []
        method_labels = {
            "exposure": "cascade exposure",
            "eb": "electric betweenness",
            "pr": "outage-factor pagerank",
        }
        all_metrics = {name: self._read_metrics(name) for name in eval_names}

        def select(name: str, method: str, metric: str) -> list[tuple[float, float]]:
            rows = [
                (float(r["parameter"]), float(r["value"]))
                for r in all_metrics[name]
                if r["method"] == method and r["metric"] == metric
            ]
            return sorted(rows)

        def single(name: str, method: str, metric: str) -> float:
            for r in all_metrics[name]:
                if r["method"] == method and r["metric"] == metric:
                    return float(r["value"])
            raise PipelineError(f"metric {metric} for {method} missing on {name}")

        for name in eval_names:
            series = []
            for method in METHODS:
                pts = select(name, method, "top_tau_total")
                series.append(
                    {
                        "label": method_labels[method],
                        "xs": [p[0] for p in pts],
                        "ys": [p[1] for p in pts],
                    }
                )
            path = self.report_dir / f"top_tau_{name}.svg"
            svg_line_chart(
                path,
                f"Top-tau vulnerability capture: {name}",
                "tau (% of lines)",
                "mean vulnerability of top slice",
                series,
            )
            artifacts.append(path)

            eff_top = select(name, "exposure", "efficiency_top10")
            eff_tau = select(name, "exposure", "efficiency_kendall")
            path = self.report_dir / f"efficiency_{name}.svg"
            svg_line_chart(
                path,
                f"Sample efficiency: {name}",
                "cascade samples used",
                "metric value",
                [
                    {
                        "label": "top-10% mean vulnerability",
                        "xs": [p[0] for p in eff_top],
                        "ys": [p[1] for p in eff_top],
                    },
                    {
                        "label": "kendall tau vs full pool",
                        "xs": [p[0] for p in eff_tau],
                        "ys": [p[1] for p in eff_tau],
                    },
                ],
            )
            artifacts.append(path)

            path = self.report_dir / f"depth_{name}.svg"
            svg_bar_chart(
                path,
                f"Depth-stratified top-10% capture: {name}",
                "mean bin vulnerability of top-10%",
                ["shallow bin", "deep bin"],
                [
                    {
                        "label": method_labels[m],
                        "values": [
                            single(name, m, "top_tau_shallow"),
                            single(name, m, "top_tau_deep"),
                        ],
                    }
                    for m in METHODS
                ],
            )
            artifacts.append(path)

        path = self.report_dir / "mpr.svg"
        svg_bar_chart(
            path,
            "Mean percentile rank of high-vulnerability lines",
            "MPR (lower is better)",
            eval_names,
            [
                {
                    "label": method_labels[m],
                    "values": [single(name, m, "mpr_total") for name in eval_names],
                }
                for m in METHODS
            ],
            hline=0.5,
        )
        artifacts.append(path)
        self._record_stage("report", time.perf_counter() - start, artifacts, {})

    def run_all(self) -> None:
        self.run_grid_gen()
        self.run_dataset_build()
        self.run_train()
        self.run_exposure()
        self.run_baselines()
        self.run_evaluate()
        self.run_report()
        problems = self.audit()
        if problems:
            raise PipelineError("manifest audit failed: " + "; ".join(problems))
