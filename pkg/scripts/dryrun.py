"""Dry run of the full experiment at a candidate config; prints every
acceptance-relevant quantity. Not part of the package."""

import sys
import time

import numpy as np

sys.path.insert(0, "src")

import gridcascade as gc
from gridcascade.baselines import bodf_pagerank, electric_betweenness
from gridcascade.cascade import build_holdout_pool, build_training_dataset, pool_statistics
from gridcascade.exposure import aggregate_exposure
from gridcascade.metrics import (
    ground_truth_vulnerability,
    high_exposure_set,
    mean_percentile_rank,
    mean_top_tau,
    sample_efficiency_sweep,
)
from gridcascade.model import GruGatModel, ModelConfig, reconstruction_macro_f1, train
from gridcascade.seeding import derive_seed

MASTER = 7
TRAIN_SPECS = [("ring-mesh", 32, 1.18), ("ring-mesh", 36, 1.15), ("ring-mesh", 40, 1.12)]
EVAL_SPECS = [("hub-spoke", 30, 1.2), ("hub-spoke", 36, 1.1)]
POOL, CAP, HOLDOUT, EXPO = 400, 400, 300, 100
HID = 96
LR = 1e-3
EPOCHS = 30

t0 = time.perf_counter()

train_grids = []
for i, (fam, b, cf) in enumerate(TRAIN_SPECS):
    name = f"train{i}-{fam}-{b}b"
    train_grids.append(
        gc.generate_synthetic_grid(b, fam, cf, seed=derive_seed(MASTER, "grid", name), name=name)
    )
eval_grids = []
for i, (fam, b, cf) in enumerate(EVAL_SPECS):
    name = f"eval{i}-{fam}-{b}b"
    eval_grids.append(
        gc.generate_synthetic_grid(b, fam, cf, seed=derive_seed(MASTER, "grid", name), name=name)
    )

ds = build_training_dataset(
    train_grids, POOL, CAP, (1, 3), seed=derive_seed(MASTER, "train-data"), max_label=99
)
train_classes = set()
for s in ds.samples:
    train_classes |= set(np.unique(s.labels).tolist())
print(f"[{time.perf_counter()-t0:.0f}s] training classes: {sorted(train_classes)}", flush=True)

eval_pools = {}
ok = True
for g in eval_grids:
    hold = build_holdout_pool(g, HOLDOUT, (1, 3), seed=derive_seed(MASTER, "holdout", g.name))
    expo = build_holdout_pool(g, EXPO, (1, 3), seed=derive_seed(MASTER, "exposure", g.name))
    eval_pools[g.name] = (hold, expo)
    classes = set()
    for s in list(hold.samples) + list(expo.samples):
        classes |= set(np.unique(s.labels).tolist())
    extra = classes - train_classes
    st = pool_statistics(hold)
    print(
        f"{g.name}: depth {st['mean_depth']:.2f} scale {st['mean_scale']:.3f} "
        f"classes {sorted(classes)} UNSEEN {sorted(extra)}",
        flush=True,
    )
    if extra:
        ok = False
if not ok:
    print("ABORT: eval classes not covered by training", flush=True)
    sys.exit(1)

cfg = ModelConfig(
    hidden_dim=HID, heads=4, classes=100, lr=LR, max_epochs=EPOCHS,
    patience=10, seed=derive_seed(MASTER, "model"),
)
model = GruGatModel(cfg)
lgs = {g.name: gc.build_line_graph(g) for g in train_grids}
hist = train(model, ds, lgs)
print(f"[{time.perf_counter()-t0:.0f}s] trained: best epoch {hist.best_epoch} "
      f"val {hist.best_val_loss:.4f}", flush=True)
for e in hist.epochs:
    print(f"  epoch {e['epoch']}: train {e['train_loss']:.4f} val {e['val_loss']:.4f} "
          f"lr {e['lr']:.2e}", flush=True)

for g in eval_grids:
    lg = gc.build_line_graph(g)
    hold, expo = eval_pools[g.name]
    f1_expo = reconstruction_macro_f1(model, list(expo.samples), {g.name: lg})
    f1_hold = reconstruction_macro_f1(model, list(hold.samples), {g.name: lg})
    print(f"{g.name}: macro-F1 exposure-pool {f1_expo:.4f} holdout {f1_hold:.4f}", flush=True)

    vul = ground_truth_vulnerability(hold)
    eb = electric_betweenness(g)
    pr = bodf_pagerank(g)
    print(f"  cutoff {vul.cutoff} avg_depth {vul.avg_depth:.2f}", flush=True)
    for mask_loops in (True, False):
        ranking = aggregate_exposure(
            model, list(expo.samples), lg, mask_self_loops=mask_loops
        )
        tag = "loops+" if mask_loops else "loops-"
        for tau in (10,):
            print(
                f"  [{tag}] top-{tau}%: exposure {mean_top_tau(ranking.ranks, vul.total, tau):.4f} "
                f"eb {mean_top_tau(eb.ranks, vul.total, tau):.4f} "
                f"pr {mean_top_tau(pr.ranks, vul.total, tau):.4f}",
                flush=True,
            )
        sweep_means = {}
        for label, ranks in (("exposure", ranking.ranks), ("eb", eb.ranks), ("pr", pr.ranks)):
            sweep_means[label] = float(
                np.mean([mean_top_tau(ranks, vul.total, t) for t in range(1, 11)])
            )
        print(f"  [{tag}] tau-sweep means: {sweep_means}", flush=True)
        members = high_exposure_set(vul.total)
        print(
            f"  [{tag}] MPR: exposure {mean_percentile_rank(ranking.ranks, members):.4f} "
            f"eb {mean_percentile_rank(eb.ranks, members):.4f} "
            f"pr {mean_percentile_rank(pr.ranks, members):.4f} (|E|={len(members)})",
            flush=True,
        )
        pts = sample_efficiency_sweep(
            model, lg, list(expo.samples), vul, list(range(10, 101, 10)),
            mask_self_loops=mask_loops,
        )
        k30 = [p.kendall_vs_max for p in pts if p.n_samples == 30][0]
        print(f"  [{tag}] kendall(30 vs 100) = {k30:.4f}", flush=True)
        for kind, vals in (("shallow", vul.shallow), ("deep", vul.deep)):
            ex = mean_top_tau(ranking.ranks, vals, 10)
            eb_v = mean_top_tau(eb.ranks, vals, 10)
            pr_v = mean_top_tau(pr.ranks, vals, 10)
            print(f"  [{tag}] {kind} top-10%: exposure {ex:.4f} eb {eb_v:.4f} pr {pr_v:.4f} "
                  f"margin {ex - max(eb_v, pr_v):+.4f}", flush=True)

print(f"[{time.perf_counter()-t0:.0f}s] done", flush=True)
