"""Long-training probe: does 63-epoch training close the reconstruction gap,
and where do errors concentrate (class / line-graph in-degree / cascade depth)?
Also sweeps eval-grid capacity factors under the revised hub recipe.
Not part of the package."""

import sys
import time
from collections import defaultdict

import numpy as np

sys.path.insert(0, "src")

import gridcascade as gc
from gridcascade.baselines import bodf_pagerank, electric_betweenness
from gridcascade.cascade import build_holdout_pool, build_training_dataset, pool_statistics
from gridcascade.exposure import aggregate_exposure
from scipy.stats import kendalltau

from gridcascade.metrics import (
    ground_truth_vulnerability,
    high_exposure_set,
    mean_percentile_rank,
    mean_top_tau,
)
from gridcascade.model import (
    GruGatModel,
    ModelConfig,
    reconstruction_macro_f1,
    save_checkpoint,
    train,
)
from gridcascade.seeding import derive_seed

MASTER = 7
TRAIN_SPECS = [("ring-mesh", 32, 1.18), ("ring-mesh", 36, 1.15), ("ring-mesh", 40, 1.12)]
EVAL_CANDIDATES = [
    ("hub-spoke", 30, 1.10),
    ("hub-spoke", 30, 1.12),
    ("hub-spoke", 36, 1.08),
    ("hub-spoke", 36, 1.10),
]
POOL, CAP, HOLDOUT, EXPO = 400, 400, 300, 100
HID, LR, EPOCHS = 96, 1e-3, 63

t0 = time.perf_counter()


def stamp(msg):
    print(f"[{time.perf_counter()-t0:.0f}s] {msg}", flush=True)


train_grids = []
for i, (fam, b, cf) in enumerate(TRAIN_SPECS):
    name = f"train{i}-{fam}-{b}b"
    train_grids.append(
        gc.generate_synthetic_grid(b, fam, cf, seed=derive_seed(MASTER, "grid", name), name=name)
    )

ds = build_training_dataset(
    train_grids, POOL, CAP, (1, 3), seed=derive_seed(MASTER, "train-data"), max_label=99
)
train_classes = set()
for s in ds.samples:
    train_classes |= set(np.unique(s.labels).tolist())
stamp(f"training classes: {sorted(train_classes)}")

cfg = ModelConfig(
    hidden_dim=HID, heads=4, classes=100, lr=LR, max_epochs=EPOCHS,
    patience=EPOCHS, seed=derive_seed(MASTER, "model"),
)
model = GruGatModel(cfg)
lgs = {g.name: gc.build_line_graph(g) for g in train_grids}
hist = train(model, ds, lgs)
stamp(f"trained: best epoch {hist.best_epoch} val {hist.best_val_loss:.4f}")
for e in hist.epochs:
    if e["epoch"] % 4 == 0 or e["epoch"] >= EPOCHS - 3:
        print(f"  epoch {e['epoch']}: train {e['train_loss']:.4f} "
              f"val {e['val_loss']:.4f} lr {e['lr']:.2e}", flush=True)
save_checkpoint(model, "/tmp/probe3.ckpt")
stamp("checkpoint saved to /tmp/probe3.ckpt")


def in_degrees(lg):
    """Incoming-edge count per node, self-loops excluded."""
    deg = np.zeros(lg.node_count, dtype=int)
    for s, d in zip(lg.src, lg.dst):
        if s != d:
            deg[d] += 1
    return deg


def diagnose(grid, pool, lg, tag):
    """Per-class F1 pieces, error-vs-in-degree, error-vs-G."""
    deg = in_degrees(lg)
    tp = defaultdict(int); fp = defaultdict(int); fn = defaultdict(int)
    deg_total = defaultdict(int); deg_wrong = defaultdict(int)
    g_total = defaultdict(int); g_wrong = defaultdict(int)
    for s in pool.samples:
        pred = model.predict_labels(s, lg)
        G = int(s.labels.max())
        for pos in range(len(s.labels)):
            t, p = int(s.labels[pos]), int(pred[pos])
            if t == p:
                tp[t] += 1
            else:
                fp[p] += 1
                fn[t] += 1
            bucket = min(deg[pos] // 5, 5)
            deg_total[bucket] += 1
            g_total[G] += 1
            if t != p:
                deg_wrong[bucket] += 1
                g_wrong[G] += 1
    classes = sorted(set(tp) | set(fp) | set(fn))
    rows = []
    for c in classes:
        denom_p = tp[c] + fp[c]
        denom_r = tp[c] + fn[c]
        prec = tp[c] / denom_p if denom_p else 0.0
        rec = tp[c] / denom_r if denom_r else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        rows.append(f"    class {c}: f1 {f1:.3f} support {denom_r} predicted {denom_p}")
    print(f"  [{tag}] per-class:", flush=True)
    for r in rows:
        print(r, flush=True)
    parts = []
    for b in sorted(deg_total):
        lo, hi = b * 5, b * 5 + 4
        lab = f"{lo}-{hi}" if b < 5 else f"{lo}+"
        parts.append(f"deg {lab}: {deg_wrong[b]}/{deg_total[b]} "
                     f"({deg_wrong[b]/deg_total[b]:.3f})")
    print(f"  [{tag}] error by in-degree: " + "; ".join(parts), flush=True)
    parts = [f"G={g}: {g_wrong[g]}/{g_total[g]} ({g_wrong[g]/g_total[g]:.3f})"
             for g in sorted(g_total)]
    print(f"  [{tag}] error by sample G: " + "; ".join(parts), flush=True)


# Control: reconstruction on held-out samples from a TRAINING grid.
ctrl = train_grids[1]
ctrl_lg = lgs[ctrl.name]
ctrl_pool = build_holdout_pool(ctrl, 100, (1, 3), seed=derive_seed(MASTER, "ctrl"))
f1 = reconstruction_macro_f1(model, list(ctrl_pool.samples), {ctrl.name: ctrl_lg})
stamp(f"CONTROL {ctrl.name}: holdout macro-F1 {f1:.4f}")
diagnose(ctrl, ctrl_pool, ctrl_lg, "control")

for fam, b, cf in EVAL_CANDIDATES:
    name = f"eval-{fam}-{b}b-cf{cf}"
    grid = gc.generate_synthetic_grid(
        b, fam, cf, seed=derive_seed(MASTER, "grid", f"eval-{fam}-{b}b"), name=name
    )
    lg = gc.build_line_graph(grid)
    deg = in_degrees(lg)
    hold = build_holdout_pool(grid, HOLDOUT, (1, 3), seed=derive_seed(MASTER, "holdout", name))
    expo = build_holdout_pool(grid, EXPO, (1, 3), seed=derive_seed(MASTER, "exposure", name))
    classes = set()
    for s in list(hold.samples) + list(expo.samples):
        classes |= set(np.unique(s.labels).tolist())
    st = pool_statistics(hold)
    stamp(f"{name}: lines {grid.line_count} max-indeg {deg.max()} "
          f"depth {st['mean_depth']:.2f} scale {st['mean_scale']:.3f} "
          f"UNSEEN {sorted(classes - train_classes)}")
    f1_hold = reconstruction_macro_f1(model, list(hold.samples), {name: lg})
    f1_expo = reconstruction_macro_f1(model, list(expo.samples), {name: lg})
    print(f"  macro-F1 holdout {f1_hold:.4f} exposure-pool {f1_expo:.4f}", flush=True)
    diagnose(grid, hold, lg, "holdout")

    vul = ground_truth_vulnerability(hold)
    eb = electric_betweenness(grid)
    pr = bodf_pagerank(grid)
    print(f"  cutoff {vul.cutoff} avg_depth {vul.avg_depth:.2f}", flush=True)
    for mask_loops in (True, False):
        tag = "loops+" if mask_loops else "loops-"
        ranking = aggregate_exposure(model, list(expo.samples), lg, mask_self_loops=mask_loops)
        top = {lab: mean_top_tau(r, vul.total, 10)
               for lab, r in (("exposure", ranking.ranks), ("eb", eb.ranks), ("pr", pr.ranks))}
        sweep = {lab: float(np.mean([mean_top_tau(r, vul.total, t) for t in range(1, 11)]))
                 for lab, r in (("exposure", ranking.ranks), ("eb", eb.ranks), ("pr", pr.ranks))}
        print(f"  [{tag}] top-10%: " + " ".join(f"{k} {v:.4f}" for k, v in top.items()), flush=True)
        print(f"  [{tag}] tau-sweep: " + " ".join(f"{k} {v:.4f}" for k, v in sweep.items()), flush=True)
        members = high_exposure_set(vul.total)
        if len(members) > 0:
            mpr = {lab: mean_percentile_rank(r, members)
                   for lab, r in (("exposure", ranking.ranks), ("eb", eb.ranks), ("pr", pr.ranks))}
            print(f"  [{tag}] MPR (|E|={len(members)}): "
                  + " ".join(f"{k} {v:.4f}" for k, v in mpr.items()), flush=True)
        r30 = aggregate_exposure(model, list(expo.samples)[:30], lg, mask_self_loops=mask_loops)
        kt = kendalltau(r30.ranks, ranking.ranks).statistic
        print(f"  [{tag}] kendall(30 vs 100) = {kt:.4f}", flush=True)
        m_sh = {lab: mean_top_tau(r, vul.shallow, 10)
                for lab, r in (("exposure", ranking.ranks), ("eb", eb.ranks), ("pr", pr.ranks))}
        m_dp = {lab: mean_top_tau(r, vul.deep, 10)
                for lab, r in (("exposure", ranking.ranks), ("eb", eb.ranks), ("pr", pr.ranks))}
        best_sh = max(m_sh["eb"], m_sh["pr"])
        best_dp = max(m_dp["eb"], m_dp["pr"])
        print(f"  [{tag}] shallow margin {m_sh['exposure']-best_sh:+.4f} "
              f"deep margin {m_dp['exposure']-best_dp:+.4f}", flush=True)

stamp("done")
