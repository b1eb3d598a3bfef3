"""Final-candidate probe: trains the frozen-config model end to end and
predicts all six run-dependent acceptance checks (reconstruction transfer,
ranking superiority, percentile rank, sample efficiency, depth stratification,
wall clock) before the config is committed. Not part of the package."""

import sys
import time
from collections import defaultdict

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
from gridcascade.model import (
    GruGatModel,
    ModelConfig,
    reconstruction_macro_f1,
    save_checkpoint,
    train,
)
from gridcascade.seeding import derive_seed

MASTER = 7
TRAIN_SPECS = [("ring-mesh", 32, 1.25), ("ring-mesh", 36, 1.18), ("ring-mesh", 40, 1.10)]
EVAL_SPECS = [("hub-spoke", 30, 1.08), ("hub-spoke", 36, 1.08)]
POOL, CAP, HOLDOUT, EXPO = 250, 250, 300, 100
HID, LR, EPOCHS = 80, 1e-3, 63
NS_LIST = list(range(10, 101, 10))

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
stamp(f"dataset: {len(ds)} samples, classes {sorted(train_classes)}")

cfg = ModelConfig(
    hidden_dim=HID, heads=4, classes=100, lr=LR, max_epochs=EPOCHS,
    patience=EPOCHS, seed=derive_seed(MASTER, "model"),
)
model = GruGatModel(cfg)
lgs = {g.name: gc.build_line_graph(g) for g in train_grids}
t_train = time.perf_counter()
hist = train(model, ds, lgs)
train_secs = time.perf_counter() - t_train
stamp(f"trained in {train_secs:.0f}s: best epoch {hist.best_epoch} val {hist.best_val_loss:.4f}")
for e in hist.epochs:
    if e["epoch"] % 8 == 0 or e["epoch"] >= EPOCHS - 2:
        print(f"  epoch {e['epoch']}: train {e['train_loss']:.4f} "
              f"val {e['val_loss']:.4f} lr {e['lr']:.2e}", flush=True)
save_checkpoint(model, "/tmp/probe5.ckpt")


def in_degrees(lg):
    deg = np.zeros(lg.node_count, dtype=int)
    for s, d in zip(lg.src, lg.dst):
        if s != d:
            deg[d] += 1
    return deg


def diagnose(pool, lg, tag):
    """Error mass by class / line-graph in-degree / cascade size."""
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
                deg_wrong[min(deg[pos] // 5, 5)] += 1
                g_wrong[G] += 1
            deg_total[min(deg[pos] // 5, 5)] += 1
            g_total[G] += 1
    bad = [c for c in sorted(set(tp) | set(fp) | set(fn))
           if fp[c] + fn[c] > 0]
    if bad:
        rows = []
        for c in bad:
            denom_p = tp[c] + fp[c]
            denom_r = tp[c] + fn[c]
            prec = tp[c] / denom_p if denom_p else 0.0
            rec = tp[c] / denom_r if denom_r else 0.0
            f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
            rows.append(f"c{c}: f1 {f1:.3f} sup {denom_r}")
        print(f"  [{tag}] imperfect classes: " + "; ".join(rows), flush=True)
    parts = [f"deg {b*5}-{b*5+4}: {deg_wrong[b]}/{deg_total[b]}"
             for b in sorted(deg_total) if deg_wrong[b]]
    print(f"  [{tag}] errors by in-degree: " + ("; ".join(parts) or "none"), flush=True)
    parts = [f"G={g}: {g_wrong[g]}/{g_total[g]}" for g in sorted(g_total) if g_wrong[g]]
    print(f"  [{tag}] errors by cascade size: " + ("; ".join(parts) or "none"), flush=True)


# Control: held-out samples from a training grid isolate optimization quality
# from transfer quality.
ctrl = train_grids[1]
ctrl_pool = build_holdout_pool(ctrl, 100, (1, 3), seed=derive_seed(MASTER, "ctrl"))
f1 = reconstruction_macro_f1(model, list(ctrl_pool.samples), {ctrl.name: lgs[ctrl.name]})
stamp(f"CONTROL {ctrl.name}: holdout macro-F1 {f1:.4f}")
diagnose(ctrl_pool, lgs[ctrl.name], "control")

verdicts = []
for i, (fam, b, cf) in enumerate(EVAL_SPECS):
    name = f"eval{i}-{fam}-{b}b"
    grid = gc.generate_synthetic_grid(
        b, fam, cf, seed=derive_seed(MASTER, "grid", name), name=name
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
    print(f"  C6 macro-F1 holdout {f1_hold:.4f} exposure-pool {f1_expo:.4f}", flush=True)
    diagnose(hold, lg, "holdout")

    vul = ground_truth_vulnerability(hold)
    eb = electric_betweenness(grid)
    pr = bodf_pagerank(grid)
    print(f"  cutoff {vul.cutoff} avg_depth {vul.avg_depth:.2f}", flush=True)
    grid_verdict = {"name": name, "f1": f1_hold}
    for mask_loops in (True, False):
        tag = "loops+" if mask_loops else "loops-"
        ranking = aggregate_exposure(model, list(expo.samples), lg, mask_self_loops=mask_loops)
        trio = (("exposure", ranking.ranks), ("eb", eb.ranks), ("pr", pr.ranks))
        top = {lab: mean_top_tau(r, vul.total, 10) for lab, r in trio}
        sweep = {lab: float(np.mean([mean_top_tau(r, vul.total, t) for t in range(1, 11)]))
                 for lab, r in trio}
        print(f"  [{tag}] C7 top-10%: " + " ".join(f"{k} {v:.4f}" for k, v in top.items()),
              flush=True)
        print(f"  [{tag}] C7 tau-sweep: " + " ".join(f"{k} {v:.4f}" for k, v in sweep.items()),
              flush=True)
        c7 = (top["exposure"] >= max(top["eb"], top["pr"])
              and sweep["exposure"] > max(sweep["eb"], sweep["pr"]))
        members = high_exposure_set(vul.total)
        mpr = {lab: mean_percentile_rank(r, members) for lab, r in trio}
        print(f"  [{tag}] C8 MPR (|E|={len(members.members)}): "
              + " ".join(f"{k} {v:.4f}" for k, v in mpr.items()), flush=True)
        c8 = mpr["exposure"] < 0.5 and mpr["exposure"] < min(mpr["eb"], mpr["pr"])
        eff = sample_efficiency_sweep(model, lg, list(expo.samples), vul, NS_LIST,
                                      mask_self_loops=mask_loops)
        kt30 = [p.kendall_vs_max for p in eff if p.n_samples == 30][0]
        print(f"  [{tag}] C9 kendall-vs-100: "
              + " ".join(f"n{p.n_samples} {p.kendall_vs_max:.3f}" for p in eff), flush=True)
        c9 = kt30 >= 0.8
        m_sh = {lab: mean_top_tau(r, vul.shallow, 10) for lab, r in trio}
        m_dp = {lab: mean_top_tau(r, vul.deep, 10) for lab, r in trio}
        margin_sh = m_sh["exposure"] - max(m_sh["eb"], m_sh["pr"])
        margin_dp = m_dp["exposure"] - max(m_dp["eb"], m_dp["pr"])
        c10 = margin_dp >= margin_sh
        print(f"  [{tag}] C10 shallow {margin_sh:+.4f} deep {margin_dp:+.4f} "
              f"(qualifies: {vul.avg_depth >= 4.0})", flush=True)
        grid_verdict[tag] = dict(c7=c7, c8=c8, c9=c9, kt30=kt30, c10=c10,
                                 depth_ok=vul.avg_depth >= 4.0)
    verdicts.append(grid_verdict)

print("\n==== VERDICT ====", flush=True)
for v in verdicts:
    print(f"{v['name']}: C6 f1 {v['f1']:.4f} ({'OK' if v['f1'] >= 0.99 else 'FAIL'})",
          flush=True)
    for tag in ("loops+", "loops-"):
        d = v[tag]
        print(f"  [{tag}] C7 {'OK' if d['c7'] else 'FAIL'} "
              f"C8 {'OK' if d['c8'] else 'FAIL'} "
              f"C9 {'OK' if d['c9'] else 'FAIL'} (kt30 {d['kt30']:.3f}) "
              f"C10 deep>=shallow {'yes' if d['c10'] else 'no'} "
              f"depth>=4 {'yes' if d['depth_ok'] else 'no'}", flush=True)
for tag in ("loops+", "loops-"):
    c10_ok = any(v[tag]["c10"] and v[tag]["depth_ok"] for v in verdicts)
    all_ok = (all(v["f1"] >= 0.99 for v in verdicts)
              and all(v[tag]["c7"] and v[tag]["c8"] and v[tag]["c9"] for v in verdicts)
              and c10_ok)
    print(f"[{tag}] C10 {'OK' if c10_ok else 'FAIL'}; ALL {'PASS' if all_ok else 'FAIL'}",
          flush=True)
stamp(f"done (train {train_secs:.0f}s)")
