"""Structure-only probe (no training): under the revised grid recipes, find
training cfs and eval (size, cf) combos such that
  - eval line-graph in-degrees are covered by the training grids,
  - eval cascade depths (label classes) are covered by the training dataset,
  - an oracle exposure ranking (per-line failure frequency on the exposure
    pool) beats EB / BODF-PageRank with fat margins on the holdout,
  - the oracle ranking is stable between 30 and 100 samples,
  - deep-bin margins dominate shallow-bin margins, avg depth >= 4.
Uses exact pipeline grid names and seed streams. Not part of the package.
"""

import sys
import time

import numpy as np
from scipy.stats import kendalltau

sys.path.insert(0, "src")

import gridcascade as gc
from gridcascade.baselines import bodf_pagerank, electric_betweenness
from gridcascade.cascade import build_holdout_pool, build_training_dataset, pool_statistics
from gridcascade.exposure import rank_scores
from gridcascade.metrics import (
    ground_truth_vulnerability,
    high_exposure_set,
    mean_percentile_rank,
    mean_top_tau,
)
from gridcascade.seeding import derive_seed

MASTER = 7
K_RANGE = (1, 3)
POOL, CAP, HOLDOUT, EXPO = 400, 400, 300, 100
TRAIN_SPECS = [("ring-mesh", 36, 1.25), ("ring-mesh", 40, 1.15), ("ring-mesh", 44, 1.08)]
EVAL_SIZES = {0: [30, 34], 1: [36, 40]}
EVAL_CFS = [1.05, 1.08, 1.10, 1.12]

t0 = time.perf_counter()


def stamp(msg):
    print(f"[{time.perf_counter()-t0:.0f}s] {msg}", flush=True)


def in_degrees(lg):
    deg = np.zeros(lg.node_count, dtype=int)
    for s, d in zip(lg.src, lg.dst):
        if s != d:
            deg[d] += 1
    return deg


def degree_summary(deg):
    hist = {}
    for d in deg:
        b = min(int(d) // 5, 6)
        hist[b] = hist.get(b, 0) + 1
    parts = [f"{b*5}-{b*5+4}:{hist[b]}" if b < 6 else f"30+:{hist[b]}" for b in sorted(hist)]
    return f"max {deg.max()} p95 {int(np.percentile(deg, 95))} [{' '.join(parts)}]"


# ---- training side --------------------------------------------------------
train_grids = []
train_deg_max = 0
for i, (fam, b, cf) in enumerate(TRAIN_SPECS):
    name = f"train{i}-{fam}-{b}b"
    g = gc.generate_synthetic_grid(b, fam, cf, seed=derive_seed(MASTER, "grid", name), name=name)
    lg = gc.build_line_graph(g)
    deg = in_degrees(lg)
    train_deg_max = max(train_deg_max, int(deg.max()))
    stamp(f"{name} cf {cf}: lines {g.line_count} indeg {degree_summary(deg)}")
    train_grids.append(g)

ds = build_training_dataset(
    train_grids, POOL, CAP, K_RANGE, seed=derive_seed(MASTER, "train-data"), max_label=99
)
train_classes = set()
class_support = {}
gs = []
for s in ds.samples:
    for c, cnt in zip(*np.unique(s.labels, return_counts=True)):
        class_support[int(c)] = class_support.get(int(c), 0) + int(cnt)
    train_classes |= set(np.unique(s.labels).tolist())
    gs.append(int(s.labels.max()))
stamp(
    f"training dataset: {len(ds)} samples, mean G {np.mean(gs):.2f} "
    f"p90 G {np.percentile(gs, 90):.0f}"
)
print("    class support: " + " ".join(f"{c}:{class_support[c]}" for c in sorted(class_support)), flush=True)

# ---- eval side ------------------------------------------------------------
for slot, sizes in EVAL_SIZES.items():
    for b in sizes:
        name = f"eval{slot}-hub-spoke-{b}b"
        for cf in EVAL_CFS:
            grid = gc.generate_synthetic_grid(
                b, "hub-spoke", cf, seed=derive_seed(MASTER, "grid", name), name=name
            )
            lg = gc.build_line_graph(grid)
            deg = in_degrees(lg)
            hold = build_holdout_pool(
                grid, HOLDOUT, K_RANGE, seed=derive_seed(MASTER, "holdout", name)
            )
            expo = build_holdout_pool(
                grid, EXPO, K_RANGE, seed=derive_seed(MASTER, "exposure", name)
            )
            classes = set()
            for s in list(hold.samples) + list(expo.samples):
                classes |= set(np.unique(s.labels).tolist())
            unseen = sorted(classes - train_classes)
            vul = ground_truth_vulnerability(hold)
            eb = electric_betweenness(grid)
            pr = bodf_pagerank(grid)

            expo_labels = np.stack([s.labels for s in expo.samples])
            oracle_scores = (expo_labels >= 2).mean(axis=0)
            oracle = rank_scores(lg.line_ids, oracle_scores)
            oracle30 = rank_scores(
                lg.line_ids, (expo_labels[:30] >= 2).mean(axis=0)
            )
            kt = kendalltau(oracle30, oracle).statistic

            rankings = {"oracle": oracle, "eb": eb.ranks, "pr": pr.ranks}
            top = {k: mean_top_tau(r, vul.total, 10) for k, r in rankings.items()}
            sweep = {
                k: float(np.mean([mean_top_tau(r, vul.total, t) for t in range(1, 11)]))
                for k, r in rankings.items()
            }
            members = high_exposure_set(vul.total)
            mpr = {k: mean_percentile_rank(r, members.members) for k, r in rankings.items()}
            sh = {k: mean_top_tau(r, vul.shallow, 10) for k, r in rankings.items()}
            dp = {k: mean_top_tau(r, vul.deep, 10) for k, r in rankings.items()}
            sh_margin = sh["oracle"] - max(sh["eb"], sh["pr"])
            dp_margin = dp["oracle"] - max(dp["eb"], dp["pr"])

            checks = {
                "cover": int(np.percentile(deg, 99)) <= train_deg_max,
                "seen": not unseen,
                "depth": vul.avg_depth >= 4.0,
                "top": top["oracle"] >= max(top["eb"], top["pr"]) + 0.05,
                "sweep": sweep["oracle"] > max(sweep["eb"], sweep["pr"]) + 0.03,
                "mpr": mpr["oracle"] < 0.45 and mpr["oracle"] < min(mpr["eb"], mpr["pr"]) - 0.02,
                "strat": dp_margin >= sh_margin,
            }
            verdict = "PASS" if all(checks.values()) else "fail:" + ",".join(
                k for k, v in checks.items() if not v
            )
            stamp(
                f"{name} cf {cf}: lines {grid.line_count} indeg {degree_summary(deg)} "
                f"depth {vul.avg_depth:.2f} scale {vul.avg_scale:.3f} |E| {len(members)}"
            )
            print(f"    unseen {unseen}", flush=True)
            print(
                "    top10 o {oracle:.3f} eb {eb:.3f} pr {pr:.3f}".format(**top)
                + " | sweep o {oracle:.3f} eb {eb:.3f} pr {pr:.3f}".format(**sweep)
                + " | mpr o {oracle:.3f} eb {eb:.3f} pr {pr:.3f}".format(**mpr),
                flush=True,
            )
            print(
                f"    kt30 {kt:.3f} | shallow margin {sh_margin:+.3f} "
                f"deep margin {dp_margin:+.3f} | {verdict}",
                flush=True,
            )

stamp("done")
