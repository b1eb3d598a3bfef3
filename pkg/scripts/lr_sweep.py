"""Short learning-rate sweep to pick the shipped config's optimizer settings."""

import sys
import time

import numpy as np

sys.path.insert(0, "src")

import gridcascade as gc
from gridcascade.cascade import build_training_dataset
from gridcascade.model import GruGatModel, ModelConfig, train
from gridcascade.seeding import derive_seed

MASTER = 7
TRAIN_SPECS = [("ring-mesh", 32, 1.18), ("ring-mesh", 36, 1.15), ("ring-mesh", 40, 1.12)]

grids = []
for i, (fam, b, cf) in enumerate(TRAIN_SPECS):
    name = f"train{i}-{fam}-{b}b"
    grids.append(
        gc.generate_synthetic_grid(b, fam, cf, seed=derive_seed(MASTER, "grid", name), name=name)
    )
ds = build_training_dataset(grids, 400, 400, (1, 3), seed=derive_seed(MASTER, "train-data"), max_label=99)
lgs = {g.name: gc.build_line_graph(g) for g in grids}

for lr in (1e-4, 3e-4, 1e-3):
    for hid in (64, 96):
        cfg = ModelConfig(
            hidden_dim=hid, heads=4, classes=100, lr=lr, max_epochs=8,
            patience=8, seed=derive_seed(MASTER, "model"),
        )
        model = GruGatModel(cfg)
        t0 = time.perf_counter()
        hist = train(model, ds, lgs)
        vals = [f"{e['val_loss']:.1f}" for e in hist.epochs]
        print(
            f"lr {lr:g} hid {hid}: vals {vals} ({time.perf_counter()-t0:.0f}s)",
            flush=True,
        )
