"""Fit an input-dependent mixture to the two-moons dataset and compare it
against a constant-weight mixture fitted by EM.

The interesting quantity is held-out mean log-likelihood: with the same
Gaussian components, letting a small network reassign mixture weights as a
function of position captures the curved arms noticeably better than fixed
weights can.

Run:  python3 demos/01_synthetic_density.py
"""

from pathlib import Path

import numpy as np

from cwm.data import make_synthetic, split
from cwm.gmm import Gmm, em_fit
from cwm.modelio import export_density_grid, save_model
from cwm.rng import RngHandle
from cwm.training import TrainConfig, count_parameters, fit_cwm

OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)

K = 8
ds = split(make_synthetic("two-moons", 8000, rng=RngHandle(42)), 0.2, seed=42)
print(f"dataset: {ds.n} points, {len(ds.train_idx)} train / {len(ds.val_idx)} val")

# constant-weight baseline, fitted by EM to convergence
baseline = Gmm.init_from_data(ds.train_points, K, RngHandle(42))
baseline, trace = em_fit(baseline, ds)
gmm_val = float(np.mean(baseline.log_prob_batch(ds.val_points)))
print(f"EM baseline:  {len(trace)} iterations, val LL {gmm_val:.4f}")

# same K, but weights produced by a classifier over whitened coordinates
config = TrainConfig(epochs=40, seed=42, hidden_sizes=(32, 32))
model, rep = fit_cwm(ds, K, config)
cwm_val = rep.val_ll[-1]
print(f"trained mixture: {len(rep.val_ll)} epochs, {rep.n_parameters} parameters, "
      f"val LL {cwm_val:.4f}")
print(f"gap: {cwm_val - gmm_val:+.4f} nats per point")
print(f"(the classifier costs {count_parameters(model)} parameters vs "
      f"{2 * K * 2 + K - 1} free values in the constant-weight mixture)")

save_model(model, OUT / "two_moons_model.json")
mass = export_density_grid(model, 200, ((-1.6, 2.6), (-1.1, 1.6)), OUT / "two_moons_density.pgm")
print(f"density grid written to {OUT / 'two_moons_density.pgm'} (mass {mass:.4f})")
