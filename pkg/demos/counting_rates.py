"""Photon counting rates near a small warm scatterer.

Runs the two-voxel demo configuration end to end (drives, fields, rates)
and prints the radiation and matter parts of the counting rate.

Run:  python3 demos/counting_rates.py      (a few minutes)
"""
import os

import numpy as np

from qvie.cli import run
from qvie.config import load

here = os.path.dirname(os.path.abspath(__file__))
cfg = load(os.path.join(here, "configs", "two_voxel.json"))
man = run(cfg, workers=os.cpu_count() or 1)
print(f"status {man['status']}, nu nodes {man['nu_grid']['nodes']}, "
      f"refinement drift {man['nu_grid']['refinement_drift']:.1e}")
for label, d in man["drives"].items():
    print(f"{label}: p(0) error {d['p0_error']:.1e}, non-causal {d['noncausal_fraction']:.1e}")

rates = np.loadtxt(os.path.join(cfg.output_dir, "rates.csv"), delimiter=",", skiprows=1)
print("\n    t      x      y      z      w_rad        w_mat")
for row in rates:
    print("{:5.1f} {:6.2f} {:6.2f} {:6.2f}  {:.4e}  {:.4e}".format(*row[:6]))
print(f"\noutputs in {cfg.output_dir}")
