"""Write train.csv and clean.csv for the command-line walkthrough.

The two files are independent draws from the three-mode design, so the
second one plays the part of an unperturbed test set.
"""
import sys
from pathlib import Path

from robustlogit.fileio import write_dataset
from robustlogit.synthetic import simulate_dataset, three_mode_design

out = Path(sys.argv[1] if len(sys.argv) > 1 else ".")
out.mkdir(parents=True, exist_ok=True)

d = three_mode_design(n_obs=1000, seed=1)
write_dataset(out / "train.csv", simulate_dataset(d.spec, d.beta, d.config, replication=0), d.spec)
write_dataset(out / "clean.csv", simulate_dataset(d.spec, d.beta, d.config, replication=1), d.spec)
print("wrote", out / "train.csv", "and", out / "clean.csv")
