"""Empirical coverage of the confidence radius under queue-blind random scheduling.

    python scripts/coverage_check.py --seeds 50 --T 2000 --c1 1.0
"""
import argparse

import numpy as np

from qmb.model import InstanceConfig, generate_instance
from qmb.simulator import estimation_run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--instance-seed", type=int, default=301)
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--T", type=int, default=2000)
    ap.add_argument("--c1", type=float, default=1.0)
    ap.add_argument("--kappa-mode", choices=["bound", "instance"], default="bound")
    args = ap.parse_args()

    inst = generate_instance(InstanceConfig(seed=args.instance_seed, kappa_mode=args.kappa_mode))
    covered, total, final = 0, 0, []
    for seed in range(args.seeds):
        tr = estimation_run(inst, args.T, seed, c1=args.c1)
        covered += int(np.sum(tr.vnorm_errors <= tr.betas[:, None]))
        total += tr.vnorm_errors.size
        final.append(tr.errors[-1].mean())
    print(f"kappa={inst.kappa:.5f} coverage={covered / total:.4f} "
          f"median final error={np.median(final):.4f} beta(T)={tr.betas[-1]:.2f}")


if __name__ == "__main__":
    main()
