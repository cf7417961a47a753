"""Run the reference experiment and print queue-length and regret summaries.

    python scripts/reproduce_fig2.py [--out results/fig2] [--parallel 1]

Time series land in the output directory as CSV (one file per policy and seed);
plotting is left to whatever tool reads them.
"""
import argparse
from pathlib import Path

from qmb import harness

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(ROOT / "configs" / "paper_fig2.cfg"))
    ap.add_argument("--out", default="results/fig2")
    ap.add_argument("--parallel", type=int, default=1)
    args = ap.parse_args()

    path = Path(args.config)
    cfg = harness.parse_config(path.read_text(), base_dir=str(path.parent))
    cfg.output_dir = args.out
    summary = harness.run_experiment(cfg, parallel=args.parallel)

    print(f"{'policy':<10} {'avg queue':>12} {'last decile':>12} {'final regret':>14} {'slope':>8}")
    for name, stats in summary.policies.items():
        print(
            f"{name:<10} {stats['avg_queue']['mean']:>12.3f} {stats['last_decile']['mean']:>12.3f} "
            f"{stats['final_regret']['mean']:>14.1f} {stats['regret_slope']['mean']:>8.3f}"
        )


if __name__ == "__main__":
    main()
