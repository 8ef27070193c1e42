"""Run experiment configs and persist summaries (JSON plus per-replication CSV).

    python3 scripts/run_experiments.py configs/thm1ii.json configs/thm1iii.json --out results/
"""
import argparse
import sys
from pathlib import Path

from levy_pv import mc_harness as mh


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="+", type=Path)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    status = 0
    for path in args.configs:
        summary = mh.run_experiment(mh.ExperimentConfig.from_json(path), workers=args.workers)
        mh.persist(summary, args.out / path.name)
        for c in summary.criteria:
            print(f"{path.stem}: {'PASS' if c.passed else 'FAIL'} {c.name}={c.value:.5g} "
                  f"({c.tolerance}; ref {c.reference}) [{summary.runtime:.0f}s]")
        status |= not summary.passed
    return int(status)


if __name__ == "__main__":
    sys.exit(main())
