#!/usr/bin/env python3
"""Dry run of the N=2000 ten-seed trajectory battery (regime-check data).

Writes one CSV per seed to the output directory.  Run with
OPENBLAS_NUM_THREADS=1 and two concurrent workers for best throughput on a
two-core box.
"""

import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")


def one_seed(args):
    seed, outdir = args
    from purisim.manybody import run_trajectory

    t0 = time.time()
    rec = run_trajectory(
        2000,
        6000,
        "measurement",
        seed=seed,
        record_entropy=False,
        stop_purity=0.93,
    )
    path = Path(outdir) / f"seed{seed:02d}.csv"
    path.write_text(rec.to_csv())
    return seed, len(rec.purity) - 1, rec.purity[-1], time.time() - t0


def main():
    outdir = sys.argv[1] if len(sys.argv) > 1 else "/tmp/c5_dryrun"
    Path(outdir).mkdir(parents=True, exist_ok=True)
    jobs = [(seed, outdir) for seed in range(10)]
    with ProcessPoolExecutor(max_workers=2) as pool:
        for seed, steps, fin, dt in pool.map(one_seed, jobs):
            print(f"seed {seed}: {steps} steps, final purity {fin:.4f}, {dt/60:.1f} min", flush=True)


if __name__ == "__main__":
    main()
