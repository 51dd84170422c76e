"""Write per-step memory CSVs for every runnable benchmark.

Usage: python3 scripts/trace_memory.py OUT_DIR [--steps N] [--particles N]

Each file is the output of ``mufc trace`` with zero-like inputs; the last
line printed per benchmark is the final |reachable| for particle 0.
"""

import argparse
import io
import sys
from pathlib import Path

from muf import CORPUS
from muf.cli import main

RUNNABLE = ["kalman", "kalman_hold_first", "gaussian_random_walk", "robot", "coin",
            "gaussian_gaussian", "outlier", "slam"]


def run(out_dir: Path, steps: int, particles: int) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in RUNNABLE:
        out, err = io.StringIO(), io.StringIO()
        code = main(["trace", str(CORPUS / f"{name}.muf"), "--steps", str(steps),
                     "--particles", str(particles)], out, err)
        if code == 2 or code == 3:
            sys.stderr.write(err.getvalue())
            return code
        (out_dir / f"{name}.csv").write_text(out.getvalue())
        last = out.getvalue().splitlines()[-1].split(",")
        print(f"{name}: reachable {last[1]} after {last[0]} steps")
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--particles", type=int, default=10)
    a = ap.parse_args()
    sys.exit(run(a.out_dir, a.steps, a.particles))
