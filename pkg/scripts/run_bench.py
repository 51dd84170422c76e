"""Print the benchmark table and the analysis runtime.

Usage: python3 scripts/run_bench.py [--corpus DIR] [--up-budget N]
"""

import sys
import time

from muf.cli import main

if __name__ == "__main__":
    t = time.perf_counter()
    code = main(["bench", *sys.argv[1:]])
    print(f"analysed in {time.perf_counter() - t:.2f}s", file=sys.stderr)
    sys.exit(code)
