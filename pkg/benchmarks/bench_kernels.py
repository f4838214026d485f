"""Time the closed-loop kernel under numba and under the pure-numpy fallback.

Each backend runs in its own interpreter because the backend is fixed at
import time by ``GISMC_DISABLE_NUMBA``.

    python benchmarks/bench_kernels.py [--duration 0.05] [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from gismc._accel import backend_name
from gismc.config import default_config
from gismc.sim import run_iteration

duration, repeat = float(sys.argv[1]), int(sys.argv[2])
cfg = default_config().with_overrides(**{"sim.duration": duration})
args = (cfg.plant, cfg.sim, cfg.disturbance, cfg.controller, None, cfg.task)
t0 = time.perf_counter()
tr = run_iteration(*args)                               # includes JIT compile (or cache load)
first = time.perf_counter() - t0
best = float("inf")
for _ in range(repeat):
    t0 = time.perf_counter()
    tr = run_iteration(*args)
    best = min(best, time.perf_counter() - t0)
print(json.dumps({"backend": backend_name(), "ticks": len(tr), "first": first, "best": best,
                  "checksum": float(np.sum(tr.z[-1]))}))
"""


def run_backend(disable: bool, duration: float, repeat: int) -> dict:
    env = dict(os.environ, GISMC_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", WORKER, str(duration), str(repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=float, default=0.05, help="simulated seconds per run")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    rows = [run_backend(False, args.duration, args.repeat),
            run_backend(True, args.duration, args.repeat)]
    print(f"{'backend':8s} {'ticks':>7s} {'first [s]':>10s} {'best [s]':>10s} {'us/tick':>9s}")
    for r in rows:
        print(f"{r['backend']:8s} {r['ticks']:7d} {r['first']:10.3f} {r['best']:10.4f} "
              f"{1e6 * r['best'] / r['ticks']:9.2f}")
    nb, py = rows
    print(f"speed-up {py['best'] / nb['best']:.1f}x; end states agree: "
          f"{nb['checksum'] == py['checksum']}")


if __name__ == "__main__":
    main()
