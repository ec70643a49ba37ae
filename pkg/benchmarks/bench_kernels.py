"""Benchmark the trajectory integrator: numba backend vs numpy fallback.

Run:  python benchmarks/bench_kernels.py
The backend is selected per process, so the numpy timings come from a
subprocess with SPINMIX_BACKEND=numpy.
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import time

import numpy as np

WORKLOAD = """
import json, time
import numpy as np
from spinmix import PulseSpec, SequenceSpec, LossConfig, poisson_sectors
from spinmix.noise import lossy_output_distribution
import spinmix

probe = poisson_sectors(120.0)
p1 = PulseSpec(0.03)
seq = SequenceSpec(p1, p1.inverse(), theta=0.3)
loss = LossConfig(gamma_over_chi=0.05, n_traj=%(n_traj)d, seed=7)

# warmup (includes jit compilation on the numba backend)
lossy_output_distribution(probe, seq, LossConfig(gamma_over_chi=0.05, n_traj=8, seed=7), threads=1)

times = []
for _ in range(%(rounds)d):
    t0 = time.perf_counter()
    d = lossy_output_distribution(probe, seq, loss, threads=1)
    times.append(time.perf_counter() - t0)
print(json.dumps({"backend": spinmix.KERNEL_BACKEND, "times": times,
                  "checksum": float(d.p[:5].sum())}))
"""


def run_backend(backend: str, n_traj: int, rounds: int) -> dict:
    env = dict(os.environ, SPINMIX_BACKEND=backend)
    code = WORKLOAD % {"n_traj": n_traj, "rounds": rounds}
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    n_traj = int(sys.argv[1]) if len(sys.argv) > 1 else 200
    rounds = int(sys.argv[2]) if len(sys.argv) > 2 else 3
    print(f"workload: {n_traj} lossy trajectories, nbar=120, gamma/chi=0.05, "
          f"{rounds} timed rounds, single thread\n")
    results = {}
    for backend in ("numba", "numpy"):
        r = run_backend(backend, n_traj, rounds)
        assert r["backend"] == backend, r
        t = np.array(r["times"])
        results[backend] = t
        print(f"{backend:>6}: {t.mean():8.3f} +- {t.std():.3f} s   "
              f"(checksum {r['checksum']:.12f})")
    speedup = results["numpy"].mean() / results["numba"].mean()
    print(f"\nspeedup: {speedup:.1f}x (numba vs numpy)")


if __name__ == "__main__":
    main()
