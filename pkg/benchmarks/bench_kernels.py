"""Compare the numba kernels against the pure-numpy fallback.

Runs the same workloads twice in subprocesses -- once normally and once with
BASISRISK_NO_NUMBA=1 -- and prints a timing table.  Usage:

    python benchmarks/bench_kernels.py
"""

import json
import os
import subprocess
import sys

_WORKER = r"""
import json
import time

import numpy as np

import basisrisk
from basisrisk._kernels import USE_NUMBA, expectile_sorted, xtrack_min_distance
from basisrisk.expectile import EmpiricalSample, Level, expectile

rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(0)))


def bench(fn, repeats=5):
    fn()  # warm-up (includes JIT compilation when numba is active)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


results = {"numba": bool(USE_NUMBA)}

# --- expectile solve on a large sorted sample, swept over gamma ------------
sample = EmpiricalSample(rng.gamma(2.0, 3.0, size=1_000_000))
gammas = np.linspace(0.01, 0.99, 199)


def run_expectiles():
    for g in gammas:
        expectile(sample, Level(gamma=float(g)))


results["expectile_1e6x199"] = bench(run_expectiles)

# --- cross-track distance: one site against many long polylines ------------
lat0, lon0 = np.deg2rad(18.2), np.deg2rad(-66.5)
px = np.cos(lat0) * np.cos(lon0)
py = np.cos(lat0) * np.sin(lon0)
pz = np.sin(lat0)
tracks = []
for _ in range(2000):
    lats = np.deg2rad(18.0 + np.cumsum(rng.normal(0, 0.05, 200)))
    lons = np.deg2rad(np.linspace(-60.0, -70.0, 200) + rng.normal(0, 0.1, 200))
    tracks.append((np.ascontiguousarray(np.cos(lats) * np.cos(lons)),
                   np.ascontiguousarray(np.cos(lats) * np.sin(lons)),
                   np.ascontiguousarray(np.sin(lats))))


def run_distances():
    for vx, vy, vz in tracks:
        xtrack_min_distance(px, py, pz, vx, vy, vz)


results["xtrack_2000x200"] = bench(run_distances)

print(json.dumps(results))
"""


def run(no_numba: bool) -> dict:
    env = dict(os.environ)
    if no_numba:
        env["BASISRISK_NO_NUMBA"] = "1"
    else:
        env.pop("BASISRISK_NO_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", _WORKER], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    numba_res = run(no_numba=False)
    numpy_res = run(no_numba=True)
    if not numba_res.pop("numba"):
        print("warning: numba unavailable; both columns use the numpy fallback")
    numpy_res.pop("numba")
    print(f"{'workload':<24}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for key in numba_res:
        a, b = numba_res[key], numpy_res[key]
        print(f"{key:<24}{a:>12.4f}{b:>12.4f}{b / a:>10.2f}x")


if __name__ == "__main__":
    main()
