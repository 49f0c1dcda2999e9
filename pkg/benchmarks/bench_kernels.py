"""Time the compiled and numpy kernel backends on mix-A.

Usage::

    python3 benchmarks/bench_kernels.py [--traj 2000] [--steps 512] [--repeat 3]

Prints one line per kernel with the best wall time of each backend, the
per-step cost and the speedup. The compiled kernels are warmed up first so
compilation is not timed.
"""

import argparse
import time

import numpy as np

from randmaps.ensemble import mix_a
from randmaps.kernels import (birkhoff_sums, first_passage_times, holder_pairs, occupation_counts,
                              orbit_points, orbit_values)
from randmaps.rng import Streams


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(ntraj, nsteps):
    law = mix_a().kernel_law
    st = Streams(1)
    x0 = st.uniforms(0, ntraj)
    keys = st.keys(ntraj, offset=1)
    cos = np.array([[0.0, 1.0, 0.5]])
    sin = np.zeros_like(cos)
    v = st.uniforms(2, 4096)
    fp_keys = st.keys(50 * ntraj, offset=ntraj + 1)
    return {
        "orbit_points": (lambda b: orbit_points(law, x0, keys, nsteps, backend=b), ntraj * nsteps),
        "orbit_values": (lambda b: orbit_values(law, x0, keys, nsteps // 8, cos, sin, backend=b),
                         ntraj * (nsteps // 8)),
        "birkhoff_sums": (lambda b: birkhoff_sums(law, x0, keys, [nsteps], cos, sin, backend=b),
                          ntraj * nsteps),
        "occupation_counts": (lambda b: occupation_counts(law, x0, keys, nsteps, 64, backend=b),
                              ntraj * nsteps),
        "first_passage_times": (lambda b: first_passage_times([0.25, 0.75], [0.0, 2.0], [0.5, 0.5], 8.0,
                                                              4.0, 60, fp_keys, backend=b),
                                50 * ntraj * 60),
        "holder_pairs": (lambda b: holder_pairs(v, 0.5, np.arange(1, 2049), backend=b), 4096 * 2048),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--traj", type=int, default=2000)
    p.add_argument("--steps", type=int, default=512)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    print(f"{'kernel':22s} {'numba s':>9s} {'numpy s':>9s} {'ns/step nb':>11s} {'speedup':>8s}")
    for name, (fn, work) in cases(args.traj, args.steps).items():
        fn("numba")  # compile / load cache
        t_nb = _best(lambda: fn("numba"), args.repeat)
        t_np = _best(lambda: fn("numpy"), args.repeat)
        print(f"{name:22s} {t_nb:9.4f} {t_np:9.4f} {1e9 * t_nb / work:11.1f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
