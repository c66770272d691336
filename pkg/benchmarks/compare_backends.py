#!/usr/bin/env python3
"""Compare the compiled and pure-numpy simulation backends.

Times the direct and reduced legs per model on both backends and runs a
z-test between their estimates (different seeds, so the comparison is
statistical, not bitwise).  The compiled backend is typically one to two
orders of magnitude faster; the numpy path exists so everything still runs
where numba is unavailable or disabled via STOCHSYM_BACKEND=numpy.
"""

import argparse
import math
import time

from stochsym import kernels
from stochsym.catalog import get_model, model_ids, routes_for
from stochsym.mc import estimate_direct, estimate_reconstructed


def time_leg(fn, *args, **kwargs):
    t0 = time.perf_counter()
    leg = fn(*args, **kwargs)
    return leg, time.perf_counter() - t0


def run(models, paths, dt, seed):
    backends = ["numpy"]
    if kernels.HAVE_NUMBA:
        backends.insert(0, "numba")
    else:
        print("numba not importable, timing the numpy backend only")

    t = [1.0]
    steps = int(round(t[-1] / dt))
    header = f"{'model':<16}{'leg':<9}" + "".join(f"{b + ' (s)':>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}{'|z|':>8}"
    print(header)
    print("-" * len(header))

    for model in models:
        for route in routes_for(model):
            entry = get_model(model, route=route)
            label = f"{model}/{route}"
            for leg_name, fn in (("direct", estimate_direct),
                                 ("reduced", estimate_reconstructed)):
                # warm each backend once so compilation is not timed
                for b in backends:
                    fn(entry, t, 512, dt, seed, backend=b)
                timings = {}
                values = {}
                for i, b in enumerate(backends):
                    leg, wall = time_leg(fn, entry, t, paths, dt, seed + i,
                                         backend=b)
                    timings[b] = wall
                    est = leg.at(t[-1])
                    values[b] = (est.value, est.stderr)
                line = f"{label:<16}{leg_name:<9}"
                line += "".join(f"{timings[b]:>12.3f}" for b in backends)
                if len(backends) == 2:
                    ratio = timings["numpy"] / timings["numba"]
                    diff = values["numba"][0] - values["numpy"][0]
                    spread = math.hypot(values["numba"][1], values["numpy"][1])
                    z = abs(diff) / spread if spread > 0 else 0.0
                    flag = "" if z <= 4.0 else "  <-- disagree"
                    line += f"{ratio:>9.1f}x{z:>8.2f}{flag}"
                print(line)
            rate = paths * steps / timings[backends[0]] / 1e6
            print(f"{'':<16}{'':<9}  direct-grid throughput "
                  f"{rate:.0f} Msteps/s on {backends[0]}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--models", default=",".join(model_ids()),
                        help="comma separated model ids")
    parser.add_argument("--paths", type=int, default=20000)
    parser.add_argument("--dt", type=float, default=1e-3)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()
    models = [tok for tok in args.models.split(",") if tok]
    run(models, args.paths, args.dt, args.seed)


if __name__ == "__main__":
    main()
