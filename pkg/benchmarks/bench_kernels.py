"""Compare the compiled and pure-Python kernels on representative workloads.

Usage: python benchmarks/bench_kernels.py [--repeat 3] [--json out.json]

Each workload runs on both backends; the script checks that the outputs
agree before reporting timings.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from cclinf import ccgeometry, kernels, psolve
from cclinf.calculus import get_map
from cclinf.frames import euclidean, heisenberg
from cclinf.grid import GridField


def _best(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_lattice(backend, repeat, resolution):
    frame = heisenberg()
    box = ([-0.3, -0.3, -0.02], [0.3, 0.3, 0.1])
    y = [0, 0, 1 / (4 * np.pi)]
    t, r = _best(lambda: ccgeometry.cc_distance(frame, box, [0, 0, 0], y, resolution, backend=backend), repeat)
    return t, (r.value, r.explored)


def bench_energy(backend, repeat, frame, field, p=8.0):
    prob = psolve._Problem(field, frame, backend)
    u = field.values.reshape(-1, field.N)
    t, out = _best(lambda: prob.scaled(u, p), repeat)
    return t, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--resolution", type=float, default=0.02)
    ap.add_argument("--json", dest="json_path", default=None)
    args = ap.parse_args()

    if "compiled" not in kernels.available_backends():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")

    rng = np.random.default_rng(0)
    aron = get_map("aronsson")
    fields = {
        "energy_2d_65": (euclidean(2), GridField.sample(lambda x: aron(x), [0.5, 0.5], [1.5, 1.5], (65, 65))),
        "energy_2d_129": (euclidean(2), GridField.sample(lambda x: aron(x), [0.5, 0.5], [1.5, 1.5], (129, 129))),
        "energy_heis_17": (heisenberg(), GridField.sample(lambda x: rng.normal(size=x.shape[:-1]),
                                                          [-1, -1, -1], [1, 1, 1], (17, 17, 17))),
    }
    rows = []
    tp, op = bench_lattice("python", args.repeat, args.resolution)
    tc, oc = bench_lattice("compiled", args.repeat, args.resolution)
    rows.append({"workload": f"lattice_bfs_heis_res{args.resolution:g}", "python_s": tp, "compiled_s": tc,
                 "agree": op == oc})
    for name, (frame, field) in fields.items():
        tp, op = bench_energy("python", args.repeat, frame, field)
        tc, oc = bench_energy("compiled", args.repeat, frame, field)
        agree = (np.isclose(op[0], oc[0], rtol=1e-12) and np.isclose(op[1], oc[1], rtol=1e-10)
                 and np.allclose(op[2], oc[2], rtol=1e-9, atol=1e-12 * np.abs(op[2]).max()))
        rows.append({"workload": name, "python_s": tp, "compiled_s": tc, "agree": bool(agree)})

    print(f"{'workload':28s} {'python [s]':>11s} {'compiled [s]':>13s} {'speedup':>8s}  agree")
    for r in rows:
        r["speedup"] = r["python_s"] / r["compiled_s"]
        print(f"{r['workload']:28s} {r['python_s']:11.4f} {r['compiled_s']:13.4f} {r['speedup']:8.1f}  {r['agree']}")
    if args.json_path:
        with open(args.json_path, "w") as fh:
            json.dump(rows, fh, indent=2)
    if not all(r["agree"] for r in rows):
        raise SystemExit("backends disagree")


if __name__ == "__main__":
    main()
