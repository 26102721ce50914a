"""Time the compiled and pure-Python kernels on the reference circuits.

    python benchmarks/bench_kernels.py [--batch 16] [--repeat 5]

Prints one row per (model, op, backend) with the best wall time per call
and the speedup of the compiled kernel over the Python one.
"""
import argparse
import timeit

import numpy as np

from vqcbench import kernels
from vqcbench.models import ModelSpec

SPECS = {
    "VQC-28": ModelSpec("vqc", 4, 3, embedding="ang", layers=2),
    "VQC-40": ModelSpec("vqc", 13, 3, embedding="amp", layers=3),
    "VQC-63": ModelSpec("vqc", 30, 2, embedding="amp", layers=4),
    "VQC-41": ModelSpec("vqc", 4, 4, embedding="ang", layers=3),
}


def best_time(fn, repeat):
    number = 3
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = kernels.available_backends()
    if "native" not in backends:
        print("compiled extension not built; only the python backend is available")
    print(f"{'model':8} {'op':8} {'backend':8} {'ms/call':>10} {'speedup':>8}")
    for name, spec in SPECS.items():
        model = spec.build(0)
        t = model.template
        X = np.random.default_rng(0).uniform(0, 1, (args.batch, spec.n_inputs))
        data = t.data_angles(X)
        phi = model.angles()
        w = np.ones((args.batch, t.n_outputs))
        ops = {
            "forward": lambda b: kernels.expectations(model.program, phi, data, t.n_outputs, backend=b),
            "vjp": lambda b: kernels.expectations_vjp(model.program, phi, data, w, backend=b),
        }
        for op, call in ops.items():
            times = {b: best_time(lambda: call(b), args.repeat) for b in backends}
            for b in backends:
                speed = times["python"] / times[b]
                print(f"{name:8} {op:8} {b:8} {times[b] * 1e3:10.3f} {speed:8.1f}x")


if __name__ == "__main__":
    main()
