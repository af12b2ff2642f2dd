"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``.
"""
import argparse
import timeit

import numpy as np

from sarreflect import kernels


def cases(rng):
    inc = rng.uniform(0, np.pi / 2, 200)
    az = rng.uniform(0, np.pi / 2, 200)
    tau = rng.uniform(1e-6, 2e-6, 256)
    amp = rng.uniform(0.5, 1.0, 256)
    data = rng.normal(size=(256, 512)) + 1j * rng.normal(size=(256, 512))
    pos = rng.uniform(0, 511, (256, 128))
    table = rng.normal(size=(4, 8, 8, 33, 33)) + 1j * rng.normal(size=(4, 8, 8, 33, 33))
    n = 400
    splat = (table, rng.integers(0, 4, n), rng.integers(-10, 120, n), rng.integers(-10, 120, n),
             rng.integers(0, 8, n), rng.integers(0, 8, n),
             rng.normal(size=n) + 1j * rng.normal(size=n), rng.normal(size=n),
             rng.uniform(0, 32, n))
    return {
        "trihedral_far_field (200 angles)":
            lambda b: kernels.trihedral_far_field(inc, az, 0.3, 201.0, backend=b),
        "chirp_echo_accumulate (256 x 1024)":
            lambda b: kernels.chirp_echo_accumulate(np.zeros((256, 1024), complex), 0.9e-6, 5e8,
                                                    tau, amp, 9.6e9, 1e13, 2e-7, backend=b),
        "sinc_interp (256 x 128, 8 taps)":
            lambda b: kernels.sinc_interp(data, pos, backend=b),
        "splat_patches (400 patches 33x33)":
            lambda b: kernels.splat_patches(np.zeros((128, 128), complex), *splat, backend=b),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["python"] + (["compiled"] if kernels.BACKEND == "compiled" else [])
    print(f"{'kernel':38s}" + "".join(f"{b:>12s}" for b in backends) + "     speedup")
    for name, fn in cases(np.random.default_rng(0)).items():
        times = [min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat))
                 for b in backends]
        speed = f"{times[0] / times[1]:10.1f}x" if len(times) == 2 else "         -"
        print(f"{name:38s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times) + speed)


if __name__ == "__main__":
    main()
