"""Time the compiled and numpy kernel backends on the same inputs.

Usage: ``python benchmarks/bench_kernels.py [--n 6] [--shots 20000] [--repeat 5]``.
Prints one line per kernel with the best-of-``repeat`` time of each backend
and the speedup, after checking that both backends agree.
"""
import argparse
import timeit

import numpy as np

from hamlearn import enumerate_k_body
from hamlearn._backend import available_backends


def _inputs(n, shots, rng):
    basis = enumerate_k_body(n, 2)
    xs, zs = basis.x_masks, basis.z_masks
    psi = rng.normal(size=2 ** n) + 1j * rng.normal(size=2 ** n)
    psi /= np.linalg.norm(psi)
    rho = np.outer(psi, psi.conj())
    settings = rng.integers(1, 4, size=(shots, n), dtype=np.int8)
    outcomes = rng.choice(np.array([-1, 1], dtype=np.int8), size=(shots, n))
    targets = basis.codes.astype(np.int8)
    return {
        "pauli_product_table": (xs, zs),
        "pauli_expectations": (rho, xs, zs),
        "shadow_accumulate": (settings, outcomes, targets),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, atol=1e-12)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=6, help="qubits (two-body basis)")
    p.add_argument("--shots", type=int, default=20000)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled backend not built; timing the numpy backend only")
    inputs = _inputs(args.n, args.shots, np.random.default_rng(0))
    print(f"n={args.n}, shots={args.shots}, best of {args.repeat}")
    for name, call_args in inputs.items():
        times, results = {}, {}
        for label, mod in backends.items():
            fn = getattr(mod, name)
            results[label] = fn(*call_args)
            times[label] = min(timeit.repeat(lambda: fn(*call_args), number=1,
                                             repeat=args.repeat))
        line = "  ".join(f"{k} {v * 1e3:9.3f} ms" for k, v in times.items())
        if len(times) == 2:
            assert _same(results["python"], results["cython"]), f"{name}: backends disagree"
            line += f"  speedup {times['python'] / times['cython']:6.1f}x"
        print(f"{name:22s} {line}")


if __name__ == "__main__":
    main()
