"""Compare the compiled and pure-Python alignment kernels.

    python3 benchmarks/bench_align.py [--pairs 300] [--length 60]
"""
import argparse
import random
import timeit

from weakasr._kernel import compiled_align_codes, python_align_codes


def make_pairs(n, length, seed=0):
    rng = random.Random(seed)
    pairs = []
    for _ in range(n):
        a = [rng.randrange(40) for _ in range(rng.randint(length // 2, length))]
        b = [x if rng.random() > 0.15 else rng.randrange(40) for x in a]
        pairs.append((a, b))
    return pairs


def run(kernel, pairs):
    for a, b in pairs:
        kernel(a, b)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--pairs", type=int, default=300)
    ap.add_argument("--length", type=int, default=60)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    pairs = make_pairs(args.pairs, args.length)

    kernels = {"python": python_align_codes}
    if compiled_align_codes is None:
        print("compiled kernel not available; reinstall without WEAKASR_NO_EXT")
    else:
        kernels["cython"] = compiled_align_codes
        mismatches = sum(compiled_align_codes(a, b) != python_align_codes(a, b) for a, b in pairs)
        print(f"output mismatches: {mismatches}")

    times = {}
    for name, kernel in kernels.items():
        times[name] = min(timeit.repeat(lambda: run(kernel, pairs), number=1, repeat=args.repeat))
        print(f"{name:>7}: {times[name] * 1e3:9.2f} ms for {len(pairs)} pairs")
    if "cython" in times:
        print(f"speedup: {times['python'] / times['cython']:.1f}x")


if __name__ == "__main__":
    main()
