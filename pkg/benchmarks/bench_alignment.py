"""Benchmark the compiled edit-distance kernel against the pure-Python
fallback on synthetic transcript pairs.

Usage: python benchmarks/bench_alignment.py [n_pairs] [max_len]
"""

import random
import sys
import time

from asrcausal import _editops_py

try:
    from asrcausal import _editops
except ImportError:
    _editops = None


def make_pairs(n_pairs, max_len, vocab_size=200, seed=13):
    rng = random.Random(seed)
    vocab = [f"w{i}" for i in range(vocab_size)]
    pairs = []
    for _ in range(n_pairs):
        ref = [rng.choice(vocab) for _ in range(rng.randint(1, max_len))]
        hyp = [w if rng.random() > 0.3 else rng.choice(vocab) for w in ref]
        if rng.random() > 0.5:
            hyp = hyp[: max(1, len(hyp) - rng.randint(0, 3))]
        pairs.append((ref, hyp))
    return pairs


def bench(kernel, pairs):
    start = time.perf_counter()
    acc = 0
    for ref, hyp in pairs:
        s, d, i = kernel.align_counts(ref, hyp)
        acc += s + d + i
    return time.perf_counter() - start, acc


def main():
    n_pairs = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
    max_len = int(sys.argv[2]) if len(sys.argv) > 2 else 40
    pairs = make_pairs(n_pairs, max_len)

    py_time, py_acc = bench(_editops_py, pairs)
    print(f"python   kernel: {py_time:8.3f} s  ({n_pairs} pairs, "
          f"max len {max_len})")
    if _editops is None:
        print("compiled kernel: not built")
        return
    c_time, c_acc = bench(_editops, pairs)
    assert c_acc == py_acc, "kernels disagree"
    print(f"compiled kernel: {c_time:8.3f} s  (speedup {py_time / c_time:.1f}x)")


if __name__ == "__main__":
    main()
