#!/usr/bin/env python3
"""Time one training epoch and one evaluation pass on each backend.

Usage:
    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --sizes 10000 40000 --rank 20 --repeats 7
    python3 benchmarks/bench_kernels.py --json results.json

Set PNLF_DISABLE_JIT=1 to see what the scalar loops cost without numba.
"""
import argparse
import json
import time
import warnings

import numpy as np

from pnlf import ControllerState, Hyperparams, init_factors, synth_low_rank
from pnlf import rng
from pnlf._accel import BACKENDS, JIT_ENABLED
from pnlf.kernels import EPOCH_KERNELS, RESIDUAL_KERNELS
from pnlf.pid import kernel_params


def make_tensor(dims, n, seed):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tensor, _ = synth_low_rank(dims, 4, seed=seed, density=n / np.prod(dims))
    return tensor


def time_backend(backend, tensor, rank, repeats):
    hyper = Hyperparams(rank=rank)
    gains, flags = kernel_params(hyper)
    factors = init_factors(tensor.dims, rank, 0)
    state = ControllerState.zeros_like(factors)
    fail = np.zeros(3, dtype=np.int64)
    data = tuple(np.ascontiguousarray(a) for a in (tensor.i, tensor.j, tensor.k, tensor.values))
    epoch, resid = EPOCH_KERNELS[backend], RESIDUAL_KERNELS[backend]

    # first call compiles under numba; keep it out of the timings
    epoch(*factors.matrices(), *state.arrays(), *data, np.arange(min(8, tensor.nnz)), gains, flags, fail)
    resid(*factors.matrices(), *data)

    epoch_ms, eval_ms = [], []
    for e in range(repeats):
        order = rng.epoch_order(0, e, tensor.nnz)
        t0 = time.perf_counter()
        status = epoch(*factors.matrices(), *state.arrays(), *data, order, gains, flags, fail)
        t1 = time.perf_counter()
        resid(*factors.matrices(), *data)
        t2 = time.perf_counter()
        if status >= 0:
            raise RuntimeError(f"{backend}: non-finite update at position {status}")
        epoch_ms.append((t1 - t0) * 1e3)
        eval_ms.append((t2 - t1) * 1e3)
    return float(np.median(epoch_ms)), float(np.median(eval_ms))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dims", type=int, nargs=3, default=[100, 50, 40])
    parser.add_argument("--sizes", type=int, nargs="+", default=[10_000, 20_000, 40_000])
    parser.add_argument("--rank", type=int, default=8)
    parser.add_argument("--repeats", type=int, default=5, help="epochs timed per cell (median reported)")
    parser.add_argument("--backends", nargs="+", choices=BACKENDS, default=list(BACKENDS))
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--json", help="also write the rows to this file")
    args = parser.parse_args()

    print(f"dims={tuple(args.dims)} rank={args.rank} jit={'on' if JIT_ENABLED else 'off'}")
    print(f"{'nnz':>8} {'backend':>8} {'epoch ms':>10} {'eval ms':>9} {'us/entry':>9}")
    rows = []
    for n in args.sizes:
        tensor = make_tensor(tuple(args.dims), n, args.seed)
        for backend in args.backends:
            ep, ev = time_backend(backend, tensor, args.rank, args.repeats)
            rows.append({"nnz": tensor.nnz, "backend": backend, "rank": args.rank, "epoch_ms": ep, "eval_ms": ev,
                         "jit": JIT_ENABLED})
            print(f"{tensor.nnz:>8} {backend:>8} {ep:>10.2f} {ev:>9.2f} {1e3 * ep / tensor.nnz:>9.3f}")
        if len(args.backends) == 2:
            a, b = rows[-2], rows[-1]
            print(f"{'':>8} {'speedup':>8} {b['epoch_ms'] / a['epoch_ms']:>9.1f}x {b['eval_ms'] / a['eval_ms']:>8.1f}x")

    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
