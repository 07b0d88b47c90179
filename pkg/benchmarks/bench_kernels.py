"""Compare the compiled and numpy kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Times the shapes the trainer actually uses (policy/value minibatches,
rollout steps, discriminator minibatches, GAE over one generator batch)
and one full training iteration per backend.
"""

import argparse
import importlib
import os
import subprocess
import sys
import timeit

import numpy as np

from hgail import _kernels_py
from hgail.nn import MlpParams

CASES = [
    ("policy minibatch", [9, 64, 64, 4], 128),
    ("rollout step", [9, 64, 64, 4], 16),
    ("disc minibatch", [13, 100, 100, 1], 64),
    ("disc scoring", [13, 100, 100, 1], 800),
]


def _compiled():
    try:
        return importlib.import_module("hgail._kernels")
    except ImportError:
        return None


def bench_case(backend, sizes, batch, repeat):
    rng = np.random.default_rng(0)
    params = MlpParams.init(sizes, rng)
    x = rng.normal(size=(batch, sizes[0]))
    out, acts = backend.mlp_forward(params.weights, params.biases, x)
    gout = rng.normal(size=out.shape)
    grad = params.zeros_like()
    fwd = min(timeit.repeat(lambda: backend.mlp_forward(params.weights, params.biases, x),
                            number=200, repeat=repeat)) / 200
    bwd = min(timeit.repeat(lambda: backend.mlp_backward(params.weights, x, acts, gout, grad.weights,
                                                         grad.biases), number=200, repeat=repeat)) / 200
    return fwd, bwd


def bench_gae(backend, repeat):
    rng = np.random.default_rng(0)
    r, v = rng.normal(size=(16, 50)), rng.normal(size=(16, 50))
    return min(timeit.repeat(lambda: backend.gae(r, v, 0.98, 0.95), number=200, repeat=repeat)) / 200


ITERATION_SNIPPET = """
import time
from hgail.trainer import TrainConfig, pretrain, train_iteration
from hgail import kernels
state = pretrain(TrainConfig(seed=0, pretrain_disc_steps=10, pretrain_gen_steps=10))
train_iteration(state)
t = time.perf_counter()
for _ in range(3):
    train_iteration(state)
print(kernels.BACKEND, (time.perf_counter() - t) / 3)
"""


def bench_iteration(pure: bool) -> str:
    env = dict(os.environ)
    if pure:
        env["HGAIL_PURE_PYTHON"] = "1"
    else:
        env.pop("HGAIL_PURE_PYTHON", None)
    out = subprocess.run([sys.executable, "-c", ITERATION_SNIPPET], env=env, capture_output=True,
                         text=True, check=True)
    return out.stdout.strip()


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--skip-iteration", action="store_true")
    args = parser.parse_args(argv)

    compiled = _compiled()
    backends = [_kernels_py] + ([compiled] if compiled else [])
    if compiled is None:
        print("compiled backend not built; timing numpy only")
    header = f"{'case':<18}{'batch':>6}" + "".join(f"{b.BACKEND + ' fwd/bwd (us)':>26}" for b in backends)
    print(header)
    for name, sizes, batch in CASES:
        cells = []
        for b in backends:
            fwd, bwd = bench_case(b, sizes, batch, args.repeat)
            cells.append(f"{fwd * 1e6:>12.1f} /{bwd * 1e6:>10.1f}")
        print(f"{name:<18}{batch:>6}" + "".join(f"{c:>26}" for c in cells))
    print(f"{'gae':<18}{'16x50':>6}" + "".join(f"{bench_gae(b, args.repeat) * 1e6:>26.1f}" for b in backends))
    if not args.skip_iteration:
        print("seconds per training iteration:")
        print("  " + bench_iteration(pure=True))
        if compiled is not None:
            print("  " + bench_iteration(pure=False))


if __name__ == "__main__":
    main()
