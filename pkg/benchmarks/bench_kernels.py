"""Compare the compiled kernels with the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]

Kernel timings run both backends in this process. The end-to-end row times
one toy-model training step in a subprocess per backend, since the backend
is fixed at import.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from dsnet.kernels import available_backends

STEP_SNIPPET = """
import timeit, numpy as np
from dsnet.kernels import BACKEND
from dsnet.losses import loss_terms
from dsnet.model import dsnet_preset, forward, init_params
from dsnet.tensor import Tensor, backward
g = dsnet_preset("toy"); init_params(g, 0, backbone_init="he")
x = Tensor(np.random.default_rng(0).random((1, 3, 64, 64)))
t = Tensor(np.random.default_rng(1).random((1, 1, 8, 8)))
def step():
    backward(loss_terms(forward(g, x), t)[0])
step()
print(BACKEND, min(timeit.repeat(step, number=1, repeat={repeat})))
"""


def kernel_cases(rng):
    x = rng.standard_normal((1, 16, 64, 64))
    for name, k, d, p in [("3x3 d1", 3, 1, 1), ("3x3 d3", 3, 3, 3)]:
        yield f"im2col {name} 16x64x64", lambda mod, k=k, d=d, p=p: mod.im2col(x, k, d, p)
        oh = 64 + 2 * p - d * (k - 1)
        cols = rng.standard_normal((1, 16 * k * k, oh * oh))
        yield f"col2im {name} 16x64x64", lambda mod, c=cols, k=k, d=d, p=p: mod.col2im(c, x.shape, k, d, p)
    pool_in = rng.standard_normal((1, 32, 64, 64))
    yield "maxpool fwd 32x64x64", lambda mod: mod.maxpool2x2_forward(pool_in)
    _, arg = available_backends()["python"].maxpool2x2_forward(pool_in)
    g = rng.standard_normal((1, 32, 32, 32))
    yield "maxpool bwd 32x64x64", lambda mod: mod.maxpool2x2_backward(g, arg)


def main(argv=None):
    parser = argparse.ArgumentParser(description="kernel backend benchmark")
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args(argv)
    backends = available_backends()
    names = list(backends)
    print(f"{'case':<28}" + "".join(f"{n + ' ms':>14}" for n in names))
    for label, fn in kernel_cases(np.random.default_rng(0)):
        row = [min(timeit.repeat(lambda: fn(backends[n]), number=1, repeat=args.repeat)) * 1e3 for n in names]
        print(f"{label:<28}" + "".join(f"{v:>14.3f}" for v in row))
    for n in names:
        env = dict(os.environ, DSNET_PURE_PYTHON="1" if n == "python" else "0")
        out = subprocess.run(
            [sys.executable, "-c", STEP_SNIPPET.format(repeat=max(3, args.repeat // 4))],
            env=env, capture_output=True, text=True, check=True,
        ).stdout.split()
        print(f"toy train step ({out[0]}): {float(out[1]) * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
