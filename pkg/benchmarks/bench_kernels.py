"""Compare the compiled kernels with the numpy reference.

Shapes match one training step of the default network (batch 64, context 20,
d = 128, 8 heads, ffn 512). Run ``python benchmarks/bench_kernels.py``.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from watermaze import _kernels_py

try:
    from watermaze import _kernels_c
except ImportError:
    _kernels_c = None


def cases(batch, seq, rng):
    s = rng.normal(size=(batch, 8, seq, seq)).astype(np.float32)
    x = rng.normal(size=(batch, seq, 128)).astype(np.float32)
    h = rng.normal(size=(batch, seq, 512)).astype(np.float32)
    return {
        "softmax_forward": (lambda k: k.softmax_forward(s, True)),
        "softmax_backward": (lambda k, y=_kernels_py.softmax_forward(s, True): k.softmax_backward(y, s)),
        "layer_norm_forward": (lambda k: k.layer_norm_forward(x, 1e-5)),
        "layer_norm_backward": (lambda k, f=_kernels_py.layer_norm_forward(x, 1e-5): k.layer_norm_backward(*f, x)),
        "gelu_forward": (lambda k: k.gelu_forward(h)),
        "gelu_backward": (lambda k, t=_kernels_py.gelu_forward(h)[1]: k.gelu_backward(h, t, h)),
    }


def best_ms(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number * 1e3


def run(batch=64, seq=20, repeat=5, number=20):
    rng = np.random.default_rng(0)
    rows = []
    for name, call in cases(batch, seq, rng).items():
        py = best_ms(lambda: call(_kernels_py), repeat, number)
        c = best_ms(lambda: call(_kernels_c), repeat, number) if _kernels_c else float("nan")
        rows.append((name, py, c))
    return rows


STEP_SETUP = """
import timeit, numpy as np
from watermaze import kernels
from watermaze.dqn import Episode, TrainConfig, Trainer
from watermaze.model import ModelConfig
cfg = TrainConfig(seq_len={seq}, batch_size={batch}, warmup_transitions=1)
tr = Trainer(ModelConfig(max_seq_len={seq}), cfg)
rng = np.random.default_rng(0)
tr.buffer.push(Episode.from_lists(rng.random((201, 24)), rng.integers(0, 4, 200), rng.normal(size=200), np.zeros(200, bool)))
"""
_STEP_TIMING = """
tr.train_step()
print(kernels.BACKEND, min(timeit.repeat(tr.train_step, repeat=3, number=5)) / 5 * 1e3)
"""


def train_step_ms(backend, batch, seq):
    """Full train step (forward, backward, Adam) in a fresh process per backend."""
    env = dict(os.environ, WATERMAZE_KERNELS=backend)
    out = subprocess.run([sys.executable, "-c", STEP_SETUP.format(batch=batch, seq=seq) + _STEP_TIMING], env=env,
                         capture_output=True, text=True, check=True).stdout.split()
    return out[0], float(out[1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--seq", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=20)
    ap.add_argument("--train-step", action="store_true", help="also time a full train step per backend")
    args = ap.parse_args(argv)
    if _kernels_c is None:
        print("compiled kernels not built; showing numpy timings only")
    print(f"{'kernel':<22}{'numpy ms':>10}{'compiled ms':>13}{'speedup':>9}")
    for name, py, c in run(args.batch, args.seq, args.repeat, args.number):
        print(f"{name:<22}{py:>10.3f}{c:>13.3f}{py / c:>8.1f}x")
    if args.train_step:
        _, py = train_step_ms("py", args.batch, args.seq)
        used, c = train_step_ms("c", args.batch, args.seq)
        print(f"{'train_step':<22}{py:>10.1f}{c:>13.1f}{py / c:>8.1f}x" + ("" if used == "c" else " (no ext)"))


if __name__ == "__main__":
    main()
