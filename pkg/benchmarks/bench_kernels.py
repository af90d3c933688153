"""Compare the compiled row kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20] [--rows 4096] [--width 128]

Times each kernel in isolation, then one full fine-tuning step (forward,
backward, Adam) of the default-sized model, under both backends.
"""

import argparse
import timeit

import numpy as np

from entangler import build_vocabs, toy
from entangler import tensor as T
from entangler.pipeline.config import RunConfig
from entangler.pipeline.runner import build_task_model, encode_examples, make_batch
from entangler.tensor import _backend, _pykernels

try:
    from entangler.tensor import _ckernels
except ImportError:
    _ckernels = None


def kernel_cases(rows, width, rng):
    x = rng.normal(size=(rows, width)).astype(np.float32)
    gy = rng.normal(size=(rows, width)).astype(np.float32)
    mask = (rng.random((rows, width)) > 0.2).astype(np.uint8)
    gamma = np.ones(width, np.float32)
    beta = np.zeros(width, np.float32)
    targets = rng.integers(0, width, size=rows).astype(np.int64)
    scale = np.full(rows, 1.0 / rows, np.float32)

    def cases(k):
        y = k.softmax_forward(x, mask)
        _, xhat, rstd = k.layernorm_forward(x, gamma, beta, 1e-5)
        _, probs = k.xent_forward(x, targets)
        return {
            "softmax fwd (masked)": lambda: k.softmax_forward(x, mask),
            "softmax bwd": lambda: k.softmax_backward(y, gy),
            "layernorm fwd": lambda: k.layernorm_forward(x, gamma, beta, 1e-5),
            "layernorm bwd": lambda: k.layernorm_backward(gy, xhat, rstd, gamma),
            "xent fwd": lambda: k.xent_forward(x, targets),
            "xent bwd": lambda: k.xent_backward(probs, targets, scale),
        }

    return cases


def train_step_fn():
    data = toy.ner_sentences(16)
    cfg = RunConfig(task="ner", dropout=0.1, num_merges=60, batch_size=16)
    sv, cv = build_vocabs([w for w, _ in data], cfg.num_merges)
    labels = sorted({lab for _, labs in data for lab in labs})
    index = {lab: i for i, lab in enumerate(labels)}
    task_model = build_task_model(cfg, sv, cv, len(labels), np.random.default_rng(0))
    enc = encode_examples(data, sv, cv, cfg, index)
    batch = make_batch(enc, np.arange(len(data)), "ner")
    opt = T.Adam(task_model.parameters(), lr=1e-4, total_steps=10_000)

    def step():
        task_model.loss(batch).backward()
        opt.step()
        opt.zero_grad()

    return step


def best_ms(fn, repeat, number=1):
    fn()
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number * 1e3


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--rows", type=int, default=4096)
    parser.add_argument("--width", type=int, default=128)
    args = parser.parse_args()

    if _ckernels is None:
        print("compiled kernels are not built; only the numpy fallback is available")
    backends = {"python": _pykernels, "compiled": _ckernels}
    cases = kernel_cases(args.rows, args.width, np.random.default_rng(0))
    timings = {name: cases(k) for name, k in backends.items() if k is not None}

    print(f"kernels on {args.rows}x{args.width} float32 (best of {args.repeat}, ms)")
    print(f"{'kernel':<24}{'python':>10}{'compiled':>10}{'speedup':>9}")
    for kernel in timings["python"]:
        py = best_ms(timings["python"][kernel], args.repeat, number=5)
        if "compiled" in timings:
            c = best_ms(timings["compiled"][kernel], args.repeat, number=5)
            print(f"{kernel:<24}{py:>10.3f}{c:>10.3f}{py / c:>8.2f}x")
        else:
            print(f"{kernel:<24}{py:>10.3f}{'-':>10}")

    print("\nfull training step, default model, batch of 16 (ms)")
    step_times = {}
    for name in backends:
        if backends[name] is None:
            continue
        _backend.use(name)
        step_times[name] = best_ms(train_step_fn(), max(3, args.repeat // 4))
        print(f"{name:<24}{step_times[name]:>10.1f}")
    if len(step_times) == 2:
        print(f"{'speedup':<24}{step_times['python'] / step_times['compiled']:>9.2f}x")


if __name__ == "__main__":
    main()
