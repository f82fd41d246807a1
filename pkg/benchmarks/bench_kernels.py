"""Compare the numba and numpy kernel paths, plus one end-to-end training run per backend.

    python3 benchmarks/bench_kernels.py [--repeats 200]

The end-to-end timings run in subprocesses because the backend is fixed at import.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from mixupe import _kernels as K

SHAPES = [(100, 3), (100, 10), (1000, 10), (10000, 3)]

E2E = """
import json, time
from mixupe import harness as H, _kernels as K
cfg = H.ExperimentConfig(dataset={"name": "wine"}, method="mixupe", alpha=1.0, eta=1.0, epochs=10, seeds=(0,))
ds = H.load_data(cfg)
H.train_run(cfg, ds, 0)  # warm-up (numba compile / cache load)
t = time.perf_counter()
run = H.train_run(cfg, ds, 0)
print(json.dumps({"backend": K.BACKEND, "seconds": time.perf_counter() - t, "final_loss": run.final.train_loss_total}))
"""


def bench_kernels(repeats: int) -> None:
    if not K.HAVE_NUMBA:
        print("numba unavailable (or MIXUPE_NUMBA=0); kernel comparison skipped")
        return
    rng = np.random.default_rng(0)
    pairs = [
        ("logsumexp_rows", K.np_logsumexp_rows, K.logsumexp_rows),
        ("softmax_rows", K.np_softmax_rows, K.softmax_rows),
        ("sigmoid", K.np_sigmoid, K.sigmoid),
        ("softplus", K.np_softplus, K.nb_softplus),
    ]
    print(f"{'kernel':<16}{'shape':>12}{'numpy us':>12}{'numba us':>12}{'speedup':>9}{'max diff':>11}")
    for m, c in SHAPES:
        a = rng.normal(size=(m, c)) * 5
        perm = rng.permutation(m)
        cases = [(name, f_np, f_nb, (a,)) for name, f_np, f_nb in pairs]
        cases.append(("mix_rows", K.np_mix_rows, K.mix_rows, (a, perm, 0.3)))
        for name, f_np, f_nb, args in cases:
            f_nb(*args)
            t_np = min(timeit.repeat(lambda: f_np(*args), number=repeats, repeat=3)) / repeats * 1e6
            t_nb = min(timeit.repeat(lambda: f_nb(*args), number=repeats, repeat=3)) / repeats * 1e6
            diff = float(np.max(np.abs(f_np(*args) - f_nb(*args))))
            print(f"{name:<16}{f'{m}x{c}':>12}{t_np:>12.1f}{t_nb:>12.1f}{t_np / t_nb:>9.2f}{diff:>11.1e}")


def bench_end_to_end() -> None:
    print("\nend-to-end: wine, MixupE, 2x128 relu, 10 epochs")
    for flag in ("1", "0"):
        env = dict(os.environ, MIXUPE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
        r = json.loads(out.stdout.strip().splitlines()[-1])
        print(f"  {r['backend']:<6} {r['seconds']:.3f} s  final train loss {r['final_loss']:.10f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=200)
    ap.add_argument("--no-e2e", action="store_true")
    args = ap.parse_args()
    bench_kernels(args.repeats)
    if not args.no_e2e:
        bench_end_to_end()
