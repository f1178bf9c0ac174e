"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py              # kernel timings
    python3 benchmarks/bench_kernels.py --end-to-end # also a short training run per backend

The end-to-end mode starts one subprocess per backend and toggles the
fallback with ``PIESN_NO_NUMBA=1``, which is how a user would switch it.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from piesn import _kernels as K

E2E_SNIPPET = """
import time
from piesn import _kernels
from piesn.harness.dataset import SplitSpec, make_dataset
from piesn.reservoir import ReservoirConfig, init_reservoir
from piesn.systems import SignalSpec, make_system
from piesn.training import PiTrainConfig, train_pi_esn
sys_ = make_system("fourtank")
ds = make_dataset(sys_, SignalSpec("prbs", (0.0, 0.0), (5.0, 5.0), 50, 150), SplitSpec(500, 300, 2000, 0), 1.0,
                  (2.0, 2.0, 2.0, 2.0), seed=0)
res = init_reservoir(ReservoirConfig({n_x}, 2, 4, delta_in=0.1, delta_fb=0.2, seed=0))
train_pi_esn(res, ds.training_view(), sys_, PiTrainConfig(m_outer=1, k_inner=1))  # warm the jit cache
t0 = time.perf_counter()
train_pi_esn(res, ds.training_view(), sys_, PiTrainConfig(m_outer={m}, k_inner=20, gamma=1e-5))
print(_kernels.backend(), time.perf_counter() - t0)
"""


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def reservoir_case(n_x, T, rng):
    w_in = rng.uniform(-0.1, 0.1, (n_x, 2))
    w = rng.uniform(-1, 1, (n_x, n_x))
    w *= 0.8 / np.max(np.abs(np.linalg.eigvals(w)))
    w_fb = rng.uniform(-0.2, 0.2, (n_x, 4))
    w_b = np.zeros(n_x)
    w_out = rng.normal(0, 0.05, (4, n_x))
    u = rng.uniform(0, 5, (T, 2))
    fb = rng.uniform(0, 3, (T, 4))
    return w_in, w, w_fb, w_b, w_out, u, fb


def qp_case(m, rng):
    A = rng.normal(size=(m, 6))
    P = A @ A.T + 1e-3 * np.eye(m)
    return P, rng.normal(size=m)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    ap.add_argument("--outer", type=int, default=5, help="outer iterations for the end-to-end run")
    args = ap.parse_args(argv)

    if not K._HAVE_NUMBA:
        sys.exit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(0)
    rows = []
    for n_x in (100, 400):
        w_in, w, w_fb, w_b, w_out, u, fb = reservoir_case(n_x, 2000, rng)
        x0, y0 = np.zeros(n_x), np.zeros(4)
        tf = (w_in, w, w_fb, w_b, 1.0, u, fb, x0)
        fr = (w_in, w, w_fb, w_b, 1.0, w_out, u, x0, y0, 1e6)
        K.teacher_forced_numba(*tf), K.free_run_numba(*fr)  # compile outside the timing
        rows.append((f"teacher_forced n_x={n_x} T=2000", _best(lambda: K.teacher_forced_numpy(*tf), args.repeat),
                     _best(lambda: K.teacher_forced_numba(*tf), args.repeat)))
        rows.append((f"free_run       n_x={n_x} T=2000", _best(lambda: K.free_run_numpy(*fr), args.repeat),
                     _best(lambda: K.free_run_numba(*fr), args.repeat)))
    for m in (20, 60):
        P, d = qp_case(m, rng)
        hp = (P, d, np.zeros(m), 20_000, 1e-12)
        K.hildreth_numba(*hp)
        rows.append((f"hildreth       m={m}", _best(lambda: K.hildreth_numpy(*hp), args.repeat),
                     _best(lambda: K.hildreth_numba(*hp), args.repeat)))

    print(f"{'kernel':36s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speed-up':>9s}")
    for name, t_np, t_nb in rows:
        print(f"{name:36s} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:8.1f}x")

    if args.end_to_end:
        print(f"\nfour-tank training, n_x=200, {args.outer} outer x 20 inner iterations:")
        code = E2E_SNIPPET.format(n_x=200, m=args.outer)
        for flag in ("0", "1"):
            env = dict(os.environ, PIESN_NO_NUMBA=flag)
            out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
            backend, secs = out.stdout.split()
            print(f"  {backend:6s} {float(secs):7.2f} s")


if __name__ == "__main__":
    main()
