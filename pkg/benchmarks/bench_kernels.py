"""Compare the numba and numpy GRU kernels on training-sized arrays.

    python benchmarks/bench_kernels.py [--hidden 32 --batch 10 --steps 5]
"""

import argparse
import timeit

import numpy as np

from surge_extrap import _kernels


def make_inputs(T, B, H, seed=0):
    rng = np.random.default_rng(seed)
    x = [rng.normal(size=(T, B, H)) for _ in range(3)]
    U = [rng.normal(scale=1 / np.sqrt(H), size=(H, H)) for _ in range(3)]
    return x, U


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--hidden", type=int, nargs="+", default=[32, 128, 256])
    ap.add_argument("--batch", type=int, default=10)
    ap.add_argument("--steps", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAS_NUMBA:
        raise SystemExit("numba is not installed")
    print(f"{'H':>5} {'kernel':>9} {'numpy_us':>10} {'numba_us':>10} {'speedup':>8} {'max_abs_diff':>13}")
    for H in args.hidden:
        (xz, xr, xh), (Uz, Ur, Uh) = make_inputs(args.steps, args.batch, H)
        fw_np = _kernels.gru_forward_numpy(xz, xr, xh, Uz, Ur, Uh)
        fw_nb = _kernels.gru_forward_numba(xz, xr, xh, Uz, Ur, Uh)
        dhs = np.random.default_rng(1).normal(size=xz.shape)
        bw_np = _kernels.gru_backward_numpy(dhs, *fw_np[:4], Uz, Ur, Uh)
        bw_nb = _kernels.gru_backward_numba(dhs, *fw_np[:4], Uz, Ur, Uh)
        cases = [
            ("forward", lambda: _kernels.gru_forward_numpy(xz, xr, xh, Uz, Ur, Uh),
             lambda: _kernels.gru_forward_numba(xz, xr, xh, Uz, Ur, Uh), fw_np, fw_nb),
            ("backward", lambda: _kernels.gru_backward_numpy(dhs, *fw_np[:4], Uz, Ur, Uh),
             lambda: _kernels.gru_backward_numba(dhs, *fw_np[:4], Uz, Ur, Uh), bw_np, bw_nb),
        ]
        for name, f_np, f_nb, r_np, r_nb in cases:
            n = 200
            t_np = min(timeit.repeat(f_np, number=n, repeat=args.repeat)) / n * 1e6
            t_nb = min(timeit.repeat(f_nb, number=n, repeat=args.repeat)) / n * 1e6
            diff = max(float(np.abs(a - b).max()) for a, b in zip(r_np, r_nb))
            print(f"{H:>5} {name:>9} {t_np:>10.1f} {t_nb:>10.1f} {t_np / t_nb:>8.2f} {diff:>13.2e}")


if __name__ == "__main__":
    main()
