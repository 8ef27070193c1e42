"""Simulate one LFSM path and recover (H, alpha, beta) from it."""
import argparse

from levy_pv import estimators as est
from levy_pv import path_simulator as ps
from levy_pv.levy_driver import RngStream


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=0.2)
    ap.add_argument("--beta", type=float, default=1.5)
    ap.add_argument("--n", type=int, default=2**16)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    path = ps.simulate_lfsm(args.alpha, args.beta, 1.0, args.n, ps.SimConfig(args.n, stream=RngStream(args.seed)))
    fit = est.scale_function_fit(path)
    H = est.estimate_H_ratio(path, 0.5)
    print(f"true   H={args.alpha + 1 / args.beta:.4f} alpha={args.alpha:.4f} beta={args.beta:.4f}")
    print(f"ratio  H_hat={H:.4f}")
    print(f"scale  alpha_hat={fit.alpha_hat:.4f} beta_hat={fit.beta_hat:.4f} (H={fit.H_hat:.4f})")


if __name__ == "__main__":
    main()
