#!/usr/bin/env python3
"""Vanishing-viscosity sweep on the standing-wave preset.

Runs identical scenarios at several viscosities, compares each against the
inviscid member, and prints the convergence table plus the boundary-layer
profile scaling.
"""

import argparse

import numpy as np

from wavetank.config import SimulationConfig, initial_state
from wavetank.diagnostics import epsilon_sweep


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-y", type=int, default=32)
    parser.add_argument("--n-z", type=int, default=72)
    parser.add_argument("--gamma", type=float, default=3.5)
    parser.add_argument("--periods", type=float, default=2.0)
    parser.add_argument(
        "--eps", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4, 0.0]
    )
    args = parser.parse_args()

    config = SimulationConfig(
        n_y=args.n_y,
        n_z=args.n_z,
        stretch_gamma=args.gamma,
        preset="standing_wave",
        amplitude=1e-3,
        t_final=1.0,
    )
    k = 2.0 * np.pi * config.mode_k / config.length_y
    omega = np.sqrt(
        (config.gravity_g * k + config.sigma * k**3) * np.tanh(k * config.depth_H)
    )
    period = 2.0 * np.pi / omega
    dy = config.length_y / config.n_y
    dt = 0.5 * np.sqrt(dy**3 / config.sigma)

    result = epsilon_sweep(
        lambda eps: initial_state(config, eps=eps),
        args.eps,
        t_final=args.periods * period,
        dt=dt,
    )
    if result.failed:
        raise SystemExit(f"failed members: {sorted(result.failed)}")

    print(f"{'eps':>10} {'sup_t |v-v0|':>14} {'sup_t |h-h0|_H1':>16} "
          f"{'Hco2 max':>12} {'amp/sqrt(eps)':>14}")
    for eps in result.eps_list:
        if eps == 0.0:
            print(f"{eps:>10g} {'-':>14} {'-':>16} "
                  f"{result.conormal_max[eps]:>12.4e} {'-':>14}")
            continue
        zeta, profile = result.profiles[eps]
        band = zeta >= -20.0
        amp = float(np.max(profile[band]))
        print(
            f"{eps:>10g} {result.sup_v_l2[eps]:>14.4e} "
            f"{result.sup_h_h1[eps]:>16.4e} {result.conormal_max[eps]:>12.4e} "
            f"{amp / np.sqrt(eps):>14.4e}"
        )


if __name__ == "__main__":
    main()
