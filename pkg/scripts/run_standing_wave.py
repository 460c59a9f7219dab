#!/usr/bin/env python3
"""Standing gravity-capillary wave: dispersion check and energy budget.

Runs the small-amplitude standing-wave preset for a few periods, prints the
measured oscillation frequency against (g k + sigma k^3) tanh(k H), and the
total-energy drift.
"""

import argparse

import numpy as np

from wavetank.config import SimulationConfig, initial_state
from wavetank.evolution import run


def measured_frequency(times, amplitudes):
    """Angular frequency from linearly interpolated zero crossings."""
    ts = np.asarray(times)
    amp = np.asarray(amplitudes)
    idx = np.where(np.diff(np.sign(amp)) != 0)[0]
    crossings = ts[idx] - amp[idx] * (ts[idx + 1] - ts[idx]) / (amp[idx + 1] - amp[idx])
    if crossings.size < 2:
        raise RuntimeError("not enough zero crossings to estimate a frequency")
    return np.pi / np.mean(np.diff(crossings))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-y", type=int, default=32)
    parser.add_argument("--n-z", type=int, default=48)
    parser.add_argument("--eps", type=float, default=0.0)
    parser.add_argument("--amplitude", type=float, default=1e-3)
    parser.add_argument("--mode-k", type=int, default=1)
    parser.add_argument("--periods", type=float, default=5.0)
    parser.add_argument("--steps-per-period", type=int, default=80)
    args = parser.parse_args()

    config = SimulationConfig(
        n_y=args.n_y,
        n_z=args.n_z,
        eps=args.eps,
        amplitude=args.amplitude,
        mode_k=args.mode_k,
        preset="standing_wave",
        t_final=1.0,
    )
    state = initial_state(config)
    k = 2.0 * np.pi * args.mode_k / config.length_y
    omega = np.sqrt(
        (config.gravity_g * k + config.sigma * k**3) * np.tanh(k * config.depth_H)
    )
    period = 2.0 * np.pi / omega
    traj = run(
        state,
        t_final=args.periods * period,
        dt=period / args.steps_per_period,
    )
    if traj.failure is not None:
        raise SystemExit(f"run failed: {traj.failure}")

    amps = [
        np.real(np.fft.rfft(s.h.h_values)[args.mode_k]) for s in traj.states
    ]
    omega_measured = measured_frequency(traj.times, amps)
    energies = np.array([e.total for e in traj.energy])
    print(f"theoretical omega : {omega:.6f}")
    print(f"measured omega    : {omega_measured:.6f}")
    print(f"relative error    : {abs(omega_measured - omega) / omega:.3e}")
    print(f"energy drift      : {abs(energies[-1] - energies[0]) / energies[0]:.3e}")
    print(f"max energy dev    : {np.max(np.abs(energies - energies[0])) / energies[0]:.3e}")


if __name__ == "__main__":
    main()
