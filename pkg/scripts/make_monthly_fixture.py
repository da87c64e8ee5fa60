#!/usr/bin/env python3
"""Regenerate tests/data/enso_like_monthly.csv.

The fixture is a 100-year synthetic monthly record of two coupled indices
("sst", "d20") carrying the ingredients the preprocessing pipeline removes:
a linear trend, a seasonal climatology, and seasonally modulated variance.
The anomalies underneath come from a skewed quadratic stochastic system
driven by colored noise, so the standardized record has asymmetric marginals
in both columns (third central moments ~ +0.4) for the skewness-capture
property test.  A generous reflecting wall guards the generation run; it
never engages at these parameters.
"""

import pathlib

import numpy as np

import nlim

OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data" / "enso_like_monthly.csv"

N_MONTHS = 1200
START = (1920, 1)
SEED = 2024


def anomaly_generator() -> nlim.QuadModel:
    B = nlim.QuadTensor(2, np.array([[0.175, -0.3, 0.0], [0.3, 0.0, 0.175]]))
    A = np.array([[-0.7, 0.4], [-0.4, -0.55]])
    C = np.array([0.25, -0.225])
    Q = np.array([[0.15, 0.03], [0.03, 0.15]])
    return nlim.QuadModel(B=B, A=A, C=C, Q=Q, noise=nlim.NoiseSpec.colored(1.0))


def main():
    plan = nlim.SimPlan(
        dt=0.05,
        t_final=80.0 + float(N_MONTHS),
        initial_state=np.zeros(2),
        subsample=20,
        seed=SEED,
        discard=80.0,
    )
    wall = nlim.WallSpec(center=np.zeros(2), radius=8.0, steepness=20.0)
    traj = nlim.simulate(anomaly_generator(), wall, plan)
    anom = traj.values[:N_MONTHS]
    anom = anom - anom.mean(axis=0)

    t = np.arange(N_MONTHS)
    month = (START[1] - 1 + t) % 12
    phase = 2.0 * np.pi * month / 12.0

    sst = anom[:, 0] * (1.0 + 0.35 * np.cos(phase + 0.5)) + 26.0 + 2.5 * np.sin(phase + 0.7) + 0.002 * t
    d20 = anom[:, 1] * (16.0 + 5.0 * np.sin(phase - 0.3)) + 110.0 + 18.0 * np.cos(phase) - 0.005 * t

    series = nlim.MonthlySeries(
        start_year=START[0],
        start_month=START[1],
        values=np.column_stack([sst, d20]),
        names=("sst", "d20"),
    )
    OUT.parent.mkdir(parents=True, exist_ok=True)
    nlim.save_monthly_csv(OUT, series)
    print(f"wrote {N_MONTHS} months to {OUT}")


if __name__ == "__main__":
    main()
