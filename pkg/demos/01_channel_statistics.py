"""Channel synthesis: temporal correlation, power profile, path counting."""

import numpy as np

from otfspred.channel import (count_significant_paths, gen_gain_process,
                              gen_path_geometry)
from otfspred.config import desk_profile


def j0_series(x, terms=40):
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    term = np.ones_like(x)
    for k in range(1, terms):
        term = term * (-(x / 2) ** 2) / k ** 2
        out += term
    return out


def main():
    cfg = desk_profile(N_u=2, K=3, K_C=1)
    geom = gen_path_geometry(cfg, np.random.default_rng(0))
    print("delay supports per user:", [list(d) for d in geom.delays])
    print("shared delays:", list(geom.common_delays))
    print("mean path powers:", np.round(geom.powers, 3))

    real = gen_gain_process(geom, cfg, np.random.default_rng(1))
    print("\npaths above threshold 1e-6:", count_significant_paths(real, 1e-6))
    print("paths above threshold 10:", count_significant_paths(real, 10.0))

    # ensemble autocorrelation against the Bessel reference
    lags = np.array([0, 16, 64, 128])
    acc = np.zeros(lags.size, dtype=complex)
    norm = 0.0
    probe = desk_profile(N_r=1, N_u=1, K=1, K_C=1, L=4, G=16, Q_s=1,
                         v=500 / 3.6)
    for seed in range(300):
        g = gen_gain_process(gen_path_geometry(probe, np.random.default_rng(seed)),
                             probe, np.random.default_rng(seed + 1)).gains[0, 0, 0]
        for i, lag in enumerate(lags):
            acc[i] += np.vdot(g[:probe.MN], g[lag:lag + probe.MN])
        norm += np.vdot(g[:probe.MN], g[:probe.MN]).real
    measured = (acc / norm).real
    expected = j0_series(2 * np.pi * probe.f_max * probe.T_s * lags)
    print("\nlag  autocorrelation  Bessel reference")
    for lag, m, e in zip(lags, measured, expected):
        print(f"{lag:4d}  {m:15.4f}  {e:16.4f}")


if __name__ == "__main__":
    main()
