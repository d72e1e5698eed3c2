"""OTFS transforms and the sparse effective delay-Doppler channel."""

import numpy as np

from otfspred.channel import gen_gain_process, gen_path_geometry
from otfspred.config import SimConfig
from otfspred.otfs import (apply_channel, build_effective_channel,
                           otfs_demodulate, otfs_modulate)


def main():
    cfg = SimConfig(M=8, N=4, N_r=2, N_u=2, L=6, K=2, K_C=1, Q=3, Q_s=2,
                    G=4, N_sg=2, Q_sg=2)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((cfg.N_u, cfg.MN)) + 1j * rng.standard_normal((cfg.N_u, cfg.MN))

    t = otfs_modulate(x, cfg.M, cfg.N)
    back = otfs_demodulate(t, cfg.M, cfg.N)
    print("modulate/demodulate round trip error:", np.max(np.abs(back - x)))

    geom = gen_path_geometry(cfg, rng)
    real = gen_gain_process(geom, cfg, rng)
    eff = build_effective_channel(real, frame=0)

    via_time = otfs_demodulate(apply_channel(otfs_modulate(x, cfg.M, cfg.N),
                                             real, 0), cfg.M, cfg.N)
    via_operator = eff.apply(x)
    print("operator vs time-domain propagation:",
          np.max(np.abs(via_operator - via_time)))

    rows, cols, vals = eff.to_coo(0, 0)
    _, row_counts = np.unique(rows, return_counts=True)
    print(f"non-zeros per row: max {row_counts.max()} "
          f"(bound K*N = {cfg.K * cfg.N})")
    dense = eff.to_dense(0, 0)
    x0 = np.zeros_like(x)
    x0[0] = x[0]
    print("materialized operator agreement:",
          np.max(np.abs(dense @ x[0] - eff.apply(x0)[0])))


if __name__ == "__main__":
    main()
