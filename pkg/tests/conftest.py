"""Shared builders for synthetic, exactly-modeled channels."""

import numpy as np
import pytest

from otfspred.bases import build_basis_set, ce_bem_offsets
from otfspred.channel import PathGeometry
from otfspred.config import SimConfig
from otfspred.estimation import build_sensing
from otfspred.pilots import build_pattern


class SyntheticRealization:
    """Channel whose gains come from explicit expansion coefficients."""

    def __init__(self, gains_full, delays, m, n, n_frames=1):
        # gains_full: (N_r, N_u, L, n_frames*MN)
        self.gains_full_arr = gains_full
        self.m, self.n = m, n
        self.mn = m * n
        self.n_frames = n_frames
        n_u = gains_full.shape[1]
        k = delays.shape[1]

        self.geometry = PathGeometry(
            delays=delays,
            common_mask=np.zeros((n_u, k), dtype=bool),
            common_delays=np.zeros(0, dtype=int),
            powers=np.full((n_u, k), 1.0 / k),
            aoa_central=np.zeros((n_u, k)),
            ray_aoa=np.zeros((n_u, k, 1)),
            ray_azimuth=np.zeros((n_u, k, 1)),
            ray_phase=np.zeros((n_u, k, 1)))
        self.gains = np.stack([gains_full[:, ui, delays[ui], :]
                               for ui in range(n_u)], axis=1)

    def frame_gains(self, frame):
        if not 0 <= frame < self.n_frames:
            raise IndexError(f"frame {frame} outside range")
        return self.gains[..., frame * self.mn:(frame + 1) * self.mn]

    def frame_gains_full(self, frame, n_delay):
        return self.gains_full_arr[..., frame * self.mn:(frame + 1) * self.mn]


def synth_bem_exact(config: SimConfig, supports, rng, n_frames=1):
    """Channel synthesized exactly from spatial x exponential coefficients.

    Returns (realization, pattern, basis, sensing, s_bar) where s_bar is the
    block-permuted coefficient matrix the measurement model should recover
    (per-frame; every frame shares the same coefficients).
    """
    mn = config.MN
    pattern = build_pattern(config, rng)
    basis = build_basis_set(config)
    sensing = build_sensing(pattern, basis, config)
    q_s, q = config.Q_s, config.Q
    s_true = np.zeros((config.L, config.N_u, q_s, q), dtype=complex)
    for ui, sup in enumerate(supports):
        for l in sup:
            s_true[l, ui] = (rng.standard_normal((q_s, q))
                             + 1j * rng.standard_normal((q_s, q))) / np.sqrt(2)
    offs = ce_bem_offsets(q)
    b_raw = np.exp(2j * np.pi * np.outer(np.arange(mn), offs) / mn)
    gains = np.zeros((config.N_r, config.N_u, config.L, mn), dtype=complex)
    for ui in range(config.N_u):
        c = np.einsum("rs,lsq->rlq", basis.D[ui], s_true[:, ui])
        gains[:, ui] = np.einsum("rlq,tq->rlt", c, b_raw)
    gains = np.tile(gains, (1, 1, 1, n_frames))
    s_bar = np.zeros((config.L * config.N_u * q_s, q), dtype=complex)
    for l in range(config.L):
        for ui in range(config.N_u):
            for qs in range(q_s):
                row = l * config.N_u * q_s + ui * q_s + qs
                s_bar[row] = sensing.phase[:, l] * s_true[l, ui, qs]
    delays = np.stack([np.sort(np.asarray(sup)) for sup in supports])
    real = SyntheticRealization(gains, delays, config.M, config.N,
                                n_frames=n_frames)
    return real, pattern, basis, sensing, s_bar


@pytest.fixture
def tiny_config():
    # G divides MN so the sampled delay atoms stay exactly orthogonal, and
    # the pilots are long enough that exact cross-user aliases are unlikely
    return SimConfig(M=32, N=4, N_r=2, N_u=2, L=6, K=2, K_C=1, Q=3, Q_s=2,
                     G=16, N_t=1, N_f=0, N_sg=2, Q_sg=2)


def support_well_posed(sensing, supports) -> bool:
    """True when the columns of the true support are full rank.

    Random +-1 pilot draws can make two users' same-delay blocks linearly
    dependent (the sequences agree or disagree in exactly one position);
    recovery instances are conditioned on a full-rank support.
    """
    cols = []
    for ui, sup in enumerate(supports):
        for l in sup:
            cols.extend(sensing.sub_cols(int(l), ui).tolist())
    sub = sensing.phi[:, sorted(cols)]
    return np.linalg.matrix_rank(sub) == sub.shape[1]
