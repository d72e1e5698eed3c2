"""Sparse doubly selective MIMO channel generator.

Each user sees K significant delay taps (K_C of them shared by all users);
every tap is a cluster of equal-power rays whose Doppler shifts follow the
classic ring-of-scatterers law, so the temporal autocorrelation converges to
J_0(2*pi*f_max*T_s*lag).  A uniform linear array with half-wavelength
spacing provides the spatial signature of every ray.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ConfigError, SimConfig


@dataclass
class PathGeometry:
    """Static geometry of one realization: delays, powers and ray angles."""

    delays: np.ndarray        # (N_u, K) int, sorted per user
    common_mask: np.ndarray   # (N_u, K) bool, True on shared delays
    common_delays: np.ndarray  # (K_C,) int
    powers: np.ndarray        # (N_u, K) mean path powers, unit sum per user
    aoa_central: np.ndarray   # (N_u, K) central angles, rad
    ray_aoa: np.ndarray       # (N_u, K, N_ray) per-ray angles, rad
    ray_azimuth: np.ndarray   # (N_u, K, N_ray) motion-relative azimuths, rad
    ray_phase: np.ndarray     # (N_u, K, N_ray) initial phases, rad

    def support_mask(self, n_delay: int) -> np.ndarray:
        """(N_u, L) boolean delay-occupancy mask."""
        n_u, k = self.delays.shape
        mask = np.zeros((n_u, n_delay), dtype=bool)
        for ui in range(n_u):
            mask[ui, self.delays[ui]] = True
        return mask


def gen_path_geometry(config: SimConfig, rng: np.random.Generator) -> PathGeometry:
    """Draw delay supports, path powers and ray angles for all users.

    Exactly K_C delays are shared by every user; the remaining K - K_C
    delays per user are drawn without replacement from the rest of the delay
    window, so individual delays never collide across users.
    """
    k, k_c, n_u, l_max = config.K, config.K_C, config.N_u, config.L
    if not k_c <= k <= l_max:
        raise ConfigError(f"need K_C <= K <= L, got K_C={k_c}, K={k}, L={l_max}")
    needed = n_u * (k - k_c) + k_c
    if needed > l_max:
        raise ConfigError(
            f"N_u*(K-K_C)+K_C = {needed} distinct delays exceed L = {l_max}")

    pool = rng.permutation(l_max)
    common = np.sort(pool[:k_c])
    rest = pool[k_c:]
    delays = np.empty((n_u, k), dtype=int)
    common_mask = np.zeros((n_u, k), dtype=bool)
    for ui in range(n_u):
        own = rest[ui * (k - k_c):(ui + 1) * (k - k_c)]
        merged = np.sort(np.concatenate([common, own]))
        delays[ui] = merged
        common_mask[ui] = np.isin(merged, common)

    if config.path_powers is not None:
        prof = np.asarray(config.path_powers, dtype=float)
        powers = np.tile(prof / prof.sum(), (n_u, 1))
    else:
        # exponential delay power profile over the delay window
        decay = config.pdp_decay_db / 10.0
        powers = 10.0 ** (-decay * delays / l_max)
        powers = powers / powers.sum(axis=1, keepdims=True)

    spread = np.deg2rad(config.aoa_spread_deg)
    aoa_central = rng.uniform(-np.pi / 2, np.pi / 2, size=(n_u, k))
    ray_aoa = aoa_central[..., None] + rng.uniform(
        -spread / 2, spread / 2, size=(n_u, k, config.N_ray))
    ray_azimuth = rng.uniform(0.0, 2 * np.pi, size=(n_u, k, config.N_ray))
    ray_phase = rng.uniform(0.0, 2 * np.pi, size=(n_u, k, config.N_ray))
    return PathGeometry(delays=delays, common_mask=common_mask,
                        common_delays=common, powers=powers,
                        aoa_central=aoa_central, ray_aoa=ray_aoa,
                        ray_azimuth=ray_azimuth, ray_phase=ray_phase)


@dataclass
class ChannelRealization:
    """Gain sequences of every (antenna, user, path) over consecutive frames."""

    gains: np.ndarray         # (N_r, N_u, K, n_frames * MN) complex
    geometry: PathGeometry
    m: int
    n: int
    n_frames: int
    f_max: float
    t_s: float

    @property
    def mn(self) -> int:
        return self.m * self.n

    def frame_gains(self, frame: int) -> np.ndarray:
        """Gains of one frame, shape (N_r, N_u, K, MN)."""
        if not 0 <= frame < self.n_frames:
            raise IndexError(f"frame {frame} outside 0..{self.n_frames - 1}")
        return self.gains[..., frame * self.mn:(frame + 1) * self.mn]

    def frame_gains_full(self, frame: int, n_delay: int) -> np.ndarray:
        """Frame gains scattered into the full delay window (N_r,N_u,L,MN)."""
        g = self.frame_gains(frame)
        n_r, n_u, k, mn = g.shape
        out = np.zeros((n_r, n_u, n_delay, mn), dtype=complex)
        for ui in range(n_u):
            out[:, ui, self.geometry.delays[ui], :] = g[:, ui]
        return out


def gen_gain_process(geometry: PathGeometry, config: SimConfig,
                     rng: np.random.Generator) -> ChannelRealization:
    """Synthesize the ray-sum gain process over N_t + N_f contiguous frames.

    Every path gain is (1/sqrt(N_ray)) * sum_r exp(-j(2*pi*f_max*n*T_s*
    cos(psi_r) + phase_r)) scaled by the path amplitude, with the per-ray
    array response exp(j*pi*n_r*sin(aoa_r)) across antennas.  Frames are
    slices of one continuous process, so statistics are seamless across
    frame boundaries.
    """
    if config.N_ray < 8:
        raise ConfigError(f"need N_ray >= 8 for a credible ray sum, got {config.N_ray}")
    n_u, k, n_ray = geometry.ray_azimuth.shape
    n_frames = config.N_t + config.N_f
    total = n_frames * config.MN
    t = np.arange(total)
    ant = np.arange(config.N_r)

    gains = np.empty((config.N_r, n_u, k, total), dtype=complex)
    omega = 2 * np.pi * config.f_max * config.T_s  # rad per sample at cos(psi)=1
    for ui in range(n_u):
        for ki in range(k):
            doppler = omega * np.cos(geometry.ray_azimuth[ui, ki])       # (N_ray,)
            temporal = np.exp(-1j * (np.outer(doppler, t)
                                     + geometry.ray_phase[ui, ki][:, None]))
            spatial = np.exp(1j * np.pi * np.outer(ant, np.sin(geometry.ray_aoa[ui, ki])))
            amp = np.sqrt(geometry.powers[ui, ki] / n_ray)
            gains[:, ui, ki, :] = amp * (spatial @ temporal)
    return ChannelRealization(gains=gains, geometry=geometry, m=config.M,
                              n=config.N, n_frames=n_frames,
                              f_max=config.f_max, t_s=config.T_s)


def count_significant_paths(realization: ChannelRealization,
                            zeta: float) -> np.ndarray:
    """Number of stored paths whose RMS amplitude reaches ``zeta``, per user.

    The per-path statistic is the root mean square of |h| over antennas and
    time, so a unit-total-power channel has path values near sqrt(p_k).
    """
    if zeta < 0:
        raise ValueError(f"threshold must be non-negative, got {zeta}")
    power = np.mean(np.abs(realization.gains) ** 2, axis=(0, 3))  # (N_u, K)
    return np.sum(np.sqrt(power) >= zeta, axis=1)


def dump_realization(realization: ChannelRealization, path: str) -> None:
    """Write gains as text rows ``frame n_r n_u path n re im`` for diffing."""
    mn = realization.mn
    n_r, n_u, k, _ = realization.gains.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# frame n_r n_u path n re im\n")
        for f in range(realization.n_frames):
            g = realization.frame_gains(f)
            for ri in range(n_r):
                for ui in range(n_u):
                    for ki in range(k):
                        for n in range(mn):
                            z = g[ri, ui, ki, n]
                            fh.write(f"{f} {ri} {ui} {ki} {n} "
                                     f"{z.real:.17g} {z.imag:.17g}\n")
