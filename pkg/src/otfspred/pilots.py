"""Hybrid dedicated/superimposed pilot frame construction.

Pilots are designed in a pre-transform domain (the frequency domain of the
whole frame): G non-zero +-1 pilots sit on an even stride, each protected by
2Q-2 guard zeros, and every remaining cell carries one payload symbol.  The
unitary map P = (F_N kron I_M) F_MN^H spreads this vector over the whole
delay-Doppler grid, which is what makes the low dedicated overhead possible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ConfigError, SimConfig
from .otfs import otfs_demodulate


@dataclass
class PilotPattern:
    """Shared pilot geometry plus the per-user +-1 pilot values."""

    m: int
    n: int
    q_order: int
    p_nz: np.ndarray       # (G,) non-zero pilot indices
    p_q: np.ndarray        # (Q, G) sampling sets, cyclic shifts of p_nz
    dedicated: np.ndarray  # sorted dedicated indices, size G*(2Q-1)
    data_idx: np.ndarray   # complement of the dedicated set
    pilots: np.ndarray     # (N_u, G) pilot values

    @property
    def mn(self) -> int:
        return self.m * self.n

    @property
    def n_data(self) -> int:
        return self.data_idx.size


@dataclass
class TxFrame:
    """One assembled transmit frame of a single user."""

    u: np.ndarray             # pre-transform vector: pilots, guards, data
    x_dd: np.ndarray          # delay-Doppler grid, P @ u
    data_symbols: np.ndarray  # payload as placed on data_idx


def build_pattern(config: SimConfig, rng: np.random.Generator) -> PilotPattern:
    """Strided pilot pattern shared by all users.

    The base stride floor(MN/G) must reach 2Q-1 so the dedicated zones of
    neighbouring pilots never overlap.  When G >= L the grid is exactly
    uniform (the sampled delay atoms are then mutually orthogonal for a
    divisor stride); when G < L a uniform grid cannot tell delay l from
    l + G apart at all, so each pilot is jittered inside its stride cell,
    which keeps the cyclic spacing >= 2Q-1 while making all L delay atoms
    distinguishable.  Each user gets an independent random +-1 sequence.
    """
    mn, g, q = config.MN, config.G, config.Q
    if g * (2 * q - 1) > mn:
        raise ConfigError(f"G*(2Q-1) = {g * (2 * q - 1)} exceeds MN = {mn}")
    if g == 0:
        return PilotPattern(m=config.M, n=config.N, q_order=q,
                            p_nz=np.zeros(0, int),
                            p_q=np.zeros((q, 0), int),
                            dedicated=np.zeros(0, int),
                            data_idx=np.arange(mn),
                            pilots=np.zeros((config.N_u, 0)))
    stride = mn // g
    if stride < 2 * q - 1:
        raise ConfigError(f"pilot stride {stride} is below 2Q-1 = {2 * q - 1}")
    p_nz = np.arange(g) * stride
    if g < config.L:
        jitter = rng.integers(0, stride - (2 * q - 1) + 1, size=g)
        p_nz = p_nz + jitter
    offsets = np.arange(q) - (q - 1) // 2
    p_q = (p_nz[None, :] + offsets[:, None]) % mn
    guard = np.arange(-(q - 1), q)
    dedicated = np.unique((p_nz[:, None] + guard[None, :]) % mn)
    data_idx = np.setdiff1d(np.arange(mn), dedicated)
    values = np.where(rng.random((config.N_u, g)) < 0.5, 1.0, -1.0)
    values = values * np.sqrt(config.pilot_power)
    return PilotPattern(m=config.M, n=config.N, q_order=q, p_nz=p_nz, p_q=p_q,
                        dedicated=dedicated, data_idx=data_idx, pilots=values)


def pilot_overhead(pattern: PilotPattern) -> float:
    """Fraction of the grid spent on dedicated pilot resources, G(2Q-1)/MN."""
    g = pattern.p_nz.size
    return min(g * (2 * pattern.q_order - 1), pattern.mn) / pattern.mn


def pilot_vector(pattern: PilotPattern, n_u: int) -> np.ndarray:
    """Pre-transform vector holding only the pilot part of one user's frame."""
    u = np.zeros(pattern.mn, dtype=complex)
    u[pattern.p_nz] = pattern.pilots[n_u]
    return u


def assemble_frame(pattern: PilotPattern, payload: np.ndarray, n_u: int) -> TxFrame:
    """Place pilots and payload, then transform to the delay-Doppler grid."""
    payload = np.asarray(payload, dtype=complex)
    if payload.shape != (pattern.n_data,):
        raise ValueError(
            f"payload must have length {pattern.n_data}, got {payload.shape}")
    u = pilot_vector(pattern, n_u)
    u[pattern.data_idx] = payload
    return TxFrame(u=u, x_dd=pre_transform(u, pattern.m, pattern.n),
                   data_symbols=payload)


def pre_transform(u: np.ndarray, m: int, n: int) -> np.ndarray:
    """Apply the unitary spreading map P = (F_N kron I_M) F_MN^H."""
    time = np.fft.ifft(u, axis=-1, norm="ortho")
    return otfs_demodulate(time, m, n)


def pre_transform_adjoint(x_dd: np.ndarray, m: int, n: int) -> np.ndarray:
    """Apply P^H, returning the pre-transform-domain vector."""
    from .otfs import otfs_modulate
    time = otfs_modulate(x_dd, m, n)
    return np.fft.fft(time, axis=-1, norm="ortho")


def save_pattern(pattern: PilotPattern, path: str, seed: int | None = None) -> None:
    """Persist the pattern in the flat key=value config format."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"M = {pattern.m}\n")
        fh.write(f"N = {pattern.n}\n")
        fh.write(f"Q = {pattern.q_order}\n")
        if seed is not None:
            fh.write(f"seed = {seed}\n")
        fh.write(f"p_nz = [{', '.join(str(i) for i in pattern.p_nz)}]\n")
        for ui in range(pattern.pilots.shape[0]):
            row = ", ".join(f"{v:g}" for v in pattern.pilots[ui])
            fh.write(f"pilots_{ui} = [{row}]\n")
