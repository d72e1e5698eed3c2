"""OTFS modulation, time-domain channel application and the effective
delay-Doppler channel operator.

Vector convention: a delay-Doppler grid is flattened as k = n*M + m with the
delay index m running fastest, so the receive transform is F_N kron I_M and
the transmit transform its adjoint.  All DFTs are unitary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _as_grid(x: np.ndarray, m: int, n: int) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[-1] != m * n:
        raise ValueError(f"expected last axis {m * n}, got {x.shape[-1]}")
    return x.reshape(x.shape[:-1] + (n, m))


def otfs_modulate(x_dd: np.ndarray, m: int, n: int) -> np.ndarray:
    """Map a delay-Doppler vector to the time domain, (F_N^H kron I_M) x."""
    grid = _as_grid(x_dd, m, n)
    return np.fft.ifft(grid, axis=-2, norm="ortho").reshape(x_dd.shape)


def otfs_demodulate(r: np.ndarray, m: int, n: int) -> np.ndarray:
    """Map a time-domain vector to the delay-Doppler domain, (F_N kron I_M) r."""
    grid = _as_grid(r, m, n)
    return np.fft.fft(grid, axis=-2, norm="ortho").reshape(r.shape)


def apply_channel(s: np.ndarray, realization, frame: int, sigma2: float = 0.0,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Propagate per-user time signals through one frame of the channel.

    Implements r = sum_u sum_l roll(h_l * s_u, l) + w with circular delay
    shifts; ``s`` has shape (N_u, MN) and the result (N_r, MN).
    """
    gains = realization.frame_gains(frame)          # (N_r, N_u, K, MN)
    n_r, n_u, n_paths, mn = gains.shape
    s = np.asarray(s, dtype=complex)
    if s.shape != (n_u, mn):
        raise ValueError(f"expected signals of shape {(n_u, mn)}, got {s.shape}")
    y = np.zeros((n_r, mn), dtype=complex)
    for ui in range(n_u):
        for ki in range(n_paths):
            delay = int(realization.geometry.delays[ui, ki])
            y += np.roll(gains[:, ui, ki, :] * s[ui], delay, axis=-1)
    if sigma2 > 0.0:
        if rng is None:
            raise ValueError("noise requested without rng")
        y += np.sqrt(sigma2 / 2.0) * (rng.standard_normal(y.shape)
                                      + 1j * rng.standard_normal(y.shape))
    return y


@dataclass
class EffChannel:
    """Effective delay-Doppler channel of one frame.

    Stored in cyclic-shift form: per user a delay support and the per-path
    complex gain sequences.  Each per-antenna, per-user operator has at most
    K*N non-zero entries in every row and column; ``to_coo`` materializes
    them, ``apply``/``apply_adjoint`` evaluate the operator through its
    shift structure without forming the matrix.
    """

    m: int
    n: int
    delays: list                 # per user: int array of path delays
    gains: list                  # per user: (N_r, K_u, MN) gain sequences

    def __post_init__(self):
        mn = self.m * self.n
        j = np.arange(mn)
        self._fwd = [np.stack([(j - int(d)) % mn for d in dl]) if len(dl)
                     else np.zeros((0, mn), int) for dl in self.delays]
        self._bwd = [np.stack([(j + int(d)) % mn for d in dl]) if len(dl)
                     else np.zeros((0, mn), int) for dl in self.delays]
        # flat gather indices per user for (N_r, K, MN) arrays
        n_r = self.gains[0].shape[0] if self.gains else 0
        k_mn = [f.size for f in self._fwd]
        self._fwd_flat = [
            (np.arange(n_r)[:, None, None] * k_mn[ui]
             + np.arange(len(self.delays[ui]))[None, :, None] * mn
             + self._fwd[ui][None]).ravel() if len(self.delays[ui])
            else np.zeros(0, int)
            for ui in range(len(self.delays))]

    @property
    def mn(self) -> int:
        return self.m * self.n

    @property
    def n_users(self) -> int:
        return len(self.delays)

    @property
    def n_antennas(self) -> int:
        return self.gains[0].shape[0] if self.gains else 0

    def apply(self, x_dd: np.ndarray) -> np.ndarray:
        """Apply the effective channel to per-user DD vectors (N_u, MN) -> (N_r, MN)."""
        x_dd = np.asarray(x_dd, dtype=complex)
        s = otfs_modulate(x_dd, self.m, self.n)
        return otfs_demodulate(self._gather_forward(s), self.m, self.n)

    def apply_adjoint(self, y_dd: np.ndarray) -> np.ndarray:
        """Adjoint map (N_r, MN) -> (N_u, MN) of :meth:`apply`."""
        y_dd = np.asarray(y_dd, dtype=complex)
        z = otfs_modulate(y_dd, self.m, self.n)      # B_r^H y
        x = self._gather_adjoint(z)
        return otfs_demodulate(x, self.m, self.n)    # B_t^H = B_r

    def _gather_forward(self, s: np.ndarray) -> np.ndarray:
        y = np.zeros((self.n_antennas, self.mn), dtype=complex)
        for ui in range(self.n_users):
            k = len(self.delays[ui])
            if not k:
                continue
            w = self.gains[ui] * s[ui]
            rolled = w.ravel()[self._fwd_flat[ui]].reshape(
                self.n_antennas, k, self.mn)
            y += rolled.sum(axis=1)
        return y

    def _gather_adjoint(self, z: np.ndarray) -> np.ndarray:
        x = np.zeros((self.n_users, self.mn), dtype=complex)
        for ui in range(self.n_users):
            if not len(self.delays[ui]):
                continue
            shifted = z[:, self._bwd[ui]]
            x[ui] = np.einsum("rkm,rkm->m", np.conj(self.gains[ui]), shifted)
        return x

    def apply_from_freq(self, u: np.ndarray) -> np.ndarray:
        """Received DD grid from per-user frequency-domain frames.

        Composing the spreading map with the transmit transform collapses to
        a plain inverse DFT, so the per-user time signal is ifft(u) and only
        one receive transform remains.
        """
        s = np.fft.ifft(np.asarray(u, dtype=complex), axis=-1, norm="ortho")
        return otfs_demodulate(self._gather_forward(s), self.m, self.n)

    def adjoint_to_freq(self, y_dd: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`apply_from_freq`, (N_r, MN) -> (N_u, MN)."""
        z = otfs_modulate(np.asarray(y_dd, dtype=complex), self.m, self.n)
        return np.fft.fft(self._gather_adjoint(z), axis=-1, norm="ortho")

    def to_coo(self, n_r: int, n_u: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Materialize one (antenna, user) operator as (rows, cols, values).

        Entries are grouped by (path, delay bin): for delay l and transmit
        delay bin m_j the N Doppler inputs couple to the N Doppler outputs at
        receive bin (m_j + l) mod M through a circulant block, with an extra
        per-column phase when the shift wraps past the frame edge.
        """
        m, n, mn = self.m, self.n, self.mn
        rows, cols, vals = [], [], []
        dop = np.arange(n)
        for ki, delay in enumerate(self.delays[n_u]):
            delay = int(delay)
            g = self.gains[n_u][n_r, ki, :].reshape(n, m)   # g[t, m_j]
            for mj in range(m):
                m_out = (mj + delay) % m
                wrap = (mj + delay) >= m
                seq = np.roll(g[:, mj], 1) if wrap else g[:, mj]
                spec = np.fft.fft(seq) / n
                block = spec[(dop[:, None] - dop[None, :]) % n]
                if wrap:
                    block = block * np.exp(-2j * np.pi * dop / n)[None, :]
                rows.append((dop[:, None] * m + m_out).repeat(n, axis=1).ravel())
                cols.append((dop[None, :] * m + mj).repeat(n, axis=0).ravel())
                vals.append(block.ravel())
        if not rows:
            return (np.zeros(0, int), np.zeros(0, int), np.zeros(0, complex))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        # duplicate (row, col) pairs occur when two paths share a delay bin
        flat = rows * mn + cols
        order = np.argsort(flat, kind="stable")
        flat, rows, cols, vals = flat[order], rows[order], cols[order], vals[order]
        uniq, inv = np.unique(flat, return_inverse=True)
        summed = np.zeros(uniq.size, dtype=complex)
        np.add.at(summed, inv, vals)
        return uniq // mn, uniq % mn, summed

    def to_dense(self, n_r: int, n_u: int) -> np.ndarray:
        rows, cols, vals = self.to_coo(n_r, n_u)
        h = np.zeros((self.mn, self.mn), dtype=complex)
        h[rows, cols] = vals
        return h


def build_effective_channel(realization, frame: int) -> EffChannel:
    """Effective DD channel B_r H_T B_t of one frame in cyclic-shift form."""
    gains = realization.frame_gains(frame)
    n_u = gains.shape[1]
    delays = [np.asarray(realization.geometry.delays[ui], dtype=int)
              for ui in range(n_u)]
    per_user = [np.ascontiguousarray(gains[:, ui]) for ui in range(n_u)]
    return EffChannel(m=realization.m, n=realization.n, delays=delays,
                      gains=per_user)


def eff_channel_from_gains(gains_full: np.ndarray, support: np.ndarray,
                           m: int, n: int) -> EffChannel:
    """Build an operator from a full-delay-window gain tensor and a support mask.

    ``gains_full`` has shape (N_r, N_u, L, MN) and ``support`` is an
    (N_u, L) boolean mask selecting the active delays per user.
    """
    n_u = gains_full.shape[1]
    delays, per_user = [], []
    for ui in range(n_u):
        idx = np.flatnonzero(support[ui])
        delays.append(idx)
        per_user.append(np.ascontiguousarray(gains_full[:, ui, idx, :]))
    return EffChannel(m=m, n=n, delays=delays, gains=per_user)
