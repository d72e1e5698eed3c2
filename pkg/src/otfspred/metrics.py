"""Link metrics: NMSE, downlink spectral efficiency under zero-forcing
precoding, the spectral-efficiency ratio, and QPSK bit error rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .modem import qpsk_bits

NMSE_FLOOR_DB = -300.0


def nmse(h_true: np.ndarray, h_hat: np.ndarray) -> float:
    """Normalized mean square error in dB, floored at -300 dB.

    An exact match returns the documented -300 dB sentinel instead of
    -infinity so downstream CSV stays numeric.
    """
    h_true = np.asarray(h_true)
    h_hat = np.asarray(h_hat)
    if h_true.shape != h_hat.shape:
        raise ValueError(f"shape mismatch {h_true.shape} vs {h_hat.shape}")
    den = float(np.sum(np.abs(h_true) ** 2))
    if den == 0.0:
        raise ValueError("reference channel has zero energy")
    ratio = float(np.sum(np.abs(h_true - h_hat) ** 2)) / den
    if ratio <= 10.0 ** (NMSE_FLOOR_DB / 10.0):
        return NMSE_FLOOR_DB
    return float(10.0 * np.log10(ratio))


def tf_user_vectors(gains: np.ndarray, m: int) -> np.ndarray:
    """Per-element channel vectors of a frame gain tensor.

    ``gains`` has shape (F, N_r, N_u, L, MN); the channel of time-frequency
    element (symbol s, subcarrier c) is the delay-tap DFT evaluated at the
    symbol midpoint sample.  Returns (F, N, M, N_u, N_r).
    """
    f, n_r, n_u, n_l, mn = gains.shape
    n = mn // m
    mids = np.arange(n) * m + m // 2
    sampled = gains[..., mids]                       # (F, N_r, N_u, L, N)
    h_tf = np.fft.fft(sampled, n=m, axis=3)          # over delay taps
    return h_tf.transpose(0, 4, 3, 2, 1)             # (F, N, M, N_u, N_r)


@dataclass
class SeResult:
    se_per_frame: np.ndarray   # bits/s/Hz per predicted frame
    skipped: int               # rank-deficient elements left out


def dl_se(h_hat_gains: np.ndarray, h_true_gains: np.ndarray, sigma2: float,
          m: int) -> SeResult:
    """Downlink sum spectral efficiency under zero-forcing precoding.

    Precoders come from the predicted per-element user vectors
    (pseudo-inverse across users, unit power per user); the SINR of every
    user is evaluated with the true vectors and averaged over
    time-frequency elements.  Elements whose predicted user matrix loses
    rank are skipped and counted.
    """
    h_hat = tf_user_vectors(h_hat_gains, m)
    h_true = tf_user_vectors(h_true_gains, m)
    f, n, m_bins, n_u, n_r = h_hat.shape
    if n_u > n_r:
        raise ValueError(f"zero-forcing needs N_u <= N_r, got {n_u} > {n_r}")
    flat_hat = h_hat.reshape(-1, n_u, n_r)
    flat_true = h_true.reshape(-1, n_u, n_r)
    se = np.zeros(flat_hat.shape[0])
    ok = np.ones(flat_hat.shape[0], dtype=bool)
    # pseudo-inverse per element; rank loss detected via singular values
    u_svd, s_svd, vh_svd = np.linalg.svd(flat_hat, full_matrices=False)
    tol = np.finfo(float).eps * n_r * s_svd[:, :1]
    ok &= np.all(s_svd > tol, axis=1)
    inv_s = np.where(s_svd > tol, 1.0 / np.where(s_svd > 0, s_svd, 1.0), 0.0)
    w = np.einsum("eij,ej,ekj->eik",
                  np.conj(vh_svd.transpose(0, 2, 1)), inv_s, np.conj(u_svd))
    norms = np.linalg.norm(w, axis=1, keepdims=True)
    ok &= np.all(norms[:, 0, :] > 0, axis=1)
    w = w / np.where(norms > 0, norms, 1.0)
    cross = flat_true @ w                               # (E, N_u, N_u)
    sig = np.abs(np.diagonal(cross, axis1=1, axis2=2)) ** 2
    interf = np.sum(np.abs(cross) ** 2, axis=2) - sig
    sinr = sig / (interf + sigma2)
    se_elems = np.sum(np.log2(1.0 + sinr), axis=1)
    se_elems[~ok] = 0.0
    per_frame = np.zeros(f)
    elems = n * m_bins
    for fi in range(f):
        sl = slice(fi * elems, (fi + 1) * elems)
        valid = ok[sl]
        per_frame[fi] = se_elems[sl][valid].mean() if valid.any() else 0.0
    return SeResult(se_per_frame=per_frame, skipped=int((~ok).sum()))


def aser(se_hat: np.ndarray, se_perfect: np.ndarray) -> float:
    """Ratio of mean achieved to mean perfect-CSI spectral efficiency."""
    se_perfect = np.asarray(se_perfect, dtype=float)
    if se_perfect.size == 0 or se_perfect.mean() <= 0:
        raise ValueError("perfect-CSI spectral efficiency must be positive")
    return float(np.asarray(se_hat, dtype=float).mean() / se_perfect.mean())


def ber(x_hat: np.ndarray, x_true: np.ndarray) -> float:
    """Bit error rate between two Gray-mapped QPSK symbol arrays."""
    bits_hat = qpsk_bits(x_hat)
    bits_true = qpsk_bits(x_true)
    if bits_hat.shape != bits_true.shape:
        raise ValueError("symbol arrays differ in shape")
    return float(np.mean(bits_hat != bits_true))
