"""Gray-mapped QPSK helpers."""

from __future__ import annotations

import numpy as np

_SCALE = 1.0 / np.sqrt(2.0)


def qpsk_modulate(bits: np.ndarray) -> np.ndarray:
    """Map bit pairs (..., 2) to Gray QPSK symbols (+-1 +-1j)/sqrt(2).

    Bit 0 selects the sign of the real part, bit 1 the sign of the
    imaginary part (0 -> +, 1 -> -), so adjacent symbols differ in one bit.
    """
    bits = np.asarray(bits)
    re = 1.0 - 2.0 * bits[..., 0]
    im = 1.0 - 2.0 * bits[..., 1]
    return _SCALE * (re + 1j * im)


def qpsk_random(rng: np.random.Generator, n: int) -> np.ndarray:
    return qpsk_modulate(rng.integers(0, 2, size=(n, 2)))


def qpsk_slice(soft: np.ndarray) -> np.ndarray:
    """Hard decision to the nearest QPSK constellation point."""
    soft = np.asarray(soft)
    return _SCALE * (np.where(soft.real >= 0, 1.0, -1.0)
                     + 1j * np.where(soft.imag >= 0, 1.0, -1.0))


def qpsk_bits(symbols: np.ndarray) -> np.ndarray:
    """Inverse of qpsk_modulate on sliced symbols, shape (..., 2)."""
    symbols = np.asarray(symbols)
    return np.stack([(symbols.real < 0).astype(np.int8),
                     (symbols.imag < 0).astype(np.int8)], axis=-1)
