"""Expansion bases: complex exponentials, rotated spatial DFT, Slepian
sequences, discrete Legendre polynomials and the local polynomial smoother
design matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


def ce_bem(mn: int, q_order: int) -> np.ndarray:
    """Complex-exponential basis, columns exp(j*w_q*n)/sqrt(mn).

    Frequencies w_q = 2*pi*(q - (Q-1)/2)/mn are centered around DC so the
    middle column is constant.  Columns are orthonormal.
    """
    if q_order % 2 == 0:
        raise ValueError(f"basis order must be odd, got {q_order}")
    if q_order > mn:
        raise ValueError(f"basis order {q_order} exceeds length {mn}")
    n = np.arange(mn)
    d = np.arange(q_order) - (q_order - 1) // 2
    return np.exp(2j * np.pi * np.outer(n, d) / mn) / np.sqrt(mn)


def ce_bem_offsets(q_order: int) -> np.ndarray:
    """Integer frequency offsets q - (Q-1)/2 of the exponential basis."""
    return np.arange(q_order) - (q_order - 1) // 2


def slepian_basis(mn: int, nu: float, q_sp: int) -> tuple[np.ndarray, np.ndarray]:
    """Leading eigenvectors of the band-limiting sinc kernel.

    The kernel is D(n, m) = sin(2*pi*nu*(n-m)) / (pi*(n-m)) with diagonal
    2*nu; its top eigenvectors are the length-``mn`` Slepian sequences for
    normalized half-bandwidth ``nu``.  Returns (basis, eigenvalues) with
    eigenvalues sorted descending; eigenvector signs are fixed so the
    largest-magnitude entry is positive.
    """
    if not 0.0 < nu < 0.5:
        raise ValueError(f"normalized bandwidth must lie in (0, 0.5), got {nu}")
    if not 1 <= q_sp <= mn:
        raise ValueError(f"need 1 <= q_sp <= mn, got q_sp={q_sp}, mn={mn}")
    d = np.arange(mn)[:, None] - np.arange(mn)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        kernel = np.sin(2 * np.pi * nu * d) / (np.pi * d)
    np.fill_diagonal(kernel, 2.0 * nu)
    vals, vecs = scipy.linalg.eigh(kernel, subset_by_index=[mn - q_sp, mn - 1])
    vals = vals[::-1]
    vecs = vecs[:, ::-1]
    for k in range(q_sp):
        if vecs[np.argmax(np.abs(vecs[:, k])), k] < 0:
            vecs[:, k] = -vecs[:, k]
    return np.ascontiguousarray(vecs), vals


def dlp_basis(n_points: int, q_dlp: int) -> np.ndarray:
    """Legendre polynomials sampled on a uniform grid spanning [-1, 1].

    Column q holds phi_q evaluated at t_n = 2*(n-1)/(n_points-1) - 1 with
    the recursion phi_{q+1} = ((2q+1) t phi_q - q phi_{q-1}) / (q+1).
    """
    if n_points < 2:
        raise ValueError(f"need at least 2 points, got {n_points}")
    t = 2.0 * np.arange(n_points) / (n_points - 1) - 1.0
    return dlp_eval(t, q_dlp)


def dlp_eval(t: np.ndarray, q_dlp: int) -> np.ndarray:
    """Evaluate the first q_dlp Legendre polynomials at arbitrary points."""
    t = np.asarray(t, dtype=float)
    cols = [np.ones_like(t)]
    if q_dlp > 1:
        cols.append(t.copy())
    for q in range(1, q_dlp - 1):
        cols.append(((2 * q + 1) * t * cols[q] - q * cols[q - 1]) / (q + 1))
    return np.stack(cols[:q_dlp], axis=-1)


def sg_basis(n_sg: int, q_sg: int) -> np.ndarray:
    """Polynomial design matrix of the smoothing window.

    Row i (i = -n_sg..n_sg) is [1, i, i**2, ..., i**q_sg]; the center row is
    the first unit vector, so evaluating a fit at offset 0 returns the
    constant coefficient.
    """
    if q_sg >= 2 * n_sg + 1:
        raise ValueError(
            f"polynomial order {q_sg} requires window 2*n_sg+1 > order, "
            f"got n_sg={n_sg}")
    offsets = np.arange(-n_sg, n_sg + 1, dtype=float)
    return offsets[:, None] ** np.arange(q_sg + 1)[None, :]


def rotated_dft(n_r: int, theta: float) -> np.ndarray:
    """Spatial dictionary diag(r(theta)) @ F^H with unit-modulus rotation r."""
    rot = np.exp(1j * theta * np.arange(n_r))
    f_h = np.conj(np.fft.fft(np.eye(n_r))) / np.sqrt(n_r)
    return rot[:, None] * f_h


def sr_bem_rotation(coarse: np.ndarray, n_r: int, q_s: int,
                    grid_size: int = 64) -> tuple[float, np.ndarray, np.ndarray]:
    """Rotation-angle search for the spatial basis of one user.

    Parameters
    ----------
    coarse : array (..., n_r)
        Coarse per-(path, basis-order) spatial coefficient vectors; the
        leading axes are flattened.
    q_s : int
        Number of dictionary columns to keep.
    grid_size : int
        Number of uniformly spaced candidate angles covering
        [-pi/n_r, pi/n_r); the grid always contains 0 and ties break toward
        the smallest |angle|.

    Returns
    -------
    (theta, D, selected) : optimal angle, n_r x q_s basis with orthonormal
    columns, and the selected column indices.
    """
    if grid_size < 2:
        raise ValueError(f"grid_size must be >= 2, got {grid_size}")
    c = np.asarray(coarse, dtype=complex).reshape(-1, n_r)
    half = grid_size // 2
    grid = (np.arange(grid_size) - half) * (np.pi / n_r) / half
    order = np.argsort(np.abs(grid), kind="stable")  # tie-break: smallest |theta|
    total = float(np.sum(np.abs(c) ** 2))
    best = None
    for gi in order:
        theta = grid[gi]
        atoms = rotated_dft(n_r, theta)
        s = c @ np.conj(atoms)              # rows: coarse vectors, cols: atoms
        energy = np.sum(np.abs(s) ** 2, axis=0)
        sel = np.sort(np.argsort(energy)[::-1][:q_s])
        resid = total - float(np.sum(energy[sel]))
        if best is None or resid < best[0] - 1e-12 * max(total, 1.0):
            best = (resid, theta, sel)
    _, theta, sel = best
    return float(theta), rotated_dft(n_r, theta)[:, sel], sel


def bem_modeling_error(h: np.ndarray, basis: np.ndarray) -> float:
    """Relative energy of a channel block outside the span of an orthonormal basis.

    Computes ||(I - B B^H) H||_F^2 / ||H||_F^2 columnwise.
    """
    h = np.asarray(h, dtype=complex)
    flat = h.reshape(h.shape[0], -1) if h.ndim > 1 else h[:, None]
    denom = float(np.sum(np.abs(flat) ** 2))
    if denom == 0.0:
        raise ValueError("channel block has zero energy")
    resid = flat - basis @ (np.conj(basis.T) @ flat)
    return float(np.sum(np.abs(resid) ** 2)) / denom


@dataclass
class BasisSet:
    """All expansion bases used by one configuration.

    Attributes
    ----------
    B : complex (MN, Q) orthonormal exponential basis.
    D : list of per-user (N_r, Q_s) spatial bases with orthonormal columns.
    theta : per-user optimal rotation angles.
    B_SP : real (MN, Q_SP) Slepian basis, chi its eigenvalues.
    Omega : real (N_t, Q_DLP) Legendre fitting matrix.
    B_SG : real smoothing design matrix.
    """

    B: np.ndarray
    D: list
    theta: list
    B_SP: np.ndarray
    chi: np.ndarray
    Omega: np.ndarray
    B_SG: np.ndarray


def coarse_spatial_coefficients(gains_frame: np.ndarray, basis_b: np.ndarray,
                                noise_db: float, rng: np.random.Generator) -> np.ndarray:
    """Per-user coarse coefficient vectors from a perturbed first-frame channel.

    gains_frame has shape (N_r, N_u, n_paths, MN).  A complex Gaussian
    perturbation at ``noise_db`` relative to unit path power models the
    quality of a preamble-based coarse estimate.  Returns an array of shape
    (N_u, n_paths, Q, N_r).
    """
    sigma = np.sqrt(10.0 ** (noise_db / 10.0) / 2.0)
    noisy = gains_frame + sigma * (rng.standard_normal(gains_frame.shape)
                                   + 1j * rng.standard_normal(gains_frame.shape))
    # project every gain sequence onto the exponential basis
    coef = np.tensordot(noisy, np.conj(basis_b), axes=([3], [0]))  # (N_r, N_u, P, Q)
    return coef.transpose(1, 2, 3, 0)  # (N_u, P, Q, N_r)


def build_basis_set(config, realization=None, rng=None) -> BasisSet:
    """Construct every basis required by ``config``.

    When ``realization`` is given, the per-user spatial bases are obtained
    from a rotation search on coarse (perturbed first-frame) estimates;
    otherwise the unrotated dictionary truncated to its first Q_s columns is
    used.
    """
    mn = config.MN
    b = ce_bem(mn, config.Q)
    b_sp, chi = slepian_basis(mn, config.nu, config.Q_SP)
    omega = dlp_basis(config.N_t, config.Q_DLP) if config.N_t >= 2 else np.ones((config.N_t, 1))
    b_sg = sg_basis(config.N_sg, config.Q_sg)
    d_list, theta_list = [], []
    if realization is not None:
        if rng is None:
            rng = np.random.default_rng(config.seed)
        coarse = coarse_spatial_coefficients(
            realization.frame_gains(0), b, config.coarse_noise_db, rng)
        for nu_i in range(config.N_u):
            theta, d_mat, _ = sr_bem_rotation(coarse[nu_i], config.N_r, config.Q_s)
            d_list.append(d_mat)
            theta_list.append(theta)
    else:
        for _ in range(config.N_u):
            d_list.append(rotated_dft(config.N_r, 0.0)[:, :config.Q_s])
            theta_list.append(0.0)
    return BasisSet(B=b, D=d_list, theta=theta_list, B_SP=b_sp, chi=chi,
                    Omega=omega, B_SG=b_sg)
