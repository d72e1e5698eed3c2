"""Uplink channel estimation: linearized pilot measurements, greedy
block-sparse recovery, local polynomial smoothing and the data-aided
refinement loop with a conjugate-gradient LMMSE detector.

The measurement model couples the per-frame received grid to the spatial/
temporal expansion coefficients: sampling the frequency-domain receive
vector on the Q shifted pilot index sets yields Y = Phi_bar @ S_bar with a
sensing matrix shared by all Q columns.  A per-(delay, column) unit-modulus
phase is absorbed into S_bar so one Phi_bar serves every column; the
conversion back to channel gains undoes it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bases import BasisSet, ce_bem_offsets
from .config import SimConfig
from .modem import qpsk_bits, qpsk_slice
from .otfs import EffChannel, eff_channel_from_gains, otfs_modulate
from .pilots import PilotPattern, pilot_vector


class DegenerateSupportError(RuntimeError):
    """Selected columns became rank deficient; carries the partial result."""

    def __init__(self, message: str, partial: "SparseCoeffs"):
        super().__init__(message)
        self.partial = partial

    def __reduce__(self):
        return (self.__class__, (self.args[0], self.partial))


# ---------------------------------------------------------------------------
# channel block layout
# ---------------------------------------------------------------------------

def stack_channel(gains: np.ndarray) -> np.ndarray:
    """(F, N_r, N_u, L, MN) gain tensor -> (F*MN, N_r*N_u*L) matrix.

    Rows run frame-major then time; columns flatten (antenna, user, delay)
    in C order.  This is the canonical layout shared by the smoother and the
    predictors.
    """
    f, n_r, n_u, n_l, mn = gains.shape
    return gains.transpose(0, 4, 1, 2, 3).reshape(f * mn, n_r * n_u * n_l)


def unstack_channel(matrix: np.ndarray, n_r: int, n_u: int, n_l: int,
                    mn: int) -> np.ndarray:
    """Inverse of :func:`stack_channel`."""
    f = matrix.shape[0] // mn
    return (matrix.reshape(f, mn, n_r, n_u, n_l)
            .transpose(0, 2, 3, 4, 1))


# ---------------------------------------------------------------------------
# sensing operator and measurement formation
# ---------------------------------------------------------------------------

@dataclass
class SensingOperator:
    """Static part of the measurement system for one (pattern, basis) pair."""

    phi: np.ndarray          # (G*N_r, L*N_u*Q_s) sensing matrix, block columns
    phase: np.ndarray        # (Q, L) unit-modulus column phases of S_bar
    d_list: list             # per-user spatial bases (N_r, Q_s)
    q_offsets: np.ndarray    # CE basis integer frequency offsets
    m: int
    n: int
    n_delay: int
    n_users: int
    q_s: int

    def __post_init__(self):
        mn = self.m * self.n
        self.b_raw = np.exp(2j * np.pi * np.outer(np.arange(mn),
                                                  self.q_offsets) / mn)

    @property
    def mn(self) -> int:
        return self.m * self.n

    @property
    def block_width(self) -> int:
        return self.n_users * self.q_s

    def delay_cols(self, l: int) -> np.ndarray:
        start = l * self.block_width
        return np.arange(start, start + self.block_width)

    def sub_cols(self, l: int, n_u: int) -> np.ndarray:
        start = l * self.block_width + n_u * self.q_s
        return np.arange(start, start + self.q_s)


@dataclass
class MeasurementSystem:
    """Observation matrix plus its sensing operator."""

    y: np.ndarray            # (G*N_r, Q)
    sensing: SensingOperator

    def contract_residual(self, s_bar: np.ndarray) -> float:
        """Relative residual ||Y - Phi S_bar||_F / ||Y||_F."""
        return float(np.linalg.norm(self.y - self.sensing.phi @ s_bar)
                     / np.linalg.norm(self.y))


def build_sensing(pattern: PilotPattern, basis: BasisSet,
                  config: SimConfig) -> SensingOperator:
    """Assemble the block-structured sensing matrix shared by all frames."""
    mn, n_delay = config.MN, config.L
    n_r, n_u, q_s = config.N_r, config.N_u, config.Q_s
    g = pattern.p_nz.size
    if basis.B.shape != (mn, config.Q):
        raise ValueError("basis was built for a different configuration")
    if any(d.shape != (n_r, q_s) for d in basis.D):
        raise ValueError("spatial basis dimensions do not match the configuration")
    atoms = np.exp(-2j * np.pi * np.outer(pattern.p_nz, np.arange(n_delay)) / mn)
    phi = np.zeros((n_r * g, n_delay * n_u * q_s), dtype=complex)
    view = phi.reshape(n_r, g, n_delay, n_u, q_s)
    for ui in range(n_u):
        a_u = pattern.pilots[ui][:, None] * atoms                  # (G, L)
        view[:, :, :, ui, :] = np.einsum("rs,gl->rgls", basis.D[ui], a_u)
    offs = ce_bem_offsets(config.Q)
    phase = np.exp(-2j * np.pi * np.outer(offs, np.arange(n_delay)) / mn)
    return SensingOperator(phi=phi, phase=phase, d_list=list(basis.D),
                           q_offsets=offs, m=config.M, n=config.N,
                           n_delay=n_delay, n_users=n_u, q_s=q_s)


def form_measurements(y_dd: np.ndarray, pattern: PilotPattern,
                      sensing: SensingOperator) -> MeasurementSystem:
    """Sample the received grid on the shifted pilot sets.

    ``y_dd`` holds per-antenna received DD vectors, shape (N_r, MN).  The
    centre-offset transform reduces to time domain followed by a full-frame
    DFT, after which column q of Y collects the rows indexed by the q-th
    shifted pilot set, stacked antenna-major.
    """
    y_dd = np.asarray(y_dd, dtype=complex)
    n_r = y_dd.shape[0]
    if y_dd.shape[1] != sensing.mn:
        raise ValueError("received grid does not match the sensing operator")
    y_t = otfs_modulate(y_dd, sensing.m, sensing.n)        # B_r^H y
    y_freq = np.fft.fft(y_t, axis=-1, norm="ortho")
    samples = y_freq[:, pattern.p_q]                       # (N_r, Q, G)
    y = samples.transpose(0, 2, 1).reshape(n_r * pattern.p_nz.size, -1)
    return MeasurementSystem(y=y, sensing=sensing)


# ---------------------------------------------------------------------------
# greedy block-sparse recovery
# ---------------------------------------------------------------------------

@dataclass
class SparseCoeffs:
    """Recovered coefficient matrix and its block support."""

    s_bar: np.ndarray          # (L*N_u*Q_s, Q), zero off the support
    gamma: np.ndarray          # (N_u, L) bool support mask
    common_delays: np.ndarray  # delays recovered as cross-user blocks
    blocks: list               # selection order, ("common", l) / ("individual", l, u)
    residual_trace: list = field(default_factory=list)
    degenerate: bool = False


def _ls_on_support(phi: np.ndarray, y: np.ndarray, cols: np.ndarray):
    sol, _, rank, _ = np.linalg.lstsq(phi[:, cols], y, rcond=None)
    return sol, rank


def _finalize(sensing: SensingOperator, y: np.ndarray, cols: np.ndarray,
              gamma, common, blocks, trace) -> SparseCoeffs:
    s_bar = np.zeros((sensing.phi.shape[1], y.shape[1]), dtype=complex)
    if cols.size:
        sol, rank = _ls_on_support(sensing.phi, y, cols)
        s_bar[cols] = sol
        result = SparseCoeffs(s_bar=s_bar, gamma=gamma,
                              common_delays=np.asarray(common, dtype=int),
                              blocks=blocks, residual_trace=trace)
        if rank < cols.size and np.linalg.norm(y) > 0:
            result.degenerate = True
            raise DegenerateSupportError(
                f"support columns are rank deficient ({rank} < {cols.size})",
                result)
        return result
    return SparseCoeffs(s_bar=s_bar, gamma=gamma,
                        common_delays=np.asarray(common, dtype=int),
                        blocks=blocks, residual_trace=trace)


def _deflated_subblock_energies(sen: SensingOperator, y: np.ndarray,
                                n_picks: int, avail: np.ndarray) -> np.ndarray:
    """Per-(delay, user) coefficient energies from a greedy deflation pass.

    Runs a plain block-greedy selection of up to ``n_picks`` sub-blocks with
    accumulated least squares and returns the energy of the final solution
    per sub-block, shape (L, N_u); unselected sub-blocks read zero.
    """
    n_delay, n_u, q_s = sen.n_delay, sen.n_users, sen.q_s
    phi = sen.phi
    free = avail.copy()
    selected: list = []
    resid = y
    sol = None
    for _ in range(min(n_picks, int(free.sum()))):
        corr = (np.abs(np.conj(phi.T) @ resid) ** 2).reshape(
            n_delay, n_u, q_s, -1).sum(axis=(2, 3))
        corr[~free] = -np.inf
        flat = int(np.argmax(corr))
        sel_l, sel_u = divmod(flat, n_u)
        free[sel_l, sel_u] = False
        selected.append((sel_l, sel_u))
        cols = np.concatenate([sen.sub_cols(l, u) for l, u in selected])
        sol, _, _, _ = np.linalg.lstsq(phi[:, cols], y, rcond=None)
        resid = y - phi[:, cols] @ sol
    energy = np.zeros((n_delay, n_u))
    if sol is not None:
        for bi, (l, u) in enumerate(selected):
            energy[l, u] = float(np.sum(np.abs(sol[bi * q_s:(bi + 1) * q_s]) ** 2))
    return energy


def vbl_somp(system: MeasurementSystem, k: int, k_c: int) -> SparseCoeffs:
    """Greedy recovery with cross-user delay blocks then per-user sub-blocks.

    The first ``k_c`` iterations select whole delay blocks (all users, all
    spatial orders) by summed correlation, the remaining N_u*(k - k_c)
    iterations select per-(delay, user) sub-blocks.  After every selection
    the residual is recomputed from a least-squares fit on the accumulated
    support, so the residual norm never increases.
    """
    if k_c > k:
        raise ValueError(f"common sparsity {k_c} exceeds total sparsity {k}")
    sen = system.sensing
    phi, y = sen.phi, system.y
    n_delay, n_u, q_s = sen.n_delay, sen.n_users, sen.q_s
    gamma = np.zeros((n_u, n_delay), dtype=bool)
    avail_delay = np.ones(n_delay, dtype=bool)
    avail_sub = np.ones((n_delay, n_u), dtype=bool)
    selected: list = []
    blocks: list = []
    common: list = []
    resid = y.copy()
    trace = [float(np.linalg.norm(resid))]

    y_norm = float(np.linalg.norm(y))

    def reproject():
        nonlocal resid
        cols = np.asarray(selected, dtype=int)
        sol, rank = _ls_on_support(phi, y, cols)
        if rank < cols.size and y_norm > 0:
            raise DegenerateSupportError(
                f"support columns are rank deficient ({rank} < {cols.size})",
                _make_partial())
        resid = y - phi[:, cols] @ sol
        trace.append(float(np.linalg.norm(resid)))

    def _make_partial() -> SparseCoeffs:
        s_bar = np.zeros((phi.shape[1], y.shape[1]), dtype=complex)
        cols = np.asarray(selected, dtype=int)
        sol, _, _, _ = np.linalg.lstsq(phi[:, cols], y, rcond=None)
        s_bar[cols] = sol
        return SparseCoeffs(s_bar=s_bar, gamma=gamma,
                            common_delays=np.asarray(common, dtype=int),
                            blocks=blocks, residual_trace=trace, degenerate=True)

    corr_shape = (n_delay, n_u, q_s)
    for _ in range(k_c):
        # A common delay must carry energy for EVERY user, so delay blocks
        # are ranked by their weakest per-user energy.  Raw matched-filter
        # sums cannot see this: the shared-position +-1 pilots couple every
        # user's paths into every other user's sub-blocks at ~1/G energy, a
        # floor only greedy deflation removes (the residual after a
        # least-squares fit is exactly orthogonal to the selected columns,
        # so selected paths cast no cross-shadows).  The per-user energies
        # are therefore read off a provisional deflated sub-block pass.
        energy = _deflated_subblock_energies(sen, resid, n_u * k, avail_sub)
        beta = energy.min(axis=1)
        beta[~avail_delay] = -np.inf
        if not np.any(beta > 0):
            # no delay was recovered for every user; fall back to the total
            # block energy rather than an arbitrary pick
            beta = energy.sum(axis=1)
            beta[~avail_delay] = -np.inf
        sel = int(np.argmax(beta))
        avail_delay[sel] = False
        avail_sub[sel] = False
        gamma[:, sel] = True
        common.append(sel)
        blocks.append(("common", sel))
        selected.extend(sen.delay_cols(sel).tolist())
        reproject()

    for _ in range(n_u * (k - k_c)):
        corr = np.abs(np.conj(phi.T) @ resid).reshape(corr_shape + (-1,)) ** 2
        beta = corr.sum(axis=(2, 3))
        beta[~avail_sub] = -np.inf
        flat = int(np.argmax(beta))           # ties break to lowest delay, then user
        sel_l, sel_u = divmod(flat, n_u)
        avail_sub[sel_l, sel_u] = False
        if not avail_sub[sel_l].any():
            avail_delay[sel_l] = False
        gamma[sel_u, sel_l] = True
        blocks.append(("individual", sel_l, sel_u))
        selected.extend(sen.sub_cols(sel_l, sel_u).tolist())
        reproject()

    return _finalize(sen, y, np.asarray(sorted(selected), dtype=int),
                     gamma, common, blocks, trace)


def somp(system: MeasurementSystem, sparsity: int) -> SparseCoeffs:
    """Column-wise simultaneous greedy recovery (no block structure)."""
    sen = system.sensing
    phi, y = sen.phi, system.y
    n_u, q_s = sen.n_users, sen.q_s
    selected: list = []
    avail = np.ones(phi.shape[1], dtype=bool)
    resid = y.copy()
    trace = [float(np.linalg.norm(resid))]
    for _ in range(sparsity):
        beta = (np.abs(np.conj(phi.T) @ resid) ** 2).sum(axis=1)
        beta[~avail] = -np.inf
        sel = int(np.argmax(beta))
        avail[sel] = False
        selected.append(sel)
        cols = np.asarray(selected, dtype=int)
        sol, rank = _ls_on_support(phi, y, cols)
        if rank < cols.size:
            partial = SparseCoeffs(
                s_bar=_scatter(phi.shape[1], cols, sol, y.shape[1]),
                gamma=_gamma_from_cols(cols, sen), common_delays=np.zeros(0, int),
                blocks=[("column", int(c)) for c in cols],
                residual_trace=trace, degenerate=True)
            raise DegenerateSupportError("rank-deficient support", partial)
        resid = y - phi[:, cols] @ sol
        trace.append(float(np.linalg.norm(resid)))
    cols = np.asarray(sorted(selected), dtype=int)
    gamma = _gamma_from_cols(cols, sen)
    sol, _ = _ls_on_support(phi, y, cols) if cols.size else (np.zeros((0, y.shape[1])), 0)
    return SparseCoeffs(s_bar=_scatter(phi.shape[1], cols, sol, y.shape[1]),
                        gamma=gamma, common_delays=np.zeros(0, int),
                        blocks=[("column", int(c)) for c in cols],
                        residual_trace=trace)


def bsomp(system: MeasurementSystem, block_sparsity: int) -> SparseCoeffs:
    """Fixed-width block greedy recovery over (delay, user) sub-blocks."""
    sen = system.sensing
    phi, y = sen.phi, system.y
    n_delay, n_u, q_s = sen.n_delay, sen.n_users, sen.q_s
    gamma = np.zeros((n_u, n_delay), dtype=bool)
    avail = np.ones((n_delay, n_u), dtype=bool)
    selected: list = []
    blocks: list = []
    resid = y.copy()
    trace = [float(np.linalg.norm(resid))]
    for _ in range(block_sparsity):
        corr = np.abs(np.conj(phi.T) @ resid).reshape(n_delay, n_u, q_s, -1) ** 2
        beta = corr.sum(axis=(2, 3))
        beta[~avail] = -np.inf
        flat = int(np.argmax(beta))
        sel_l, sel_u = divmod(flat, n_u)
        avail[sel_l, sel_u] = False
        gamma[sel_u, sel_l] = True
        blocks.append(("individual", sel_l, sel_u))
        selected.extend(sen.sub_cols(sel_l, sel_u).tolist())
        cols = np.asarray(selected, dtype=int)
        sol, rank = _ls_on_support(phi, y, cols)
        if rank < cols.size:
            partial = SparseCoeffs(
                s_bar=_scatter(phi.shape[1], cols, sol, y.shape[1]),
                gamma=gamma, common_delays=np.zeros(0, int), blocks=blocks,
                residual_trace=trace, degenerate=True)
            raise DegenerateSupportError("rank-deficient support", partial)
        resid = y - phi[:, cols] @ sol
        trace.append(float(np.linalg.norm(resid)))
    cols = np.asarray(sorted(selected), dtype=int)
    sol, _ = _ls_on_support(phi, y, cols) if cols.size else (np.zeros((0, y.shape[1])), 0)
    return SparseCoeffs(s_bar=_scatter(phi.shape[1], cols, sol, y.shape[1]),
                        gamma=gamma, common_delays=np.zeros(0, int),
                        blocks=blocks, residual_trace=trace)


def genie_ls(system: MeasurementSystem, support: np.ndarray) -> SparseCoeffs:
    """Least squares on the true (oracle) support mask, shape (N_u, L)."""
    sen = system.sensing
    cols = []
    for ui in range(sen.n_users):
        for l in np.flatnonzero(support[ui]):
            cols.extend(sen.sub_cols(int(l), ui).tolist())
    cols = np.asarray(sorted(cols), dtype=int)
    gamma = np.asarray(support, dtype=bool).copy()
    return _finalize(sen, system.y, cols, gamma, [], [("genie", -1)], [])


def _scatter(n_rows: int, cols: np.ndarray, sol: np.ndarray, q: int) -> np.ndarray:
    s_bar = np.zeros((n_rows, q), dtype=complex)
    if cols.size:
        s_bar[cols] = sol
    return s_bar


def _gamma_from_cols(cols: np.ndarray, sen: SensingOperator) -> np.ndarray:
    gamma = np.zeros((sen.n_users, sen.n_delay), dtype=bool)
    for c in cols:
        l, rem = divmod(int(c), sen.block_width)
        gamma[rem // sen.q_s, l] = True
    return gamma


# ---------------------------------------------------------------------------
# coefficient-to-channel synthesis
# ---------------------------------------------------------------------------

def coeffs_to_channel(coeffs: SparseCoeffs, sensing: SensingOperator) -> np.ndarray:
    """Reconstruct per-path gain sequences from recovered coefficients.

    Returns gains of shape (N_r, N_u, L, MN); delays off the recovered
    support stay exactly zero.  Undoes the per-(delay, column) phase folded
    into S_bar by the measurement construction.
    """
    sen = sensing
    mn = sen.mn
    n_r = sen.d_list[0].shape[0]
    q = sen.q_offsets.size
    b_raw = sen.b_raw
    gains = np.zeros((n_r, sen.n_users, sen.n_delay, mn), dtype=complex)
    s = coeffs.s_bar.reshape(sen.n_delay, sen.n_users, sen.q_s, q)
    for ui in range(sen.n_users):
        active = np.flatnonzero(coeffs.gamma[ui])
        if active.size == 0:
            continue
        s_u = s[active, ui] * np.conj(sen.phase.T[active])[:, None, :]  # (K, Qs, Q)
        c_u = np.einsum("rs,ksq->rkq", sen.d_list[ui], s_u)             # (N_r, K, Q)
        gains[:, ui, active, :] = np.einsum("rkq,tq->rkt", c_u, b_raw)
    return gains


# ---------------------------------------------------------------------------
# local polynomial smoothing
# ---------------------------------------------------------------------------

def sg_smooth(h: np.ndarray, n_sg: int, q_sg: int) -> np.ndarray:
    """Polynomial smoothing of every column along its time axis.

    Interior rows are re-evaluated at the centre of a symmetric window of
    2*n_sg+1 samples; the first and last n_sg rows reuse the fit of the
    first/last full window, evaluated at their true offsets.
    """
    h = np.asarray(h)
    t = h.shape[0]
    window = 2 * n_sg + 1
    if q_sg >= window:
        raise ValueError(f"order {q_sg} needs window > order, got {window}")
    if t < window:
        raise ValueError(f"need at least {window} rows, got {t}")
    offsets = np.arange(-n_sg, n_sg + 1, dtype=float)
    basis = offsets[:, None] ** np.arange(q_sg + 1)[None, :]
    proj = basis @ np.linalg.pinv(basis)          # window projection matrix
    mid = proj[n_sg]
    flat = h.reshape(t, -1)
    out = np.empty_like(flat, dtype=complex)
    interior = np.zeros((t - window + 1, flat.shape[1]), dtype=complex)
    for j in range(window):
        interior += mid[j] * flat[j:j + t - window + 1]
    out[n_sg:t - n_sg] = interior
    out[:n_sg] = (proj @ flat[:window])[:n_sg]
    out[t - n_sg:] = (proj @ flat[t - window:])[n_sg + 1:]
    return out.reshape(h.shape)


def _smooth_active(mat: np.ndarray, gamma: np.ndarray, n_r: int,
                   n_sg: int, q_sg: int) -> np.ndarray:
    """Smooth only the support columns; zero columns stay exactly zero."""
    mask = np.broadcast_to(gamma[None], (n_r,) + gamma.shape).ravel()
    out = mat.astype(complex, copy=True)
    if mask.any():
        out[:, mask] = sg_smooth(mat[:, mask], n_sg, q_sg)
    return out


def sg_smooth_adaptive(h: np.ndarray, n_sg: int, q_sg: int) -> np.ndarray:
    """Smoothing that shrinks its window (and order) on short inputs.

    With fewer rows than the nominal window the half-window drops to
    (rows-1)//2 and the order is capped at window-1; once the fit becomes
    an interpolation the data passes through unchanged.
    """
    h = np.asarray(h)
    t = h.shape[0]
    n_eff = min(n_sg, (t - 1) // 2)
    if n_eff < 1:
        return h.astype(complex, copy=True)
    q_eff = min(q_sg, 2 * n_eff)
    if q_eff + 1 >= 2 * n_eff + 1:
        return h.astype(complex, copy=True)
    return sg_smooth(h, n_eff, q_eff)


# ---------------------------------------------------------------------------
# LMMSE data detection via conjugate gradient
# ---------------------------------------------------------------------------

@dataclass
class DetectionResult:
    soft: np.ndarray       # (N_u, N_data) equalized symbols
    hard: np.ndarray       # (N_u, N_data) sliced QPSK decisions
    converged: bool
    iterations: int


def lmmse_detect(y_d: np.ndarray, eff: EffChannel, pattern: PilotPattern,
                 snr_d: float, i_cg: int = 20, tol: float = 1e-8) -> DetectionResult:
    """Joint LMMSE detection of all users' payload symbols.

    Solves (A^H A + snr_d I) x = A^H y with conjugate gradient, where A maps
    payload symbols through the spreading transform and the estimated
    effective channel; every matrix product is evaluated through the
    channel's cyclic-shift structure instead of a dense matrix.
    """
    data_idx = pattern.data_idx
    n_u = eff.n_users

    def forward(x):
        u = np.zeros((n_u, pattern.mn), dtype=complex)
        u[:, data_idx] = x
        return eff.apply_from_freq(u)

    def backward(y):
        return eff.adjoint_to_freq(y)[:, data_idx]

    def gram(x):
        return backward(forward(x)) + snr_d * x

    b = backward(np.asarray(y_d, dtype=complex))
    x = np.zeros_like(b)
    r = b - gram(x)
    p = r.copy()
    rs = float(np.vdot(r, r).real)
    b_norm = float(np.linalg.norm(b)) or 1.0
    converged = False
    iterations = 0
    for it in range(i_cg):
        iterations = it + 1
        gp = gram(p)
        denom = float(np.vdot(p, gp).real)
        if denom <= 0.0:
            break
        alpha = rs / denom
        x += alpha * p
        r -= alpha * gp
        rs_new = float(np.vdot(r, r).real)
        if np.sqrt(rs_new) / b_norm < tol:
            converged = True
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return DetectionResult(soft=x, hard=qpsk_slice(x), converged=converged,
                           iterations=iterations)


# ---------------------------------------------------------------------------
# per-frame refinement loop and the N_t-frame estimator
# ---------------------------------------------------------------------------

@dataclass
class FrameTruth:
    """Ground truth of one frame for trace metrics."""

    gains_full: np.ndarray   # (N_r, N_u, L, MN)
    data: np.ndarray         # (N_u, N_data) transmitted payload


@dataclass
class FrameEstimate:
    gains: np.ndarray        # coarse reconstruction (N_r, N_u, L, MN)
    support: np.ndarray      # (N_u, L) bool
    coeffs: SparseCoeffs
    detected: np.ndarray | None
    nmse_trace: list
    ber_trace: list


@dataclass
class UlEstimate:
    """Stacked N_t-frame uplink estimate with iteration traces."""

    h_coarse: np.ndarray     # (N_t*MN, N_r*N_u*L)
    h_smoothed: np.ndarray   # same layout, after cross-frame smoothing
    support: np.ndarray      # (N_u, L) union support
    nmse_trace: np.ndarray   # per-iteration NMSE (dB), frame-averaged
    ber_trace: np.ndarray    # per-iteration BER, frame-averaged
    frames: list             # per-frame FrameEstimate
    runtime_s: float = 0.0


def trace_to_csv(estimate: "UlEstimate") -> str:
    """Per-iteration trace as CSV rows ``iter,nmse_db,ber``."""
    lines = ["iter,nmse_db,ber"]
    n = max(estimate.nmse_trace.size, estimate.ber_trace.size)
    for i in range(n):
        nm = (f"{estimate.nmse_trace[i]:.10g}"
              if i < estimate.nmse_trace.size else "")
        b = (f"{estimate.ber_trace[i]:.10g}"
             if i < estimate.ber_trace.size else "")
        lines.append(f"{i},{nm},{b}")
    return "\n".join(lines) + "\n"


def _recover(system: MeasurementSystem, config: SimConfig, algorithm: str,
             support_true: np.ndarray | None) -> SparseCoeffs:
    try:
        if algorithm == "vbl":
            return vbl_somp(system, config.K, config.K_C)
        if algorithm == "somp":
            return somp(system, config.N_u * config.K * config.Q_s)
        if algorithm == "bsomp":
            return bsomp(system, config.N_u * config.K)
        if algorithm == "genie":
            if support_true is None:
                raise ValueError("genie recovery requires the true support")
            return genie_ls(system, support_true)
    except DegenerateSupportError as exc:
        # ill-posed sweeps (too few pilots, aliased sampling) continue with
        # the flagged minimum-norm partial solution
        return exc.partial
    raise ValueError(f"unknown recovery algorithm {algorithm!r}")


def iterative_refine(y_dd: np.ndarray, pattern: PilotPattern,
                     sensing: SensingOperator, config: SimConfig,
                     sigma2: float, truth: FrameTruth | None = None,
                     algorithm: str = "vbl",
                     support_true: np.ndarray | None = None) -> FrameEstimate:
    """Alternate channel estimation, interference cancellation and detection.

    Iteration 0 estimates from the raw grid, treating payload leakage as
    noise.  Later iterations subtract the detected payload's contribution
    (through the current smoothed channel) from the pilot observation and
    re-estimate, then subtract the pilot contribution and re-detect.  Stops
    after I_max refinements or once the relative BER change drops below
    ``config.ber_stop_rel`` (truth permitting).
    """
    mn = config.MN
    u_pilot = np.stack([pilot_vector(pattern, ui) for ui in range(config.N_u)])

    true_bits = qpsk_bits(truth.data) if truth is not None else None
    y_p = y_dd
    nmse_trace: list = []
    ber_trace: list = []
    est = None
    for it in range(config.I_max + 1):
        system = form_measurements(y_p, pattern, sensing)
        coeffs = _recover(system, config, algorithm, support_true)
        gains = coeffs_to_channel(coeffs, sensing)
        smooth = unstack_channel(
            _smooth_active(stack_channel(gains[None]), coeffs.gamma,
                           config.N_r, config.N_sg, config.Q_sg),
            config.N_r, config.N_u, config.L, mn)[0]
        eff = eff_channel_from_gains(smooth, coeffs.gamma, config.M, config.N)
        y_data = y_dd - eff.apply_from_freq(u_pilot)
        det = lmmse_detect(y_data, eff, pattern, snr_d=sigma2, i_cg=config.I_CG)
        est = FrameEstimate(gains=gains, support=coeffs.gamma, coeffs=coeffs,
                            detected=det.hard, nmse_trace=nmse_trace,
                            ber_trace=ber_trace)
        if truth is not None:
            num = np.sum(np.abs(truth.gains_full - smooth) ** 2)
            den = np.sum(np.abs(truth.gains_full) ** 2)
            nmse_trace.append(10 * np.log10(max(num / den, 1e-30)))
            errs = np.sum(qpsk_bits(det.hard) != true_bits)
            ber_trace.append(errs / true_bits.size)
            if (len(ber_trace) >= 2 and ber_trace[-2] > 0
                    and abs(ber_trace[-1] - ber_trace[-2]) / ber_trace[-2]
                    < config.ber_stop_rel):
                break
        if it < config.I_max:
            u_data = np.zeros((config.N_u, mn), dtype=complex)
            u_data[:, pattern.data_idx] = det.hard
            y_p = y_dd - eff.apply_from_freq(u_data)
    return est


def estimate_uplink(rx_frames: np.ndarray, pattern: PilotPattern,
                    basis: BasisSet, config: SimConfig, sigma2: float,
                    truths: list | None = None, algorithm: str = "vbl",
                    support_true: np.ndarray | None = None) -> UlEstimate:
    """Estimate all N_t uplink frames and smooth the stacked result.

    ``rx_frames`` has shape (N_t, N_r, MN).  The frames form one multiple-
    measurement system: delay supports are constant over the frame burst, so
    the per-frame observation matrices are concatenated column-wise and the
    block support is recovered once over all of them, which makes the
    support decisions far more robust against per-frame fades.  Detection
    and interference cancellation then run per frame, and the whole batch
    iterates ``I_max`` times.
    """
    started = time.perf_counter()
    sensing = build_sensing(pattern, basis, config)
    n_t = rx_frames.shape[0]
    mn, q = config.MN, config.Q
    u_pilot = np.stack([pilot_vector(pattern, ui) for ui in range(config.N_u)])
    true_bits = ([qpsk_bits(t.data) for t in truths]
                 if truths is not None else None)

    y_p = rx_frames.copy()
    nmse_trace: list = []
    ber_trace: list = []
    gains = None
    coeffs = None
    detected = None
    for it in range(config.I_max + 1):
        y_joint = np.concatenate(
            [form_measurements(y_p[fi], pattern, sensing).y
             for fi in range(n_t)], axis=1)
        joint = MeasurementSystem(y=y_joint, sensing=sensing)
        coeffs = _recover(joint, config, algorithm, support_true)
        gains = np.stack([
            coeffs_to_channel(
                SparseCoeffs(s_bar=coeffs.s_bar[:, fi * q:(fi + 1) * q],
                             gamma=coeffs.gamma,
                             common_delays=coeffs.common_delays,
                             blocks=coeffs.blocks), sensing)
            for fi in range(n_t)])
        smooth = unstack_channel(
            _smooth_active(stack_channel(gains), coeffs.gamma, config.N_r,
                           config.N_sg, config.Q_sg),
            config.N_r, config.N_u, config.L, mn)
        detected = []
        errs, bits = 0, 0
        for fi in range(n_t):
            eff = eff_channel_from_gains(smooth[fi], coeffs.gamma,
                                         config.M, config.N)
            y_data = rx_frames[fi] - eff.apply_from_freq(u_pilot)
            det = lmmse_detect(y_data, eff, pattern, snr_d=sigma2,
                               i_cg=config.I_CG)
            detected.append(det.hard)
            if true_bits is not None:
                errs += np.sum(qpsk_bits(det.hard) != true_bits[fi])
                bits += true_bits[fi].size
            if it < config.I_max:
                u_data = np.zeros((config.N_u, mn), dtype=complex)
                u_data[:, pattern.data_idx] = det.hard
                y_p[fi] = rx_frames[fi] - eff.apply_from_freq(u_data)
        if truths is not None:
            num = sum(np.sum(np.abs(truths[fi].gains_full - smooth[fi]) ** 2)
                      for fi in range(n_t))
            den = sum(np.sum(np.abs(truths[fi].gains_full) ** 2)
                      for fi in range(n_t))
            nmse_trace.append(10 * np.log10(max(num / den, 1e-30)))
            ber_trace.append(errs / max(bits, 1))
            if (len(ber_trace) >= 2 and ber_trace[-2] > 0
                    and abs(ber_trace[-1] - ber_trace[-2]) / ber_trace[-2]
                    < config.ber_stop_rel):
                break

    h_coarse = stack_channel(gains)
    h_smoothed = _smooth_active(h_coarse, coeffs.gamma, config.N_r,
                                config.N_sg, config.Q_sg)
    frames = [FrameEstimate(gains=gains[fi], support=coeffs.gamma,
                            coeffs=coeffs, detected=detected[fi],
                            nmse_trace=nmse_trace, ber_trace=ber_trace)
              for fi in range(n_t)]
    width = config.I_max + 1
    pad = (lambda tr: np.asarray(list(tr) + [tr[-1]] * (width - len(tr)))
           if tr else np.zeros(0))
    return UlEstimate(h_coarse=h_coarse, h_smoothed=h_smoothed,
                      support=coeffs.gamma.copy(),
                      nmse_trace=pad(nmse_trace), ber_trace=pad(ber_trace),
                      frames=frames, runtime_s=time.perf_counter() - started)
