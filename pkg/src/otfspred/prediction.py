"""Downlink channel prediction by iterative extrapolation of Slepian
coefficients, plus autoregressive and exponential-fit baselines.

Per frame the channel matrix is compressed onto the Slepian basis; the
resulting per-(column, order) coefficient trajectories are fitted with
Legendre polynomials, extrapolated one prediction step at a time, smoothed,
and refitted, so every new prediction benefits from the whole trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bases import dlp_eval
from .estimation import sg_smooth_adaptive


def slepian_fit(h_ul: np.ndarray, b_sp: np.ndarray) -> np.ndarray:
    """Per-frame Slepian coefficients of a stacked channel matrix.

    ``h_ul`` has shape (N_t*MN, C); returns (N_t, C*Q_SP) where row n_t
    flattens that frame's (C, Q_SP) coefficient block in C order.
    """
    mn, q_sp = b_sp.shape
    if h_ul.shape[0] % mn:
        raise ValueError("row count is not a multiple of the basis length")
    n_t = h_ul.shape[0] // mn
    frames = h_ul.reshape(n_t, mn, -1)
    coeff = np.einsum("nq,fnc->fcq", b_sp, frames)       # (N_t, C, Q_SP)
    return coeff.reshape(n_t, -1)


def reconstruct_dl(c_rows: np.ndarray, b_sp: np.ndarray) -> np.ndarray:
    """Rebuild stacked channel frames from coefficient rows.

    Inverse layout of :func:`slepian_fit`: ``c_rows`` has shape
    (F, C*Q_SP), the result (F*MN, C).
    """
    mn, q_sp = b_sp.shape
    f = c_rows.shape[0]
    coeff = c_rows.reshape(f, -1, q_sp)                   # (F, C, Q_SP)
    frames = np.einsum("nq,fcq->fnc", b_sp, coeff)        # (F, MN, C)
    return frames.reshape(f * mn, -1)


@dataclass
class SbeeResult:
    predicted_rows: np.ndarray   # (N_f, C*Q_SP) coefficient rows
    trajectory: np.ndarray       # full smoothed trajectory (N_t+N_f, C*Q_SP)


def sbee_extrapolate(c_sp: np.ndarray, n_f: int, delta: int, q_dlp: int,
                     n_sg: int, q_sg: int) -> SbeeResult:
    """Iteratively extend coefficient trajectories by ``n_f`` rows.

    Each round fits Legendre polynomials to the current trajectory,
    evaluates the fitted polynomials ``delta`` steps past the end of the
    fitting grid, appends the new rows, smooths the whole trajectory and
    refits on a grid renormalized to the new length.  Row fits and
    extrapolation are least-squares in the polynomial coefficients, so
    trajectories that are polynomials of degree < min(q_dlp, q_sg+1)
    round-trip exactly.
    """
    c_sp = np.asarray(c_sp, dtype=complex)
    n_t = c_sp.shape[0]
    if n_f % delta:
        raise ValueError(f"n_f={n_f} is not divisible by delta={delta}")
    if q_dlp > n_t:
        raise ValueError(f"fitting order {q_dlp} exceeds {n_t} trajectory rows")
    traj = c_sp.copy()
    t_len = n_t
    grid = 2.0 * np.arange(t_len) / (t_len - 1) - 1.0
    coeff = np.linalg.lstsq(dlp_eval(grid, q_dlp), traj, rcond=None)[0]
    for _ in range(n_f // delta):
        new_len = t_len + delta
        # evaluate the current fit past the end of its own grid
        t_ext = 2.0 * np.arange(t_len, new_len) / (t_len - 1) - 1.0
        traj = np.vstack([traj, dlp_eval(t_ext, q_dlp) @ coeff])
        traj = sg_smooth_adaptive(traj, n_sg, q_sg)
        grid = 2.0 * np.arange(new_len) / (new_len - 1) - 1.0
        coeff = np.linalg.lstsq(dlp_eval(grid, q_dlp), traj, rcond=None)[0]
        t_len = new_len
    return SbeeResult(predicted_rows=traj[n_t:], trajectory=traj)


def trajectory_to_csv(result: SbeeResult) -> str:
    """Full smoothed coefficient trajectory as CSV (row index + re/im pairs)."""
    n_cols = result.trajectory.shape[1]
    header = ["row"] + [f"c{j}_{p}" for j in range(n_cols) for p in ("re", "im")]
    lines = [",".join(header)]
    for i, row in enumerate(result.trajectory):
        cells = [str(i)]
        for v in row:
            cells.append(f"{v.real:.10g}")
            cells.append(f"{v.imag:.10g}")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


@dataclass
class DlPrediction:
    """Predicted downlink frames in the stacked channel layout."""

    h_dl: np.ndarray             # (N_f*MN, C)
    predictor: str
    params: dict


def sbee_predict(h_ul: np.ndarray, b_sp: np.ndarray, n_f: int, delta: int,
                 q_dlp: int, n_sg: int, q_sg: int) -> DlPrediction:
    """Full smoothed-extrapolation predictor from a stacked uplink estimate."""
    c_sp = slepian_fit(h_ul, b_sp)
    res = sbee_extrapolate(c_sp, n_f, delta, q_dlp, n_sg, q_sg)
    return DlPrediction(h_dl=reconstruct_dl(res.predicted_rows, b_sp),
                        predictor="sbee",
                        params={"q_dlp": q_dlp, "delta": delta,
                                "n_sg": n_sg, "q_sg": q_sg})


def ar_fit_forecast(series: np.ndarray, order: int, n_ahead: int,
                    ridge: float = 0.0) -> tuple[np.ndarray, bool]:
    """Least-squares AR fit and recursive forecast of one or more series.

    ``series`` has shape (T, C).  Returns (forecast (n_ahead, C), flagged)
    where ``flagged`` reports a regularized refit after an ill-conditioned
    least-squares system.
    """
    x = np.asarray(series, dtype=complex)
    t = x.shape[0]
    p = min(order, t - 1)
    if p < 1:
        return np.repeat(x[-1:], n_ahead, axis=0), False
    flagged = False
    fc = np.empty((n_ahead, x.shape[1]), dtype=complex)
    for ci in range(x.shape[1]):
        col = x[:, ci]
        rows = np.stack([col[p - 1 - i:t - 1 - i] for i in range(p)], axis=1)
        target = col[p:]
        gram = np.conj(rows.T) @ rows
        rhs = np.conj(rows.T) @ target
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > 1e12:
            flagged = True
            gram = gram + (ridge or 1e-6 * np.trace(gram).real / p
                           or 1e-12) * np.eye(p)
        try:
            a = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            flagged = True
            a = np.linalg.lstsq(gram, rhs, rcond=None)[0]
        hist = col.copy()
        for k in range(n_ahead):
            nxt = np.dot(a, hist[-1:-p - 1:-1])
            hist = np.append(hist, nxt)
        fc[:, ci] = hist[t:]
    return fc, flagged


def ar_predict(h_ul: np.ndarray, b_sp: np.ndarray, n_f: int,
               order: int) -> DlPrediction:
    """Autoregressive baseline on the Slepian coefficient trajectories."""
    c_sp = slepian_fit(h_ul, b_sp)
    fc, flagged = ar_fit_forecast(c_sp, order, n_f)
    return DlPrediction(h_dl=reconstruct_dl(fc, b_sp), predictor="ar",
                        params={"order": order, "regularized": flagged})


def prony_fit_forecast(series: np.ndarray, order: int,
                       n_ahead: int) -> tuple[np.ndarray, bool]:
    """Exponential-model extrapolation of one or more series.

    Linear-prediction coefficients are fitted by least squares, the poles
    recovered as polynomial roots (magnitudes clipped to 1 for stability,
    flagged when it happens), amplitudes refit on the data, and the model
    evaluated ahead.  ``series`` has shape (T, C).
    """
    x = np.asarray(series, dtype=complex)
    t = x.shape[0]
    p = min(order, t - 1)
    if p < 1:
        return np.repeat(x[-1:], n_ahead, axis=0), False
    flagged = False
    fc = np.empty((n_ahead, x.shape[1]), dtype=complex)
    for ci in range(x.shape[1]):
        col = x[:, ci]
        rows = np.stack([col[p - 1 - i:t - 1 - i] for i in range(p)], axis=1)
        target = col[p:]
        a = np.linalg.lstsq(rows, target, rcond=None)[0]
        roots = np.roots(np.concatenate([[1.0], -a]))
        mags = np.abs(roots)
        if np.any(mags > 1.0):
            flagged = True
            roots = np.where(mags > 1.0, roots / mags, roots)
        vand = roots[None, :] ** np.arange(t)[:, None]
        amps = np.linalg.lstsq(vand, col, rcond=None)[0]
        steps = np.arange(t, t + n_ahead)
        fc[:, ci] = (roots[None, :] ** steps[:, None]) @ amps
    return fc, flagged


def prony_predict(h_ul: np.ndarray, mn: int, n_f: int,
                  order: int = 5) -> DlPrediction:
    """Exponential-fit baseline applied directly to each gain sample series.

    Operates on the raw stacked channel (every column is one gain series of
    N_t*MN samples) and forecasts the next n_f*MN samples.
    """
    fc, flagged = prony_fit_forecast(h_ul, order, n_f * mn)
    return DlPrediction(h_dl=fc, predictor="prony",
                        params={"order": order, "clipped": flagged})
