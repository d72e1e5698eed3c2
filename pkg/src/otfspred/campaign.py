"""Monte Carlo campaign runner with CSV emission.

A campaign sweeps one axis (snr, n_f, pilot_overhead, velocity, n_antennas
or iterations), runs a fixed number of independent trials per point and
writes raw per-trial rows plus per-point aggregate rows.  The whole file is
a pure function of (spec, master seed) apart from the timestamp comment and
the runtime column.
"""

from __future__ import annotations

import concurrent.futures
import datetime
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, SimConfig
from .trial import TrialResult, run_trial

AXES = ("snr", "n_f", "pilot_overhead", "velocity", "n_antennas", "iterations")

CSV_HEADER = ("kind,axis,axis_value,seed,snr_db,estimator,predictor,"
              "nmse_ce_db,nmse_cp_db_f1,nmse_cp_db_f2,nmse_cp_db_f3,"
              "nmse_cp_db_f4,nmse_cp_db_f5,se,se_upper,aser,"
              "ber_i0,ber_i1,ber_i2,ber_i3,ber_i4,runtime_ms")

_N_CP = 5
_N_BER = 5


@dataclass
class CampaignSpec:
    config: SimConfig
    axis: str = "snr"
    axis_values: tuple = ()
    trials: int = 1
    estimators: tuple = ("vbl",)
    predictors: tuple = ("sbee",)
    out_path: str = "campaign.csv"
    master_seed: int = 0
    workers: int = 1
    include_runtime: bool = True

    def validate(self) -> "CampaignSpec":
        if self.axis not in AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}; pick one of {AXES}")
        if not self.axis_values:
            raise ConfigError("axis_values must not be empty")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        from .trial import ESTIMATORS, PREDICTORS
        for e in self.estimators:
            if e not in ESTIMATORS:
                raise ConfigError(f"unknown estimator {e!r}")
        for p in self.predictors:
            if p not in PREDICTORS:
                raise ConfigError(f"unknown predictor {p!r}")
        return self


def apply_axis(config: SimConfig, axis: str, value) -> tuple[SimConfig, float]:
    """Specialize the base config for one sweep point; returns (config, snr)."""
    snr = float(config.snr_db[0]) if config.snr_db else 10.0
    if axis == "snr":
        return config, float(value)
    if axis == "n_f":
        return config.replace(N_f=int(value)).validate(), snr
    if axis == "pilot_overhead":
        if 0 < float(value) <= 1.0:
            g = max(1, int(round(float(value) * config.MN / (2 * config.Q - 1))))
        else:
            g = int(value)
        return config.replace(G=g).validate(), snr
    if axis == "velocity":
        return config.replace(v=float(value)).validate(), snr
    if axis == "n_antennas":
        n_r = int(value)
        q_s = max(1, round(config.Q_s * n_r / config.N_r))
        return config.replace(N_r=n_r, Q_s=min(q_s, n_r)).validate(), snr
    if axis == "iterations":
        return config.replace(I_max=int(value)).validate(), snr
    raise ConfigError(f"unknown sweep axis {axis!r}")


def trial_seed(master_seed: int, axis_idx: int, trial_idx: int) -> int:
    """Stable per-trial seed derived from the campaign master seed."""
    ss = np.random.SeedSequence([master_seed, axis_idx, trial_idx])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _run_point(args) -> tuple:
    spec, axis_idx, trial_idx, estimator = args
    cfg, snr = apply_axis(spec.config, spec.axis, spec.axis_values[axis_idx])
    seed = trial_seed(spec.master_seed, axis_idx, trial_idx)
    results = run_trial(cfg, seed, snr, estimator=estimator,
                        predictors=spec.predictors)
    return (axis_idx, trial_idx, estimator, results)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


def _pad(values, width) -> list:
    out = list(values)[:width]
    out += [None] * (width - len(out))
    return out


def _row(kind: str, axis: str, axis_value, result: TrialResult,
         include_runtime: bool) -> str:
    cp = _pad(result.nmse_cp_db, _N_CP)
    bers = _pad(result.ber, _N_BER)
    se = float(np.mean(result.se)) if result.se.size else None
    se_up = float(np.mean(result.se_upper)) if result.se_upper.size else None
    runtime = sum(result.runtime_ms.values()) if result.runtime_ms else None
    cells = [kind, axis, _fmt(axis_value),
             "" if kind == "agg" else _fmt(result.seed),
             _fmt(result.snr_db), result.estimator, result.predictor,
             _fmt(result.nmse_ce_db)]
    cells += [_fmt(v) for v in cp]
    cells += [_fmt(se), _fmt(se_up), _fmt(result.aser)]
    cells += [_fmt(v) for v in bers]
    cells.append(_fmt(runtime) if include_runtime else "")
    return ",".join(cells)


def _mean_db(values) -> float | None:
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    return float(10 * np.log10(np.mean(10 ** (np.asarray(vals) / 10.0))))


def _mean_plain(values) -> float | None:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def aggregate(results: list, axis_value, snr_db) -> list:
    """Average trial results per (estimator, predictor); NMSE in linear domain."""
    groups: dict = {}
    for r in results:
        groups.setdefault((r.estimator, r.predictor), []).append(r)
    out = []
    for (est, pred), group in sorted(groups.items()):
        cp_cols = [_mean_db([r.nmse_cp_db[fi] for r in group
                             if r.nmse_cp_db.size > fi]) for fi in range(_N_CP)]
        ber_cols = [_mean_plain([r.ber[bi] for r in group if r.ber.size > bi])
                    for bi in range(_N_BER)]
        se = _mean_plain([float(np.mean(r.se)) for r in group if r.se.size])
        se_up = _mean_plain([float(np.mean(r.se_upper)) for r in group
                             if r.se_upper.size])
        runtime = _mean_plain([sum(r.runtime_ms.values()) for r in group
                               if r.runtime_ms])
        agg = TrialResult(
            seed=0, snr_db=snr_db, estimator=est, predictor=pred,
            nmse_ce_db=_mean_db([r.nmse_ce_db for r in group]),
            nmse_cp_db=np.array([np.nan if v is None else v for v in cp_cols]),
            se=np.array([se]) if se is not None else np.zeros(0),
            se_upper=np.array([se_up]) if se_up is not None else np.zeros(0),
            aser=_mean_plain([r.aser for r in group]),
            ber=np.array([np.nan if v is None else v for v in ber_cols]),
            runtime_ms={"total_ms": runtime} if runtime is not None else {},
        )
        out.append(agg)
    return out


def _strip_nan(row: str) -> str:
    return row.replace("nan", "")


def run_campaign(spec: CampaignSpec) -> str:
    """Execute the sweep and write the CSV; returns the output path."""
    spec.validate()
    work = [(spec, ai, ti, est)
            for ai in range(len(spec.axis_values))
            for ti in range(spec.trials)
            for est in spec.estimators]
    results: dict = {}
    if spec.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(spec.workers) as pool:
            for key, out in zip(work, pool.map(_run_point, work, chunksize=4)):
                results[out[:3]] = out[3]
    else:
        for item in work:
            out = _run_point(item)
            results[out[:3]] = out[3]

    with open(spec.out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# generated {datetime.datetime.now().isoformat()}\n")
        fh.write(CSV_HEADER + "\n")
        for ai, value in enumerate(spec.axis_values):
            point_results = []
            for ti in range(spec.trials):
                for est in spec.estimators:
                    for res in results[(ai, ti, est)]:
                        point_results.append(res)
                        fh.write(_row("raw", spec.axis, value, res,
                                      spec.include_runtime) + "\n")
            _, snr = apply_axis(spec.config, spec.axis, value)
            if spec.axis == "snr":
                snr = float(value)
            for agg in aggregate(point_results, value, snr):
                fh.write(_strip_nan(_row("agg", spec.axis, value, agg,
                                         spec.include_runtime)) + "\n")
            fh.flush()
    return spec.out_path
