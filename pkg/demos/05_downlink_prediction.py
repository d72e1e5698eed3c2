"""Downlink prediction: extrapolated Slepian coefficients vs baselines."""

import numpy as np

from otfspred.config import desk_profile
from otfspred.trial import TrialRun


def main():
    cfg = desk_profile(N_f=5, ber_stop_rel=0.0)
    preds = ("sbee", "prony", "ar")
    cp = {p: [] for p in preds}
    ratio = {p: [] for p in preds}
    for seed in range(20):
        run = TrialRun(cfg, seed, 15.0)
        for p in preds:
            res = run.predict("vbl", p)
            cp[p].append(10 ** (res.nmse_cp_db / 10))
            ratio[p].append(res.aser)
    print("predictor  NMSE per horizon (dB)                    mean SE ratio")
    for p in preds:
        db = 10 * np.log10(np.mean(cp[p], axis=0))
        print(f"{p:9s} {np.round(db, 2).tolist()}  {np.mean(ratio[p]):.3f}")

    # with perfect uplink channels the extrapolation error dominates
    run = TrialRun(cfg, 0, 15.0)
    res = run.predict("perfect", "sbee")
    print("\nperfect-uplink horizon-1 NMSE:",
          round(float(res.nmse_cp_db[0]), 2), "dB")


if __name__ == "__main__":
    main()
