"""Uplink estimation: greedy recovery variants and the refinement loop."""

import numpy as np

from otfspred.config import desk_profile
from otfspred.trial import TrialRun


def main():
    cfg = desk_profile(N_f=0, ber_stop_rel=0.0)
    print("estimator      SNR 5 dB    SNR 15 dB   (uplink NMSE, 20 trials)")
    for est in ("vbl", "bsomp", "somp", "genie"):
        row = []
        for snr in (5.0, 15.0):
            vals = []
            for seed in range(20):
                run = TrialRun(cfg, seed, snr)
                vals.append(10 ** (run.uplink(est)["nmse_ce"] / 10))
            row.append(10 * np.log10(np.mean(vals)))
        print(f"{est:10s} {row[0]:10.2f} {row[1]:11.2f}")

    run = TrialRun(cfg, 0, 10.0)
    ber = run.uplink("vbl")["ber"]
    print("\nBER across refinement iterations (seed 0, SNR 10):",
          np.round(ber, 4).tolist())


if __name__ == "__main__":
    main()
