"""Small campaign sweep written to CSV (the frontend renders figures)."""

from otfspred.campaign import CampaignSpec, run_campaign
from otfspred.config import desk_profile


def main():
    cfg = desk_profile(N_f=2, snr_db=(0.0, 10.0))
    spec = CampaignSpec(config=cfg, axis="snr", axis_values=(0.0, 10.0),
                        trials=5, estimators=("vbl",),
                        predictors=("sbee", "prony"),
                        out_path="demo_campaign.csv", master_seed=1)
    path = run_campaign(spec)
    print("wrote", path)
    with open(path) as fh:
        for line in list(fh)[:6]:
            print(line.rstrip()[:110])


if __name__ == "__main__":
    main()
