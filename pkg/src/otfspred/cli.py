"""Command-line interface: estimation runs, full-pipeline runs, campaign
sweeps and the acceptance self-test."""

from __future__ import annotations

import argparse
import sys

from .campaign import AXES, CampaignSpec, run_campaign
from .config import PROFILES, SimConfig, load_config


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH",
                        help="flat key=value config file")
    parser.add_argument("--seed", type=int, default=None, metavar="U64",
                        help="master seed (overrides config)")
    parser.add_argument("--out", default=None, metavar="CSV",
                        help="output CSV path")
    parser.add_argument("--trials", type=int, default=None, metavar="N",
                        help="trials per sweep point")
    parser.add_argument("--profile", choices=sorted(PROFILES),
                        default="desk", help="named base configuration")
    parser.add_argument("--workers", type=int, default=1,
                        help="parallel trial workers")


def _load(args) -> tuple[SimConfig, dict]:
    base = PROFILES[args.profile]()
    extra: dict = {}
    if args.config:
        base, extra = load_config(args.config, base)
    if args.seed is not None:
        base = base.replace(seed=args.seed)
    return base, extra


def _spec_from_args(args, cfg: SimConfig, extra: dict, axis: str,
                    values, predictors) -> CampaignSpec:
    return CampaignSpec(
        config=cfg,
        axis=axis,
        axis_values=tuple(values),
        trials=args.trials or int(extra.get("trials", 1)),
        estimators=tuple(extra.get("estimators", ("vbl",))),
        predictors=tuple(predictors),
        out_path=args.out or str(extra.get("out", "campaign.csv")),
        master_seed=cfg.seed,
        workers=args.workers,
    )


def cmd_estimate(args) -> int:
    cfg, extra = _load(args)
    cfg = cfg.replace(N_f=0).validate()
    spec = _spec_from_args(args, cfg, extra, "snr", cfg.snr_db, ())
    path = run_campaign(spec)
    print(f"wrote {path}")
    return 0


def cmd_predict(args) -> int:
    cfg, extra = _load(args)
    predictors = extra.get("predictors", ("sbee",))
    spec = _spec_from_args(args, cfg, extra, "snr", cfg.snr_db, predictors)
    path = run_campaign(spec)
    print(f"wrote {path}")
    return 0


def cmd_sweep(args) -> int:
    cfg, extra = _load(args)
    axis = str(extra.get("axis", "snr"))
    if axis not in AXES:
        print(f"error: config must set axis to one of {AXES}", file=sys.stderr)
        return 2
    values = extra.get("axis_values", cfg.snr_db if axis == "snr" else ())
    if not values:
        print("error: config must set axis_values", file=sys.stderr)
        return 2
    predictors = extra.get("predictors", ("sbee",)) if cfg.N_f else ()
    spec = _spec_from_args(args, cfg, extra, axis, values, predictors)
    path = run_campaign(spec)
    print(f"wrote {path}")
    return 0


def cmd_selftest(args) -> int:
    from .acceptance import run_all
    results = run_all(verbose=True)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="otfspred",
        description="Uplink channel estimation and downlink prediction "
                    "simulator for TDD massive MIMO-OTFS links")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, desc in (
            ("estimate", cmd_estimate, "run the uplink estimator only"),
            ("predict", cmd_predict, "run the full estimation + prediction pipeline"),
            ("sweep", cmd_sweep, "run a campaign over the configured sweep axis"),
            ("selftest", cmd_selftest, "run the acceptance criteria suite")):
        p = sub.add_parser(name, help=desc)
        _add_common(p)
        p.set_defaults(func=func)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
