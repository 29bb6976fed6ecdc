"""Command-line front end: ``fdx --mode {ber-sweep,mse-sweep,bounds-only}``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .core import InvalidParams
from .harness import (ConfigError, ExperimentConfig, bounds_table, emit_csv, mse_vs_snr_report,
                      profile_config, run_sweep)


def _floats(text: str):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fdx", description="Full-duplex OFDM receiver sweeps and bounds.")
    ap.add_argument("--config", help="JSON file with a full experiment config")
    ap.add_argument("--profile", choices=("desk", "full"), default="desk",
                    help="dimension preset used when no --config is given (default: desk)")
    ap.add_argument("--snr", type=_floats, help="SNR grid in dB, comma separated")
    ap.add_argument("--inr", type=_floats, help="INR grid in dB, comma separated")
    ap.add_argument("--delta-f", type=_floats, help="relative oscillator bandwidths, comma separated")
    ap.add_argument("--trials", type=int, help="Monte Carlo trials per grid point")
    ap.add_argument("--iters", type=int, help="receiver iterations")
    ap.add_argument("--seed", type=int, help="master seed")
    ap.add_argument("--out", help="CSV output path (default: stdout)")
    ap.add_argument("--mode", choices=("ber-sweep", "mse-sweep", "bounds-only"), default="ber-sweep")
    ap.add_argument("--oracle-si-csi", action="store_true",
                    help="use the true SI channel instead of the stage-1 estimate")
    return ap


def make_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else profile_config(args.profile)
    over = {}
    for flag, key in (("snr", "snr_db_grid"), ("inr", "inr_db_grid"), ("delta_f", "delta_f"),
                      ("trials", "n_trials"), ("iters", "n_iters"), ("seed", "seed"),
                      ("out", "output_path")):
        v = getattr(args, flag)
        if v is not None:
            over[key] = v
    if args.oracle_si_csi:
        over["oracle_si_csi"] = True
    return replace(cfg, **over).validate()


def print_bounds(cfg: ExperimentConfig, out=None) -> None:
    out = out or sys.stdout
    cols = ("snr_db", "inr_db", "delta_f", "lambda_I", "lambda_S", "sigma_e2",
            "gamma0_db", "gamma1_db", "ber_lb")
    print("  ".join(f"{c:>12}" for c in cols), file=out)
    for gp, rep in bounds_table(cfg):
        vals = (gp.snr_db, gp.inr_db, gp.delta_f, rep.lambda_I, rep.lambda_S, rep.sigma_e2,
                rep.gamma0_db, rep.gamma1_db,
                rep.ber_lb_bpsk if cfg.constellation.upper() == "BPSK" else rep.ber_lb_general)
        print("  ".join(f"{v:>12.5g}" for v in vals), file=out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
    except (ConfigError, InvalidParams, ValueError) as e:
        print(f"fdx: config error: {e}", file=sys.stderr)
        return 2
    try:
        if args.mode == "bounds-only":
            print_bounds(cfg)
            return 0
        res = mse_vs_snr_report(cfg) if args.mode == "mse-sweep" else run_sweep(cfg)
        if cfg.output_path:
            emit_csv(res, cfg.output_path)
        else:
            sys.stdout.write(res.to_csv())
        if args.mode == "mse-sweep":
            for (inr, df), t in res.notes["trend"].items():
                print(f"# INR {inr} dB, delta_f {df}: MSE {t['mse_lo']:.4g} at {t['snr_lo']} dB -> "
                      f"{t['mse_hi']:.4g} at {t['snr_hi']} dB", file=sys.stderr)
        print(f"# {res.n_trials} trials/point, {res.wall_clock:.1f} s", file=sys.stderr)
    except Exception as e:  # noqa: BLE001 - reported as a runtime failure
        print(f"fdx: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
