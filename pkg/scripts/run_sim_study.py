"""Run the calibrated Monte-Carlo tracking study and print the summary table.

This is the scripted version of what tests/test_acceptance.py does for
criteria 06-08: build the synthetic environment, refit the whitening models
on an observed (target-free) recording, back each variant's sensitivity off
until the calibration datasets stay clean, then score every variant on
paired target and target-free runs.

Example:
    python3 scripts/run_sim_study.py --runs 20 --seed 42 --out study.csv
"""

import argparse
import csv
import sys
from time import perf_counter

from sonartkbd.config import default_config
from sonartkbd.pipeline import VARIANTS
from sonartkbd.study import (calibrate_variant, count_false_tracks,
                             default_ambient_model, default_geometry,
                             detection_summary, fit_observed_models,
                             generate_calibration_data, run_study,
                             scenario_from_config)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--runs", type=int, default=20,
                        help="Monte-Carlo runs per variant (default 20)")
    parser.add_argument("--cal-runs", type=int, default=6,
                        help="target-free datasets for calibration (default 6)")
    parser.add_argument("--seed", type=int, default=42, help="master seed")
    parser.add_argument("--free-seed", type=int, default=777,
                        help="separate seed for the target-free verification")
    parser.add_argument("--workers", type=int, default=1,
                        help="process count for the run loop")
    parser.add_argument("--out", help="write the per-variant summary CSV here")
    args = parser.parse_args(argv)

    t0 = perf_counter()
    cfg = default_config("sim")
    geom = default_geometry(cfg)
    print("fitting ambient and whitening models ...")
    ambient, _ = default_ambient_model(geom)
    scenario = scenario_from_config(cfg, geom, ambient)
    model, model0 = fit_observed_models(scenario, args.seed)

    print(f"calibrating {len(VARIANTS)} variants on {args.cal_runs} "
          f"target-free datasets ...")
    cal_sets = generate_calibration_data(cfg, geom, ambient, args.cal_runs,
                                         args.seed)
    cfgs = {}
    for variant in VARIANTS:
        result = calibrate_variant(variant, cfg, cal_sets, model, model0,
                                   args.seed)
        cfgs[variant] = result.config
        print(f"  {variant}: setting {result.setting:+.3g} after trace "
              f"{result.trace}")

    print(f"running {args.runs} target runs per variant ...")
    with_target = run_study(cfgs, geom, ambient, model, model0, args.runs,
                            args.seed, workers=args.workers)
    print(f"running {args.runs} target-free runs per variant ...")
    target_free = run_study(cfgs, geom, ambient, model, model0, args.runs,
                            args.free_seed, target_free=True,
                            workers=args.workers)

    header = ("variant", "detected", "median_eta_db", "median_range_m",
              "median_flips", "false_tracks")
    rows = []
    for variant in VARIANTS:
        s = detection_summary(with_target[variant])
        rows.append((
            variant,
            f"{s['n_detected']}/{s['n_runs']}",
            f"{s['median_eta_db']:.2f}",
            f"{s['median_range_m']:.0f}" if s["median_range_m"] else "-",
            f"{s['median_flips']:.1f}",
            count_false_tracks(target_free[variant]),
        ))

    widths = [max(len(str(r[i])) for r in rows + [header]) for i in range(6)]
    for r in [header] + rows:
        print("  ".join(str(v).rjust(w) for v, w in zip(r, widths)))
    print(f"total wall time {perf_counter() - t0:.0f} s")

    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
