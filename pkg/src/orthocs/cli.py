"""Command-line surface: theory tables, Monte Carlo runs, fits, comparisons.

Exit codes: 0 ok, 1 numerical failure, 2 usage error.  Flags beat the
optional JSON config file (--config), which beats built-in defaults.  All
arithmetic happens in the library modules; the CLI only formats.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import IllConditioned, NonConvergence, OrthocsError
from .experiment import (aggregate_trials_csv, estimate_density,
                         fit_threshold, write_manifest, write_plot_csv,
                         write_trials_csv)
from .lp import active_backend
from .profiles import DensityProfile
from .replica import at_stability, critical_point, critical_point_uniform

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2


@dataclass
class RunConfig:
    """Merged view of flags, config-file entries and defaults."""

    values: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, default)


def _merge_config(args: argparse.Namespace, defaults: dict) -> RunConfig:
    file_values = {}
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            with open(cfg_path) as fh:
                file_values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {cfg_path}: {exc}")
    merged = dict(defaults)
    merged.update({k: v for k, v in file_values.items() if k in defaults})
    for key in defaults:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return RunConfig(merged)


class UsageError(Exception):
    pass


def parse_int_range(text: str) -> list[int]:
    """Accepts '4', '2..8' and '2,4,6'."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        if "," in text:
            return [int(p) for p in text.split(",")]
        return [int(text)]
    except ValueError:
        raise UsageError(f"cannot parse integer range {text!r}")


def parse_float_grid(text: str) -> np.ndarray:
    """Accepts 'start:stop:step' (inclusive stop up to rounding)."""
    try:
        start, stop, step = (float(p) for p in text.split(":"))
        if step <= 0 or stop < start:
            raise ValueError
    except ValueError:
        raise UsageError(f"cannot parse grid {text!r}, expected start:stop:step")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def _profiles_for(name: str, T: int) -> list[DensityProfile]:
    if name == "both":
        return [DensityProfile.uniform(T), DensityProfile.localized(T)]
    if name in ("uniform", "localized"):
        return [DensityProfile(name, T)]
    raise UsageError(f"unknown profile {name!r}")


# ----------------------------------------------------------------------
# theory
# ----------------------------------------------------------------------

def cmd_theory(args) -> int:
    cfg = _merge_config(args, {
        "T": "2..8", "profile": "both", "alpha": None, "curve": False,
        "at_check": False, "out": None,
    })
    if cfg.get("curve"):
        return _theory_curve(cfg)

    rows = []
    for T in parse_int_range(cfg.get("T")):
        if T < 2:
            raise UsageError("theory tables need T >= 2")
        for prof in _profiles_for(cfg.get("profile"), T):
            cp = critical_point(prof)
            row = {
                "T": T, "profile": prof.kind,
                "rho_c": cp.rho_c, "mu_star": cp.mu_star,
            }
            if cfg.get("at_check"):
                row["at_det"] = at_stability(cp, prof)
                row["at_eigen_gap"] = cp.at_eigen_gap
            rows.append(row)

    headers = ["T", "profile", "rho_c", "rho_c_4dp", "mu_star"]
    if cfg.get("at_check"):
        headers += ["at_det", "at_eigen_gap"]
    print("  ".join(f"{h:>12}" for h in headers))
    for row in rows:
        cells = [f"{row['T']:>12}", f"{row['profile']:>12}",
                 f"{row['rho_c']:>12.6f}", f"{round(row['rho_c'], 4):>12.4f}",
                 f"{row['mu_star']:>12.6f}"]
        if cfg.get("at_check"):
            cells += [f"{row['at_det']:>12.2e}", f"{row['at_eigen_gap']:>12.2e}"]
        print("  ".join(cells))

    if cfg.get("out"):
        with open(cfg.get("out"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(headers)
            for row in rows:
                out = [row["T"], row["profile"], f"{row['rho_c']:.6f}",
                       f"{round(row['rho_c'], 4):.4f}", f"{row['mu_star']:.6f}"]
                if cfg.get("at_check"):
                    out += [f"{row['at_det']:.3e}", f"{row['at_eigen_gap']:.3e}"]
                writer.writerow(out)
    return EXIT_OK


def _theory_curve(cfg) -> int:
    grid = parse_float_grid(cfg.get("alpha") or "0.05:0.95:0.05")
    rows = []
    for alpha in grid:
        uni = critical_point_uniform(alpha).rho_c
        loc = ""
        T = 1.0 / alpha
        if abs(T - round(T)) < 1e-9 and round(T) >= 2:
            loc = f"{critical_point(DensityProfile.localized(round(T))).rho_c:.6f}"
        rows.append((f"{alpha:.6f}", f"{uni:.6f}", loc))
    out = cfg.get("out")
    lines = ["alpha,rho_c_theory_uniform,rho_c_theory_localized"]
    lines += [",".join(r) for r in rows]
    if out:
        with open(out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        print("\n".join(lines))
    return EXIT_OK


# ----------------------------------------------------------------------
# mc
# ----------------------------------------------------------------------

def cmd_mc(args) -> int:
    cfg = _merge_config(args, {
        "T": None, "M": None, "trials": 2000, "seed": 1, "profile": "uniform",
        "kind": "concat_orthogonal", "workers": os.cpu_count() or 1,
        "out_dir": ".", "timings": False,
    })
    if cfg.get("T") is None or cfg.get("M") is None:
        raise UsageError("mc requires --T and --M")
    T = int(cfg.get("T"))
    if T < 2:
        raise UsageError("mc requires T >= 2")
    m_list = parse_int_range(str(cfg.get("M")))
    trials = int(cfg.get("trials"))
    seed = int(cfg.get("seed"))
    workers = int(cfg.get("workers"))
    if trials < 1 or workers < 1 or any(m < 1 for m in m_list):
        raise UsageError("trials, workers and M must be positive")
    kinds = (["concat_orthogonal", "iid_gaussian"] if cfg.get("kind") == "both"
             else [cfg.get("kind")])
    for kind in kinds:
        if kind not in ("concat_orthogonal", "iid_gaussian"):
            raise UsageError(f"unknown dictionary kind {kind!r}")
    profiles = _profiles_for(cfg.get("profile"), T)

    out_dir = cfg.get("out_dir")
    os.makedirs(out_dir, exist_ok=True)

    t0 = time.time()
    estimates, all_records, fits = [], [], {}
    failed = 0
    for kind in kinds:
        for prof in profiles:
            series = []
            for M in m_list:
                est, records = estimate_density(
                    kind, T, M, prof, trials, seed, workers=workers)
                estimates.append(est)
                series.append(est)
                all_records.extend(records)
                failed += est.failed_trials
                print(f"{kind} {prof.kind} T={T} M={M}: rho_c = "
                      f"{est.rho_c_mean:.6f} +- {est.rho_c_stderr:.6f} "
                      f"({est.trials} trials)")
            if len(m_list) >= 3:
                fits[f"{kind}:{prof.kind}"] = fit_threshold(series)

    csv_path = os.path.join(out_dir, "trials.csv")
    plot_path = os.path.join(out_dir, "scaling.csv")
    manifest_path = os.path.join(out_dir, "manifest.json")
    write_trials_csv(all_records, csv_path, include_timing=bool(cfg.get("timings")))
    write_plot_csv(estimates, plot_path)
    write_manifest(manifest_path, config=dict(cfg.values), estimates=estimates,
                   fits=fits, failed_trials=failed, wall_time_s=time.time() - t0)
    for name, fit in fits.items():
        print(f"fit {name}: a = {fit.a:.6f}  b = {fit.b:.4f}  c = {fit.c:.3f}  "
              f"rms = {fit.residual_rms:.2e}")
    print(f"wrote {csv_path}, {plot_path}, {manifest_path} "
          f"[backend={active_backend()}, {time.time() - t0:.1f}s]")
    return EXIT_OK


# ----------------------------------------------------------------------
# fit
# ----------------------------------------------------------------------

def cmd_fit(args) -> int:
    cfg = _merge_config(args, {"csv": None, "out": None})
    path = cfg.get("csv")
    if not path:
        raise UsageError("fit requires --csv")
    if not os.path.exists(path):
        raise UsageError(f"no such file: {path}")
    report = {}
    for (kind, prof_kind, T), points in sorted(aggregate_trials_csv(path).items()):
        fit = fit_threshold(points)
        name = f"{kind}:{prof_kind}"
        entry = {"T": T, "a": fit.a, "b": fit.b, "c": fit.c,
                 "residual_rms": fit.residual_rms, "points": fit.points_used}
        theory = _theory_reference(kind, prof_kind, T)
        if theory is not None:
            entry["theory_rho_c"] = theory
            entry["a_minus_theory"] = fit.a - theory
        report[name] = entry
        line = (f"{name} (T={T}): a = {fit.a:.6f}  b = {fit.b:.4f}  "
                f"c = {fit.c:.3f}  rms = {fit.residual_rms:.2e}")
        if theory is not None:
            line += f"  theory = {theory:.6f}  diff = {fit.a - theory:+.6f}"
        print(line)
    if cfg.get("out"):
        with open(cfg.get("out"), "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def _theory_reference(kind, prof_kind, T):
    """Predicted threshold for one experiment series.

    Gaussian dictionaries have no block structure, so both profiles follow
    the rotation-invariant curve; concatenated dictionaries follow the
    profile-specific critical point.
    """
    if kind == "iid_gaussian" or prof_kind == "uniform":
        return critical_point_uniform(1.0 / T).rho_c
    if prof_kind == "localized":
        return critical_point(DensityProfile.localized(T)).rho_c
    return None


# ----------------------------------------------------------------------
# compare
# ----------------------------------------------------------------------

def cmd_compare(args) -> int:
    cfg = _merge_config(args, {"manifest": None, "out": None})
    path = cfg.get("manifest")
    if not path:
        raise UsageError("compare requires --manifest")
    if not os.path.exists(path):
        raise UsageError(f"no such file: {path}")
    with open(path) as fh:
        doc = json.load(fh)
    t_val = int(doc["config"]["T"])
    rows = [("series", "experiment_a", "theory_rho_c", "difference")]
    for name, fit in sorted(doc.get("fits", {}).items()):
        kind, prof_kind = name.split(":")
        theory = _theory_reference(kind, prof_kind, t_val)
        rows.append((name, f"{fit['a']:.6f}", f"{theory:.6f}",
                     f"{fit['a'] - theory:+.6f}"))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    for r in rows:
        print("  ".join(c.rjust(w) for c, w in zip(r, widths)))
    if cfg.get("out"):
        with open(cfg.get("out"), "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
    return EXIT_OK


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orthocs",
        description="Recovery thresholds for concatenated orthogonal dictionaries")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("theory", help="critical densities from the saddle-point systems")
    p.add_argument("--T", help="block counts, e.g. 3 or 2..8 or 2,4,6")
    p.add_argument("--profile", choices=["uniform", "localized", "both"])
    p.add_argument("--curve", action="store_true", default=None,
                   help="emit the threshold curve over an alpha grid")
    p.add_argument("--alpha", help="grid start:stop:step for --curve")
    p.add_argument("--at-check", dest="at_check", action="store_true", default=None,
                   help="append replica-stability columns")
    p.add_argument("--out", help="write CSV here as well")
    p.add_argument("--config", help="JSON config file")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("mc", help="Monte Carlo threshold measurement")
    p.add_argument("--T", type=int)
    p.add_argument("--M", help="module sizes, e.g. 8..16")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--profile", choices=["uniform", "localized", "both"])
    p.add_argument("--kind", choices=["concat_orthogonal", "iid_gaussian", "both"])
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--timings", action="store_true", default=None,
                   help="record measured per-trial wall time in the CSV "
                        "(breaks byte-identical reruns)")
    p.add_argument("--config", help="JSON config file")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("fit", help="finite-size extrapolation of a results CSV")
    p.add_argument("--csv")
    p.add_argument("--out", help="write the fit report as JSON")
    p.add_argument("--config", help="JSON config file")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="experiment vs theory from a manifest")
    p.add_argument("--manifest")
    p.add_argument("--out", help="write the comparison as CSV")
    p.add_argument("--config", help="JSON config file")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonConvergence, IllConditioned) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OrthocsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
