"""Monte Carlo measurement of the recovery threshold.

One trial: draw a dictionary, insert standard-Gaussian nonzeros one at a
time into blocks chosen with the profile's relative densities, re-solve the
l1 program from scratch after each insertion, and record K_c = (number of
nonzeros at the first failure) - 1.  Aggregation over trials gives the
empirical critical density rho_c(T, N) = mean(K_c)/N, and a quadratic fit in
1/N extrapolates it to infinite size.

Per-trial seeds are spawned from the master seed with a counter scheme, so
results are bit-identical no matter how many workers run the trials or in
which order they finish.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np

from . import __version__
from .errors import IllConditioned
from .lp import active_backend, solve_bp
from .profiles import DensityProfile
from .sensing import build_dictionary, recovery_success

_KIND_CODE = {"concat_orthogonal": 0, "iid_gaussian": 1}
_PROFILE_CODE = {"uniform": 0, "localized": 1, "custom": 2}


@dataclass
class TrialRecord:
    trial_id: int
    T: int
    M: int
    kind: str
    profile_kind: str
    seed: int
    K_c: int
    block_counts: tuple
    solve_count: int
    wall_time: float
    failed: bool = False

    @property
    def N(self) -> int:
        return self.T * self.M


@dataclass
class DensityEstimate:
    T: int
    M: int
    N: int
    kind: str
    profile_kind: str
    trials: int
    failed_trials: int
    rho_c_mean: float
    rho_c_stderr: float
    per_block_density: list
    per_block_stderr: list

    def block_density_gaps(self, weights) -> np.ndarray:
        """Deviation of per-block densities from the profile shape, in stderr units.

        The target share of block t is weights_t times the average total
        insertion count, scaled per coordinate.
        """
        weights = np.asarray(weights, dtype=float)
        target = weights * (self.rho_c_mean * self.N + 1.0) / self.M
        dens = np.asarray(self.per_block_density)
        err = np.maximum(np.asarray(self.per_block_stderr), 1e-300)
        return np.abs(dens - target) / err


@dataclass
class ThresholdFit:
    a: float
    b: float
    c: float
    residual_rms: float
    points_used: list = field(default_factory=list)


def trial_seed(master_seed: int, kind: str, profile_kind: str, T: int, M: int,
               trial_id: int) -> int:
    """Collision-free 64-bit seed for one trial of one series."""
    ss = np.random.SeedSequence(
        [int(master_seed), _KIND_CODE[kind], _PROFILE_CODE[profile_kind],
         int(T), int(M), int(trial_id)])
    return int(ss.generate_state(1, np.uint64)[0])


def run_trial(kind: str, T: int, M: int, profile: DensityProfile | None, seed: int,
              trial_id: int = 0, mu_ref: float | None = None) -> TrialRecord:
    """One incremental-insertion trial; cold LP re-solve after every insertion.

    T = 1 (a single square block, where recovery never fails and the trial
    runs to full support) needs no profile; pass None.
    """
    t_start = time.perf_counter()
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    if T == 1:
        weights = np.ones(1)
        profile_kind = "uniform"
    else:
        weights = profile.weights(mu_ref)
        profile_kind = profile.kind
    dictionary = build_dictionary(kind, T, M, int(rng.integers(0, 2 ** 63)))
    N = T * M

    x0 = np.zeros(N)
    counts = np.zeros(T, dtype=np.int64)
    solves = 0
    while True:
        block = _pick_block(rng, weights, counts, M)
        if block is None:  # every coordinate filled and recovery never failed
            k_c = N - 1
            break
        offset = block * M
        empty = np.flatnonzero(x0[offset:offset + M] == 0.0)
        coord = offset + int(empty[rng.integers(0, len(empty))])
        x0[coord] = rng.standard_normal()
        counts[block] += 1
        y = dictionary.matrix @ x0
        sol = solve_bp(dictionary.matrix, y)
        solves += 1
        if not sol.ok:
            return TrialRecord(trial_id, T, M, kind, profile_kind, seed, -1,
                               tuple(counts), solves,
                               time.perf_counter() - t_start, failed=True)
        if not recovery_success(x0, sol.xhat):
            k_c = int(counts.sum()) - 1
            break

    return TrialRecord(trial_id, T, M, kind, profile_kind, seed, k_c,
                       tuple(counts), solves, time.perf_counter() - t_start)


def _pick_block(rng, weights, counts, M):
    """Weighted block draw over blocks that still have an empty coordinate.

    Zero-weight blocks are never chosen while any weighted block has room;
    once all weighted blocks are full the choice falls back to the remaining
    open blocks uniformly (this edge is beyond the regime where recovery can
    still succeed, but keeps the trial well defined).
    """
    open_blocks = counts < M
    if not np.any(open_blocks):
        return None
    w = np.where(open_blocks, weights, 0.0)
    total = w.sum()
    if total <= 0.0:
        w = open_blocks.astype(float)
        total = w.sum()
    return int(rng.choice(len(weights), p=w / total))


def _trial_worker(args):
    kind, T, M, profile_kind, seed, trial_id, mu_ref = args
    profile = DensityProfile(profile_kind, T)
    return run_trial(kind, T, M, profile, seed, trial_id, mu_ref)


def estimate_density(kind: str, T: int, M: int, profile: DensityProfile,
                     trials: int, master_seed: int, workers: int = 1,
                     mu_ref: float | None = None):
    """Run `trials` independent trials and aggregate.

    Returns (DensityEstimate, [TrialRecord]).  Failed solves are excluded
    from the averages and surfaced in failed_trials.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    seeds = [trial_seed(master_seed, kind, profile.kind, T, M, i)
             for i in range(trials)]
    args = [(kind, T, M, profile.kind, seeds[i], i, mu_ref) for i in range(trials)]

    if workers > 1 and profile.kind != "custom":
        with Pool(processes=workers) as pool:
            records = list(pool.imap_unordered(_trial_worker, args, chunksize=16))
        records.sort(key=lambda r: r.trial_id)
    else:
        records = [run_trial(kind, T, M, profile, s, i, mu_ref)
                   for i, s in enumerate(seeds)]

    good = [r for r in records if not r.failed]
    n = len(good)
    if n == 0:
        raise IllConditioned(f"all {trials} trials failed to solve")
    N = T * M
    kc = np.array([r.K_c for r in good], dtype=float)
    blocks = np.array([r.block_counts for r in good], dtype=float)
    stderr = float(kc.std(ddof=1) / np.sqrt(n) / N) if n > 1 else 0.0
    bstderr = (blocks.std(axis=0, ddof=1) / np.sqrt(n) / M if n > 1
               else np.zeros(T))
    estimate = DensityEstimate(
        T=T, M=M, N=N, kind=kind, profile_kind=profile.kind,
        trials=n, failed_trials=trials - n,
        rho_c_mean=float(kc.mean() / N), rho_c_stderr=stderr,
        per_block_density=(blocks.mean(axis=0) / M).tolist(),
        per_block_stderr=np.asarray(bstderr).tolist())
    return estimate, records


def fit_threshold(points) -> ThresholdFit:
    """Unweighted least squares of rho_c against (1, 1/N, 1/N^2).

    `points` is a list of DensityEstimate or of (N, rho_c_mean) pairs; the
    constant coefficient is the infinite-size extrapolation.
    """
    pairs = []
    for p in points:
        if isinstance(p, DensityEstimate):
            pairs.append((p.N, p.rho_c_mean))
        else:
            pairs.append((float(p[0]), float(p[1])))
    ns = np.array([p[0] for p in pairs], dtype=float)
    rho = np.array([p[1] for p in pairs], dtype=float)
    if len(np.unique(ns)) < 3:
        raise IllConditioned("need at least three distinct sizes for a quadratic fit")
    design = np.vstack([np.ones_like(ns), 1.0 / ns, 1.0 / ns ** 2]).T
    coef, *_ = np.linalg.lstsq(design, rho, rcond=None)
    resid = design @ coef - rho
    return ThresholdFit(
        a=float(coef[0]), b=float(coef[1]), c=float(coef[2]),
        residual_rms=float(np.sqrt(np.mean(resid ** 2))),
        points_used=[(int(n), float(r)) for n, r in pairs])


# ----------------------------------------------------------------------
# persistence
# ----------------------------------------------------------------------

def write_trials_csv(records, path, include_timing: bool = False) -> None:
    """One row per trial.

    The wall_time_s column is zeroed by default so that repeated runs with
    the same seed produce byte-identical files; pass include_timing=True for
    measured values (timing always lives in the manifest aggregate).
    """
    if not records:
        raise ValueError("no trial records to write")
    T = records[0].T
    header = (["trial_id", "T", "M", "N", "kind", "profile", "seed", "K_c"]
              + [f"K_{t + 1}" for t in range(T)] + ["solves", "wall_time_s"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in records:
            wall = f"{r.wall_time:.6f}" if include_timing else "0.000000"
            writer.writerow([r.trial_id, r.T, r.M, r.N, r.kind, r.profile_kind,
                             r.seed, r.K_c, *r.block_counts, r.solve_count, wall])


def aggregate_trials_csv(path):
    """Group a trials CSV by (kind, profile, T) into per-size mean densities.

    Returns {(kind, profile, T): [(N, mean K_c / N), ...]} sorted by N,
    ready for fit_threshold.
    """
    groups = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            k_c = float(row["K_c"])
            if k_c < 0:  # flagged solver failure, excluded from aggregation
                continue
            key = (row["kind"], row["profile"], int(row["T"]))
            groups.setdefault(key, {}).setdefault(int(row["N"]), []).append(k_c)
    return {
        key: [(n, float(np.mean(kcs)) / n) for n, kcs in sorted(by_n.items())]
        for key, by_n in groups.items()
    }


def write_plot_csv(estimates, path) -> None:
    """Finite-size scaling table: one_over_N, rho_c_mean, stderr, series."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["one_over_N", "rho_c_mean", "stderr", "series"])
        for e in estimates:
            writer.writerow([f"{1.0 / e.N:.10f}", f"{e.rho_c_mean:.10f}",
                             f"{e.rho_c_stderr:.10f}", f"{e.kind}:{e.profile_kind}"])


def write_manifest(path, config: dict, estimates, fits: dict,
                   failed_trials: int, wall_time_s: float) -> None:
    doc = {
        "version": __version__,
        "backend": active_backend(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "master_seed": config.get("seed"),
        "config": config,
        "estimates": [vars(e) for e in estimates],
        "fits": {name: vars(f) for name, f in fits.items()},
        "failed_trials": failed_trials,
        "wall_time_s": wall_time_s,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
