"""Inference-time evaluation: N-trial rollouts, length statistics, group comparisons.

A "trial" is one deterministic episode (policy mean, no exploration noise)
with its own seed; reports aggregate success counts and the episode-length
distribution of the successful trials.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from .learn import PolicyParams, mlp_forward


@dataclass(frozen=True)
class TrialStats:
    trials: int
    successes: int
    mean_len: float | None
    std_len: float | None
    # (trial index, success, episode length) for every trial, in order
    records: tuple = ()

    def __post_init__(self):
        if self.successes > self.trials:
            raise ValueError("successes cannot exceed trials")

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0


def summarize(lengths):
    """(mean, sample std) of episode lengths; std is None below two samples."""
    lengths = [float(v) for v in lengths]
    if not lengths:
        raise ValueError("no successful trials to summarize")
    mean = float(np.mean(lengths))
    if len(lengths) < 2:
        return mean, None
    return mean, float(np.std(lengths, ddof=1))


def run_trials(policy, condition, n_trials, seed, *, env) -> TrialStats:
    """Evaluate a policy for n_trials episodes; trial i uses seed + i.

    `policy` is either PolicyParams (evaluated at the Gaussian mean) or a
    callable (observation, env) -> action, which covers the scripted expert
    and random baselines. The env's observation mode must match the policy.
    """
    if isinstance(policy, PolicyParams):
        if policy.mean.in_dim != len(env.reset(condition=condition, seed=seed)):
            raise ValueError(
                f"policy expects {policy.mean.in_dim}-dim observations; env "
                f"mode {env.obs_mode!r} disagrees"
            )
        act = lambda obs, _env: mlp_forward(policy.mean, obs)
    else:
        act = policy

    records = []
    lengths_ok = []
    successes = 0
    for i in range(n_trials):
        obs = env.reset(condition=condition, seed=seed + i)
        steps = 0
        while True:
            result = env.step(act(obs, env))
            obs = result.observation
            steps += 1
            if result.done:
                break
        if result.success:
            successes += 1
            lengths_ok.append(steps)
        records.append((i, bool(result.success), steps))

    if lengths_ok:
        mean, std = summarize(lengths_ok)
    else:
        mean = std = None
    return TrialStats(n_trials, successes, mean, std, tuple(records))


@dataclass
class GroupReport:
    """One experiment group: a TrialStats per trained policy."""

    name: str
    stats: list
    baseline: TrialStats | None = None

    def __post_init__(self):
        counts = {s.trials for s in self.stats}
        if len(counts) > 1:
            raise ValueError(f"inconsistent trial counts in group {self.name!r}: {counts}")

    @property
    def mean_success_rate(self) -> float:
        if not self.stats:
            return 0.0
        return float(np.mean([s.success_rate for s in self.stats]))

    @property
    def successful_lengths(self) -> list:
        out = []
        for s in self.stats:
            out.extend(length for _, ok, length in s.records if ok)
        return out


@dataclass
class ComparisonRecord:
    success_rates: dict
    delta_force_visual: float
    delta_force_baseline: float
    delta_visual_baseline: float
    ordering: str
    quartiles: dict = field(default_factory=dict)


def _as_report(obj, name) -> GroupReport:
    if isinstance(obj, GroupReport):
        return obj
    if isinstance(obj, TrialStats):
        return GroupReport(name, [obj])
    raise TypeError(f"expected GroupReport or TrialStats for {name}, got {type(obj)}")


def _sym(a, b):
    return ">" if a > b else ("<" if a < b else "=")


def compare_groups(force_report, visual_report, rl_baseline) -> ComparisonRecord:
    """Success-rate deltas, an ordering verdict, and length quartiles."""
    groups = {
        "force": _as_report(force_report, "force"),
        "visual": _as_report(visual_report, "visual"),
        "baseline": _as_report(rl_baseline, "baseline"),
    }
    rates = {k: g.mean_success_rate for k, g in groups.items()}
    rf, rv, rb = rates["force"], rates["visual"], rates["baseline"]
    if rf == rv == rb:
        ordering = "tie"
    else:
        ordering = f"force{_sym(rf, rv)}visual{_sym(rv, rb)}baseline"
    quartiles = {}
    for k, g in groups.items():
        lens = g.successful_lengths
        quartiles[k] = tuple(float(q) for q in np.percentile(lens, [25, 50, 75])) if lens else None
    return ComparisonRecord(
        success_rates=rates,
        delta_force_visual=rf - rv,
        delta_force_baseline=rf - rb,
        delta_visual_baseline=rv - rb,
        ordering=ordering,
        quartiles=quartiles,
    )


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def write_trial_csv(stats: TrialStats, path: str) -> None:
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("trial", "success", "length"))
        for i, ok, length in stats.records:
            w.writerow((i, int(ok), length))


def write_summary_csv(report: GroupReport, path: str) -> None:
    """Success / Mean / STD rows, one column per trained-policy trial."""
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row"] + [f"trial_{i + 1}" for i in range(len(report.stats))])
        w.writerow(["Success"] + [s.successes for s in report.stats])
        w.writerow(["Mean"] + ["" if s.mean_len is None else repr(s.mean_len) for s in report.stats])
        w.writerow(["STD"] + ["" if s.std_len is None else repr(s.std_len) for s in report.stats])
