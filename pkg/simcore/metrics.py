"""
Copyright 2026 The hyperlb Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""
from __future__ import annotations
import math
from typing import Dict, List, Sequence
import numpy as np
from pydantic import BaseModel
from scipy import stats
from simcore.audits import AuditResult, Checkpoint

SUMMARY_FIELDS = ("throughput", "blocking", "message_rate", "messages_per_admitted_job", "jobs_ahead_mean",
                  "mean_open")


class Metrics(BaseModel):
    """Counts and time integrals of one run. Counts and integrals cover [warmup, T]; audits cover [0, T]."""
    N: int
    lam: float
    horizon: float
    t_eff: float
    policy: str
    service: str
    seed: int
    arrivals: int = 0
    admitted: int = 0
    blocked: int = 0
    updates: int = 0
    completions: int = 0
    area_open: float = 0.0
    jobs_ahead_sum: int = 0
    open_time_hist: List[float] = []
    open_snapshots: List[int] = []
    report_hist: Dict[str, List[int]] = {}
    phase_area: Dict[str, float] = {}
    checkpoints: List[Checkpoint] = []
    audit_violations: Dict[str, int] = {}
    pass_accounting: AuditResult

    @property
    def throughput(self) -> float:
        return self.admitted / (self.t_eff * self.N)

    @property
    def blocking(self) -> float:
        return self.blocked / self.arrivals if self.arrivals else 0.0

    @property
    def message_rate(self) -> float:
        return self.updates / (self.t_eff * self.N)

    @property
    def messages_per_admitted_job(self) -> float:
        return self.updates / self.admitted if self.admitted else math.nan

    @property
    def jobs_ahead_mean(self) -> float:
        return self.jobs_ahead_sum / self.admitted if self.admitted else math.nan

    @property
    def mean_open(self) -> float:
        return self.area_open / self.t_eff

    @property
    def audits_passed(self) -> bool:
        return all(v == 0 for v in self.audit_violations.values()) and (
            self.pass_accounting.passed or self.pass_accounting.skipped)

    def summary(self) -> Dict[str, float]:
        return {x: getattr(self, x) for x in SUMMARY_FIELDS}

    def phase_means(self) -> Dict[str, float]:
        """Time-average number of servers per dispatcher phase."""
        return {k: v / self.t_eff for k, v in self.phase_area.items()}

    def report_distribution(self, source: str) -> np.ndarray:
        counts = np.asarray(self.report_hist.get(source, []), dtype=float)
        return counts / counts.sum() if counts.sum() else counts


class CISummary(BaseModel):
    runs: int
    mean: Dict[str, float]
    half_width: Dict[str, float]

    def interval(self, field: str):
        return self.mean[field] - self.half_width[field], self.mean[field] + self.half_width[field]

    def covers(self, field: str, value: float) -> bool:
        low, high = self.interval(field)
        return low <= value <= high


def estimate_ci(metrics_list: Sequence[Metrics], fields: Sequence[str] = SUMMARY_FIELDS,
                confidence: float = 0.95) -> CISummary:
    """Sample mean and t-based confidence half-width per metric over independent runs.
    :except ValueError: with fewer than 2 runs
    """
    if len(metrics_list) < 2:
        raise ValueError(f"Metrics: confidence intervals need at least 2 runs, got {len(metrics_list)}")
    n = len(metrics_list)
    quantile = stats.t.ppf(0.5 + confidence / 2, n - 1)
    mean, half_width = {}, {}
    for field in fields:
        values = np.array([getattr(m, field) for m in metrics_list], dtype=float)
        mean[field] = float(values.mean())
        half_width[field] = float(quantile * values.std(ddof=1) / math.sqrt(n))
    return CISummary(runs=n, mean=mean, half_width=half_width)


class ChiSquareResult(BaseModel):
    statistic: float
    dof: int
    p_value: float
    samples: int


def chi_square_open_histogram(metrics_list: Sequence[Metrics], pmf: Sequence[float],
                              min_expected: float = 5.0) -> ChiSquareResult:
    """Chi-square goodness of fit of the pooled open-server snapshots against a law over n = 0..N.
    Neighbouring bins are merged until each holds at least min_expected expected samples.
    """
    pmf = np.asarray(pmf, dtype=float)
    observed = np.zeros(len(pmf))
    for m in metrics_list:
        snap = np.asarray(m.open_snapshots, dtype=float)
        observed[:len(snap)] += snap
    total = observed.sum()
    if total == 0:
        raise ValueError("Metrics: no open-server snapshots recorded")
    expected = pmf * total

    obs_bins, exp_bins = [], []
    acc_obs = acc_exp = 0.0
    for o, e in zip(observed, expected):
        acc_obs += o
        acc_exp += e
        if acc_exp >= min_expected:
            obs_bins.append(acc_obs)
            exp_bins.append(acc_exp)
            acc_obs = acc_exp = 0.0
    if obs_bins:
        obs_bins[-1] += acc_obs
        exp_bins[-1] += acc_exp
    else:
        obs_bins, exp_bins = [acc_obs], [acc_exp]

    obs_bins, exp_bins = np.array(obs_bins), np.array(exp_bins)
    statistic = float(((obs_bins - exp_bins) ** 2 / exp_bins).sum())
    dof = max(len(obs_bins) - 1, 1)
    return ChiSquareResult(statistic=statistic, dof=dof, p_value=float(stats.chi2.sf(statistic, dof)),
                           samples=int(total))
