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
from typing import List, NamedTuple, Sequence, Tuple
import numpy as np
from pydantic import BaseModel, validator, conint
from scipy.special import gammainc, gammaincc, gammaln, logsumexp


class UpdateLaw(BaseModel):
    """Update interval tau and queue limit K of the hyper-scalable scheme.
    All closed forms built on M_K(tau) are parameterized by this pair."""
    tau: float
    K: conint(ge=1)

    @validator('tau')
    def tau_is_positive(cls, v):
        if not v > 0 or math.isinf(v):
            raise ValueError("UpdateLaw: 0 < tau < inf required")
        return v


class BoundParams(BaseModel):
    """Message rate delta per server, queue limit K and average server speed mu_bar."""
    delta: float
    K: conint(ge=1)
    mu_bar: float = 1.0

    @validator('delta', 'mu_bar')
    def is_positive(cls, v, field):
        if not v > 0 or math.isinf(v):
            raise ValueError(f"BoundParams: 0 < {field.name} < inf required")
        return v


class ExtensionParams(BaseModel):
    """Cool-down durations of the K=2 extension.
    tau1 is the closed period after a first job, tau2 the closed period after a second job (ends with an update),
    tau3 the closed period after an update that found two jobs (ends with an update)."""
    tau1: float
    tau2: float
    tau3: float

    @validator('tau1')
    def tau1_is_nonnegative(cls, v):
        if not v >= 0 or math.isinf(v):
            raise ValueError("ExtensionParams: 0 <= tau1 < inf required")
        return v

    @validator('tau2')
    def tau2_is_positive(cls, v):
        if not v > 0 or math.isinf(v):
            raise ValueError("ExtensionParams: 0 < tau2 < inf required")
        return v

    @validator('tau3')
    def tau3_is_positive(cls, v):
        if not v > 0 or math.isinf(v):
            raise ValueError("ExtensionParams: tau3 > 0 required, tau3 = 0 gives 1 - q22 = 0")
        return v


class ExtensionDerived(BaseModel):
    """Update outcome probabilities and relative throughput values of the extension."""
    p20: float
    p21: float
    p22: float
    q20: float
    q21: float
    q22: float
    gamma1: float
    gamma2: float
    kappa1: float
    kappa2: float
    kappa3: float


class ExtensionMetrics(NamedTuple):
    lambda_star_ext: float
    u: float
    q: float


class PropertyCheck(BaseModel):
    name: str
    passed: bool
    residual: float
    detail: str = ""


class PropertyReport(BaseModel):
    checks: List[PropertyCheck] = []

    @property
    def passed(self) -> bool:
        return all(x.passed for x in self.checks)

    @property
    def failures(self) -> List[PropertyCheck]:
        return [x for x in self.checks if not x.passed]

    def add(self, name: str, passed: bool, residual: float, detail: str = ""):
        self.checks.append(PropertyCheck(name=name, passed=bool(passed), residual=float(residual), detail=detail))


def poisson_terms(tau: float, kmax: int) -> np.ndarray:
    """Poisson(tau) probabilities of 0..kmax.
    Terms follow the forward recursion term_{i+1} = term_i * tau / (i+1), carried out on logarithms so that large
    tau neither overflows the powers nor underflows the leading e^{-tau} before the product is formed.
    :param tau: the Poisson mean, tau >= 0
    :param kmax: the largest count, kmax >= 0
    :return: an array of length kmax + 1
    """
    if not tau >= 0:
        raise ValueError(f"analytic: tau >= 0 required, got {tau}")
    if kmax < 0:
        raise ValueError(f"analytic: k >= 0 required, got {kmax}")
    if tau == 0:
        terms = np.zeros(kmax + 1)
        terms[0] = 1.0
        return terms
    steps = np.log(tau / np.arange(1, kmax + 1))
    log_terms = -tau + np.concatenate(([0.0], np.cumsum(steps)))
    return np.exp(log_terms)


def alpha(k: int, tau: float) -> float:
    """The probability alpha_k(tau) that a Poisson(tau) variable is at most k."""
    if isinstance(k, bool) or int(k) != k or k < 0:
        raise ValueError(f"analytic: alpha needs an integer k >= 0, got {k}")
    return float(min(1.0, poisson_terms(tau, int(k)).sum()))


def expected_admissions(law: UpdateLaw) -> float:
    """M_K(tau) = sum_{k<K} (1 - alpha_k(tau)), i.e. E[min(K, Poisson(tau))].
    Evaluated as tau Q(K, tau) + K P(K+1, tau) with the regularized incomplete gamma functions, which keeps full
    relative accuracy for small tau and never rounds above K."""
    value = law.tau * gammaincc(law.K, law.tau) + law.K * gammainc(law.K + 1, law.tau)
    return float(min(value, law.K))


def expected_admissions_alternate(law: UpdateLaw) -> float:
    """M_K(tau) in the form K - sum_{k<K} (K - k) e^{-tau} tau^k / k!"""
    terms = poisson_terms(law.tau, law.K - 1)
    return float(law.K - np.dot(law.K - np.arange(law.K), terms))


def expected_admissions_mc(law: UpdateLaw, samples: int, rng: np.random.Generator) -> Tuple[float, float]:
    """Monte-Carlo estimate of E[min(K, Poisson(tau))].
    :return: (sample mean, standard error)
    """
    x = np.minimum(law.K, rng.poisson(law.tau, size=samples))
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(samples))


def expected_admissions_second_derivative(law: UpdateLaw) -> float:
    """d^2 M_K / d tau^2 = -e^{-tau} tau^{K-1} / (K-1)!"""
    return -float(poisson_terms(law.tau, law.K - 1)[-1])


def concavity_residuals(K: int, taus: Sequence[float]) -> np.ndarray:
    """Second differences of M_K on an equally spaced tau grid.
    :return: an array of length len(taus) - 2; all entries are negative for a concave M_K
    """
    values = np.array([expected_admissions(UpdateLaw(tau=t, K=K)) for t in taus])
    return values[2:] - 2 * values[1:-1] + values[:-2]


def throughput_bound(params: BoundParams) -> float:
    """The universal throughput bound lambda*(delta, K) = delta * M_K(mu_bar / delta)."""
    tau = params.mu_bar / params.delta
    value = params.mu_bar * gammaincc(params.K, tau) + params.delta * params.K * gammainc(params.K + 1, tau)
    # lambda* < mu_bar
    return float(min(value, np.nextafter(params.mu_bar, 0.0)))


def bound_derivative(params: BoundParams) -> float:
    """Partial derivative of lambda*(delta, K) in delta: K - K alpha_K(mu_bar / delta)."""
    tau = params.mu_bar / params.delta
    return float(params.K * gammainc(params.K + 1, tau))


def bound_property_suite(delta_grid: Sequence[float], K_grid: Sequence[int]) -> PropertyReport:
    """Check the structural properties of lambda*(delta, K) on finite grids.
    Limits are checked at fixed points: delta = 1e4 for full utilization, delta = 1e-4 for K admissions per message,
    and lambda*(0.8/400, 400) for the utilization reachable with one message per K jobs.
    :param delta_grid: message rates, all positive
    :param K_grid: queue limits, all >= 1
    :except ValueError: if a grid is empty or holds invalid values
    :return: a report with one entry per check, failed checks included
    """
    if not delta_grid or not K_grid:
        raise ValueError("analytic: property suite needs nonempty grids")
    if any(not d > 0 for d in delta_grid) or any(k < 1 for k in K_grid):
        raise ValueError("analytic: property suite needs positive grids")

    deltas = sorted(set(float(d) for d in delta_grid))
    Ks = sorted(set(int(k) for k in K_grid))
    table = np.array([[throughput_bound(BoundParams(delta=d, K=k)) for d in deltas] for k in Ks])
    report = PropertyReport()

    for row, k in zip(table, Ks):
        if len(deltas) > 1:
            step = float(np.diff(row).min())
            report.add(f"increasing_in_delta[K={k}]", step > 0, step)
    for col, d in zip(table.T, deltas):
        if len(Ks) > 1:
            step = float(np.diff(col).min())
            report.add(f"increasing_in_K[delta={d:g}]", step > 0, step)

    for k in Ks:
        gap = 1.0 - throughput_bound(BoundParams(delta=1e4, K=k))
        report.add(f"full_utilization[K={k}]", 0 <= gap < 1e-3, gap, "1 - lambda*(1e4, K)")

        small = throughput_bound(BoundParams(delta=1e-4, K=k))
        ratio_gap = abs(small / 1e-4 - k)
        report.add(f"admissions_per_message[K={k}]", ratio_gap < 1e-3 * k, ratio_gap, "|lambda*(1e-4, K)/1e-4 - K|")

        report.add(f"vanishing_throughput[K={k}]", small < 1e-3 * k, small, "lambda*(1e-4, K)")

    a, K_large = 0.8, 400
    gap = abs(throughput_bound(BoundParams(delta=a / K_large, K=K_large)) - a)
    report.add("utilization_per_K_messages", gap < 0.02, gap, "|lambda*(0.8/400, 400) - 0.8|")

    for k in Ks:
        worst = 0.0
        for d in deltas:
            h = 1e-5 * d
            numeric = (throughput_bound(BoundParams(delta=d + h, K=k))
                       - throughput_bound(BoundParams(delta=d - h, K=k))) / (2 * h)
            exact = bound_derivative(BoundParams(delta=d, K=k))
            worst = max(worst, abs(numeric - exact) / max(1.0, abs(exact)))
        report.add(f"derivative_identity[K={k}]", worst < 1e-5, worst, "central difference vs K - K alpha_K")

    taus = np.linspace(0.1, 10.0, 100)
    for k in Ks:
        second = concavity_residuals(k, taus)
        report.add(f"concave_M[K={k}]", float(second.max()) <= 1e-13, float(second.max()), "max second difference")

    return report


def truncated_poisson_probs(tau: float, K: int) -> np.ndarray:
    """Distribution of the number of jobs left after a window of length tau that started with K jobs.
    p_k = e^{-tau} tau^{K-k} / (K-k)! for k > 0 and p_0 = 1 - alpha_{K-1}(tau)."""
    terms = poisson_terms(tau, K - 1)
    probs = np.empty(K + 1)
    probs[1:] = terms[::-1]
    probs[0] = gammainc(K, tau) if tau > 0 else 0.0
    return probs


def update_transition_probs(law: UpdateLaw) -> np.ndarray:
    """The probabilities p_0..p_K that k jobs remain at an update of a server that was closed with K jobs."""
    return truncated_poisson_probs(law.tau, law.K)


def _check_population(N: int, lam: float):
    if isinstance(N, bool) or int(N) != N or N < 1:
        raise ValueError(f"analytic: N >= 1 required, got {N}")
    if not lam > 0 or math.isinf(lam):
        raise ValueError(f"analytic: 0 < lambda < inf required, got {lam}")


def open_closed_from_load(load: float, N: int) -> np.ndarray:
    """Open/closed law with offered load xN: entry n is proportional to load^{N-n} / (N-n)!
    Evaluated with log-gamma and log-sum-exp, which keeps N up to 1e5 finite."""
    j = np.arange(N + 1)
    log_weights = j * math.log(load) - gammaln(j + 1)
    probs = np.exp(log_weights - logsumexp(log_weights))
    return probs[::-1].copy()


def erlang_loss(load: float, N: int) -> float:
    """(load^N / N!) / sum_{w<=N} load^w / w!, by the Erlang loss recursion B_n = a B_{n-1} / (n + a B_{n-1}) run on
    logarithms."""
    log_load = math.log(load)
    log_b = 0.0
    for n in range(1, N + 1):
        log_b = log_load + log_b - math.log(n + load * math.exp(log_b))
    return math.exp(log_b)


def open_closed_pmf(N: int, lam: float, law: UpdateLaw) -> np.ndarray:
    """Equilibrium probability of n open and N - n closed servers, for n = 0..N."""
    _check_population(N, lam)
    x = lam * law.tau / expected_admissions(law)
    return open_closed_from_load(x * N, int(N))


def blocking_finite(N: int, lam: float, law: UpdateLaw) -> float:
    """Blocking probability L_N of the scheme with N servers (probability of zero open servers)."""
    _check_population(N, lam)
    x = lam * law.tau / expected_admissions(law)
    return erlang_loss(x * N, int(N))


def blocking_limit(lam: float, delta: float, K: int) -> float:
    """Many-server limit of the blocking probability, max{0, 1 - lambda*(delta, K) / lambda}."""
    if not lam > 0:
        raise ValueError(f"analytic: lambda > 0 required, got {lam}")
    return max(0.0, 1.0 - throughput_bound(BoundParams(delta=delta, K=K)) / lam)


def messages_per_admitted_job(law: UpdateLaw) -> float:
    """Average number of messages per admitted job, 1 / M_K(tau), independent of lambda and N."""
    return 1.0 / expected_admissions(law)


def extension_derived(params: ExtensionParams) -> ExtensionDerived:
    """Update outcome probabilities and relative throughput values of the cool-down extension.
    :except ValueError: if tau3 = 0, which makes 1 - q22 vanish
    """
    t1, t2, t3 = params.tau1, params.tau2, params.tau3
    e1, e2, e3 = math.exp(-t1), math.exp(-t2), math.exp(-t3)

    p20 = e1 * (1 - t2 * e2 - e2) + (1 - e1) * (1 - e2)
    p22 = e1 * e2
    q20 = 1 - e3 - t3 * e3
    q22 = e3
    if not 1 - q22 > 0:
        raise ValueError("analytic: extension needs tau3 > 0 (1 - q22 = 0)")

    kappa3 = p22 / (1 - q22)
    return ExtensionDerived(
        p20=p20, p21=1 - p20 - p22, p22=p22,
        q20=q20, q21=1 - q20 - q22, q22=q22,
        gamma1=p20 + p22 * q20 / (1 - q22), gamma2=1.0,
        kappa1=1.0, kappa2=1.0, kappa3=kappa3,
    )


def _extension_mean_closed_time(params: ExtensionParams, d: ExtensionDerived) -> float:
    return d.kappa1 * params.tau1 + d.kappa2 * params.tau2 + d.kappa3 * params.tau3


def extension_metrics(params: ExtensionParams) -> ExtensionMetrics:
    """Maximum throughput, messages per admitted job and mean queue position of admitted jobs of the extension."""
    d = extension_derived(params)
    gamma = d.gamma1 + d.gamma2
    return ExtensionMetrics(
        lambda_star_ext=gamma / _extension_mean_closed_time(params, d),
        u=(d.kappa2 + d.kappa3) / gamma,
        q=math.exp(-params.tau1) / gamma,
    )


def extension_open_closed_pmf(N: int, lam: float, params: ExtensionParams) -> np.ndarray:
    _check_population(N, lam)
    d = extension_derived(params)
    x = lam * _extension_mean_closed_time(params, d) / (d.gamma1 + d.gamma2)
    return open_closed_from_load(x * N, int(N))


def extension_blocking_finite(N: int, lam: float, params: ExtensionParams) -> float:
    _check_population(N, lam)
    d = extension_derived(params)
    x = lam * _extension_mean_closed_time(params, d) / (d.gamma1 + d.gamma2)
    return erlang_loss(x * N, int(N))


def bound_curve(K: int, deltas: Sequence[float], mu_bar: float = 1.0) -> List[float]:
    return [throughput_bound(BoundParams(delta=d, K=K, mu_bar=mu_bar)) for d in deltas]

