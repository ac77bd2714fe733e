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
import logging
from typing import Dict, List, Optional, Sequence
import numpy as np
from pydantic import BaseModel
from analytic import (ExtensionParams, PropertyReport, UpdateLaw, expected_admissions, extension_derived,
                      open_closed_pmf)
from productform.equilibrium import (DEFAULT_MAX_STATES, StateDist, aggregate_open_closed, aggregate_orderings,
                                     equilibrium_pmf, open_closed_closed_form, ordered_equilibrium_pmf)
from productform.generator import (build_generator_fcfs, build_generator_ros, generator_residual,
                                   stationary_from_generator)
from productform.network_spec import NetworkSpec, baseline_network, erlang_expand, extension_network
from productform.traffic import solve_traffic

DEFAULT_TOLERANCE = 1e-8

SUITE_KS = (1, 2, 3)
SUITE_NS = (2, 3)
SUITE_TAUS = (0.5, 1.0, 2.0)
SUITE_EXTENSION = ExtensionParams(tau1=1.0, tau2=1.0, tau3=1.0)


class InsensitivityEntry(BaseModel):
    M: int
    product_form_deviation: float
    generator_deviation: float
    stage_kappa_spread: float


class InsensitivityReport(BaseModel):
    node: int
    entries: List[InsensitivityEntry]

    @property
    def max_deviation(self) -> float:
        return max(max(x.product_form_deviation, x.generator_deviation) for x in self.entries)


def collapse_stages(support: np.ndarray, spec: NetworkSpec, node: int, M: int) -> np.ndarray:
    """Map states of the M-stage expansion of `node` back onto the original columns by summing stage occupancies."""
    first = spec.A + node
    return np.concatenate((support[:, :first], support[:, first:first + M].sum(axis=1, keepdims=True),
                           support[:, first + M:]), axis=1)


def _aggregate_onto(original: StateDist, support: np.ndarray, probs: np.ndarray) -> np.ndarray:
    index = original.index()
    result = np.zeros(len(original.support))
    for row, p in zip(support, probs):
        result[index[tuple(int(x) for x in row)]] += p
    return result


def insensitivity_check(spec: NetworkSpec, node: int, stages: Sequence[int],
                        max_states: int = DEFAULT_MAX_STATES) -> InsensitivityReport:
    """Replace `node` by M Erlang stages for each M and compare the aggregated equilibrium with the original one.
    Both the expanded product form and the stationary vector of the expanded ROS generator are compared.
    :except ValueError: if an expanded support exceeds max_states
    :return: per M, the max deviation from the original state probabilities
    """
    original = equilibrium_pmf(spec, solve_traffic(spec), max_states)
    entries = []
    for M in stages:
        expanded = erlang_expand(spec, node, M)
        sol = solve_traffic(expanded)
        dist = equilibrium_pmf(expanded, sol, max_states)
        collapsed = collapse_stages(dist.support, spec, node, M)

        pf = _aggregate_onto(original, collapsed, dist.probs)
        gen = _aggregate_onto(original, collapsed, stationary_from_generator(build_generator_ros(expanded, max_states)))

        stage_kappa = sol.kappa[node:node + M]
        entries.append(InsensitivityEntry(
            M=M,
            product_form_deviation=float(np.abs(pf - original.probs).max()),
            generator_deviation=float(np.abs(gen - original.probs).max()),
            stage_kappa_spread=float(stage_kappa.max() - stage_kappa.min()),
        ))
        logging.debug(f"Erlang expansion of {spec.labels[spec.A + node]} with M={M}: {entries[-1]}")
    return InsensitivityReport(node=node, entries=entries)


def cross_check_network(report: PropertyReport, name: str, spec: NetworkSpec, tolerance: float,
                        max_states: int = DEFAULT_MAX_STATES) -> StateDist:
    """Add traffic, ROS generator, FCFS generator and aggregation checks for one network to the report."""
    sol = solve_traffic(spec)
    report.add(f"traffic_residual[{name}]", sol.residual < tolerance, sol.residual)

    dist = equilibrium_pmf(spec, sol, max_states)
    generator = build_generator_ros(spec, max_states)
    balance = generator_residual(generator, dist.probs)
    report.add(f"global_balance[{name}]", balance < tolerance, balance, "max |pi Q| of the product form")
    ros = stationary_from_generator(generator)
    deviation = float(np.abs(ros - dist.probs).max())
    report.add(f"ros_generator[{name}]", deviation < tolerance, deviation, "max |pi - pi_generator|")

    ordered = ordered_equilibrium_pmf(spec, sol, max_states)
    fcfs = stationary_from_generator(build_generator_fcfs(spec, max_states))
    deviation = float(np.abs(fcfs - ordered.probs).max())
    report.add(f"fcfs_generator[{name}]", deviation < tolerance, deviation, "max |pi~ - pi~_generator|")

    deviation = float(np.abs(aggregate_orderings(ordered, dist) - dist.probs).max())
    report.add(f"fcfs_aggregation[{name}]", deviation < tolerance, deviation, "multinomial aggregation vs ROS")

    deviation = float(np.abs(aggregate_open_closed(dist) - open_closed_closed_form(spec, sol)).max())
    report.add(f"open_closed_closed_form[{name}]", deviation < tolerance, deviation)
    return dist


def suite_networks(lam: float = 1.0) -> Dict[str, NetworkSpec]:
    """The networks the verification suite cross-checks, keyed by the name used in its report."""
    networks = {}
    for K in SUITE_KS:
        for N in SUITE_NS:
            for tau in SUITE_TAUS:
                networks[f"baseline K={K} N={N} tau={tau:g}"] = baseline_network(lam, N, UpdateLaw(tau=tau, K=K))
    networks["extension N=2"] = extension_network(lam, 2, SUITE_EXTENSION)
    return networks


def run_verification_suite(tolerance: float = DEFAULT_TOLERANCE, max_states: int = DEFAULT_MAX_STATES,
                           lam: float = 1.0, networks: Optional[Dict[str, NetworkSpec]] = None) -> PropertyReport:
    """Cross-oracle suite over small baseline and extension networks plus the Erlang insensitivity checks.
    :param tolerance: a check fails when its residual reaches this value
    :param max_states: state cap passed to every enumeration
    :param lam: normalized arrival rate of all networks
    :param networks: further networks, e.g. read from files, that get the generic cross-checks
    :return: the report; failures are included, not raised
    """
    report = PropertyReport()

    for K in SUITE_KS:
        for N in SUITE_NS:
            for tau in SUITE_TAUS:
                law = UpdateLaw(tau=tau, K=K)
                name = f"baseline K={K} N={N} tau={tau:g}"
                spec = baseline_network(lam, N, law)
                dist = cross_check_network(report, name, spec, tolerance, max_states)

                gap = abs(solve_traffic(spec).gamma.sum() - expected_admissions(law))
                report.add(f"sum_gamma[{name}]", gap < tolerance, gap, "sum gamma vs M_K(tau)")
                gap = float(np.abs(aggregate_open_closed(dist) - open_closed_pmf(N, lam, law)).max())
                report.add(f"open_closed_pmf[{name}]", gap < tolerance, gap)

    spec = extension_network(lam, 2, SUITE_EXTENSION)
    cross_check_network(report, "extension N=2", spec, tolerance, max_states)
    sol = solve_traffic(spec)
    d = extension_derived(SUITE_EXTENSION)
    gap = float(np.abs(sol.visits - [d.gamma1, d.gamma2, d.kappa1, d.kappa2, d.kappa3]).max())
    report.add("extension_throughputs", gap < tolerance, gap, "traffic solution vs closed forms")

    stages = (1, 2, 4, 8)
    for name, spec, node in (("baseline K=2 N=2 tau=1", baseline_network(lam, 2, UpdateLaw(tau=1.0, K=2)), 0),
                             ("extension N=2 B3", extension_network(lam, 2, SUITE_EXTENSION), 2)):
        result = insensitivity_check(spec, node, stages, max_states)
        for entry in result.entries:
            worst = max(entry.product_form_deviation, entry.generator_deviation)
            report.add(f"erlang_insensitivity[{name} M={entry.M}]", worst < tolerance, worst)
            report.add(f"erlang_stage_throughputs[{name} M={entry.M}]", entry.stage_kappa_spread < tolerance,
                       entry.stage_kappa_spread)

    for name, spec in (networks or {}).items():
        cross_check_network(report, name, spec, tolerance, max_states)

    for failure in report.failures:
        logging.error(f"Verification failed: {failure.name}, residual={failure.residual:.3g}")
    return report
