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
import itertools
import logging
import math
from typing import Dict, Iterator, List, Tuple
import numpy as np
from pydantic import BaseModel
from scipy.special import gammaln, logsumexp
from analytic import open_closed_from_load
from productform.network_spec import NetworkSpec
from productform.traffic import ThroughputSolution

DEFAULT_MAX_STATES = 10 ** 7

OrderedState = Tuple[Tuple[int, ...], Tuple[int, ...]]


class StateDist(BaseModel):
    """Equilibrium over unordered states (n_1..n_A, m_1..m_B); one support row per state."""
    support: np.ndarray
    probs: np.ndarray
    logF: float
    A: int

    class Config:
        arbitrary_types_allowed = True

    @property
    def N(self) -> int:
        return int(self.support[0].sum())

    def index(self) -> Dict[Tuple[int, ...], int]:
        return {tuple(int(x) for x in row): i for i, row in enumerate(self.support)}


class OrderedStateDist(BaseModel):
    """Equilibrium over ordered states (c, b): the class sequence at the single-server node, head first, and the node
    occupancies."""
    support: List[OrderedState]
    probs: np.ndarray
    A: int

    class Config:
        arbitrary_types_allowed = True


def compositions(total: int, bins: int) -> Iterator[Tuple[int, ...]]:
    """All tuples of `bins` nonnegative integers summing to `total`, in lexicographic order."""
    if bins == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in compositions(total - first, bins - 1):
            yield (first,) + rest


def support_size(N: int, bins: int) -> int:
    return math.comb(N + bins - 1, bins - 1)


def ordered_support_size(N: int, A: int, B: int) -> int:
    return sum(A ** length * support_size(N - length, B) for length in range(N + 1))


def check_state_cap(size: int, max_states: int, what: str = "states"):
    if size > max_states:
        raise ValueError(f"StateDist: {size} {what} exceed the cap of {max_states}")


def enumerate_support(spec: NetworkSpec, max_states: int = DEFAULT_MAX_STATES) -> np.ndarray:
    check_state_cap(support_size(spec.N, spec.size), max_states)
    return np.array(list(compositions(spec.N, spec.size)), dtype=np.int64)


def enumerate_ordered_support(spec: NetworkSpec, max_states: int = DEFAULT_MAX_STATES) -> List[OrderedState]:
    """Ordered states by (length, sequence, b), sequences and b lexicographic."""
    check_state_cap(ordered_support_size(spec.N, spec.A, spec.B), max_states, "ordered states")
    states = []
    for length in range(spec.N + 1):
        node_parts = list(compositions(spec.N - length, spec.B))
        for seq in itertools.product(range(spec.A), repeat=length):
            states.extend((seq, b) for b in node_parts)
    return states


def _log_factors(spec: NetworkSpec, sol: ThroughputSolution) -> Tuple[np.ndarray, np.ndarray]:
    class_log = np.log(sol.gamma / spec.rate)
    node_log = np.log(sol.kappa * np.asarray(spec.node_means))
    return class_log, node_log


def equilibrium_pmf(spec: NetworkSpec, sol: ThroughputSolution, max_states: int = DEFAULT_MAX_STATES) -> StateDist:
    """Product-form equilibrium over unordered states.
    pi(n, m) is proportional to multinomial(n) * prod (gamma_i / (lambda N))^{n_i} * prod (kappa_j tau_j)^{m_j} / m_j!
    :param spec: the network
    :param sol: any scaling of the traffic solution; the result does not depend on it
    :param max_states: refuse supports larger than this
    :except ValueError: if the support exceeds max_states
    :return: the StateDist with log normalization constant
    """
    support = enumerate_support(spec, max_states)
    n, m = support[:, :spec.A], support[:, spec.A:]
    class_log, node_log = _log_factors(spec, sol)

    log_weights = (gammaln(n.sum(axis=1) + 1) - gammaln(n + 1).sum(axis=1) + n @ class_log
                   + m @ node_log - gammaln(m + 1).sum(axis=1))
    logF = float(logsumexp(log_weights))
    logging.debug(f"Product form over {len(support)} states, log F_N = {logF:.6g}")
    return StateDist(support=support, probs=np.exp(log_weights - logF), logF=logF, A=spec.A)


def ordered_equilibrium_pmf(spec: NetworkSpec, sol: ThroughputSolution,
                            max_states: int = DEFAULT_MAX_STATES) -> OrderedStateDist:
    """Equilibrium over ordered states, prod (gamma_{c_j} / (lambda N)) * prod (kappa_j tau_j)^{b_j} / b_j!"""
    support = enumerate_ordered_support(spec, max_states)
    class_log, node_log = _log_factors(spec, sol)

    log_weights = np.empty(len(support))
    for i, (seq, b) in enumerate(support):
        b = np.asarray(b)
        log_weights[i] = class_log[list(seq)].sum() + b @ node_log - gammaln(b + 1).sum()
    return OrderedStateDist(support=support, probs=np.exp(log_weights - logsumexp(log_weights)), A=spec.A)


def unordered_key(state: OrderedState, A: int) -> Tuple[int, ...]:
    seq, b = state
    counts = [0] * A
    for c in seq:
        counts[c] += 1
    return tuple(counts) + tuple(b)


def aggregate_orderings(ordered: OrderedStateDist, dist: StateDist) -> np.ndarray:
    """Sum ordered probabilities over all orderings of each unordered state, aligned with dist.support."""
    index = dist.index()
    result = np.zeros(len(dist.support))
    for state, p in zip(ordered.support, ordered.probs):
        result[index[unordered_key(state, ordered.A)]] += p
    return result


def aggregate_open_closed(dist: StateDist) -> np.ndarray:
    """Probability of n customers at the single-server node, for n = 0..N."""
    at_node = dist.support[:, :dist.A].sum(axis=1)
    return np.bincount(at_node, weights=dist.probs, minlength=dist.N + 1)


def capacity_ratio(spec: NetworkSpec, sol: ThroughputSolution) -> float:
    """R = sum gamma / sum kappa tau."""
    return float(sol.gamma.sum() / (sol.kappa @ np.asarray(spec.node_means)))


def open_closed_closed_form(spec: NetworkSpec, sol: ThroughputSolution) -> np.ndarray:
    """Aggregate law of customers at the single-server node from sum gamma and sum kappa tau alone."""
    lam = spec.rate / spec.N
    return open_closed_from_load(lam / capacity_ratio(spec, sol) * spec.N, spec.N)


def limit_blocking(spec: NetworkSpec, sol: ThroughputSolution, lam: float) -> float:
    """Many-customer limit of the probability that the single-server node is empty, max{0, 1 - R / lambda}."""
    if not lam > 0:
        raise ValueError(f"StateDist: lambda > 0 required, got {lam}")
    return max(0.0, 1.0 - capacity_ratio(spec, sol) / lam)
