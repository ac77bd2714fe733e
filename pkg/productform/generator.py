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
from typing import Any, Dict, Hashable, List, Union
import numpy as np
from pydantic import BaseModel
from scipy.sparse import coo_matrix, csr_matrix, identity, spmatrix, vstack
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve
from productform.equilibrium import DEFAULT_MAX_STATES, enumerate_ordered_support, enumerate_support
from productform.network_spec import NetworkSpec

STATIONARY_TOLERANCE = 1e-8


class Generator(BaseModel):
    """A CTMC rate matrix over an enumerated state list.
    Transitions that leave the state unchanged (self-routing) are not part of Q but are kept in self_loop_rates, so that
    the off-diagonal row sum plus the self-loop rate equals the total event rate exit_rates."""
    Q: csr_matrix
    states: List[Any]
    exit_rates: np.ndarray
    self_loop_rates: np.ndarray

    class Config:
        arbitrary_types_allowed = True

    @property
    def off_diagonal_rates(self) -> np.ndarray:
        return -self.Q.diagonal()


class _Builder:

    def __init__(self, states: List[Hashable]):
        self.states = states
        self.index: Dict[Hashable, int] = {s: i for i, s in enumerate(states)}
        self.rows: List[int] = []
        self.cols: List[int] = []
        self.vals: List[float] = []
        self.exit_rates = np.zeros(len(states))
        self.self_loops = np.zeros(len(states))

    def add(self, i: int, target: Hashable, rate: float):
        if rate <= 0:
            return
        self.exit_rates[i] += rate
        j = self.index[target]
        if j == i:
            self.self_loops[i] += rate
            return
        self.rows.append(i)
        self.cols.append(j)
        self.vals.append(rate)

    def build(self) -> Generator:
        n = len(self.states)
        off = coo_matrix((self.vals, (self.rows, self.cols)), shape=(n, n)).tocsr()
        diag = np.asarray(off.sum(axis=1)).ravel()
        Q = (off - csr_matrix((diag, (np.arange(n), np.arange(n))), shape=(n, n))).tocsr()
        return Generator(Q=Q, states=self.states, exit_rates=self.exit_rates, self_loop_rates=self.self_loops)


def build_generator_ros(spec: NetworkSpec, max_states: int = DEFAULT_MAX_STATES) -> Generator:
    """Rate matrix of the network with random order of service at the single-server node and exponential nodes.
    The single-server node picks a class-i customer with probability a_i / sum(a) at rate lambda*N; node j releases
    customers at rate b_j / tau_j.
    :except ValueError: if the support exceeds max_states
    """
    states = [tuple(int(x) for x in row) for row in enumerate_support(spec, max_states)]
    builder = _Builder(states)
    A, P, mu = spec.A, spec.routing, spec.node_rates

    for i, state in enumerate(states):
        at_node = sum(state[:A])
        sources = [(c, spec.rate * state[c] / at_node) for c in range(A) if state[c] > 0] if at_node else []
        sources += [(A + j, state[A + j] * mu[j]) for j in range(spec.B) if state[A + j] > 0]
        for source, rate in sources:
            for dest in np.flatnonzero(P[source]):
                target = list(state)
                target[source] -= 1
                target[dest] += 1
                builder.add(i, tuple(target), rate * P[source, dest])

    generator = builder.build()
    logging.debug(f"ROS generator: {len(states)} states, {generator.Q.nnz} entries")
    return generator


def build_generator_fcfs(spec: NetworkSpec, max_states: int = DEFAULT_MAX_STATES) -> Generator:
    """Rate matrix over ordered states (c, b) with first-come-first-served order at the single-server node.
    The head c[0] completes at rate lambda*N; customers routed to a class join at the end of c.
    :except ValueError: if the ordered support exceeds max_states
    """
    states = enumerate_ordered_support(spec, max_states)
    builder = _Builder(states)
    A, P, mu = spec.A, spec.routing, spec.node_rates

    for i, (seq, b) in enumerate(states):
        if seq:
            head, rest = seq[0], seq[1:]
            for dest in np.flatnonzero(P[head]):
                if dest < A:
                    target = (rest + (int(dest),), b)
                else:
                    nodes = list(b)
                    nodes[dest - A] += 1
                    target = (rest, tuple(nodes))
                builder.add(i, target, spec.rate * P[head, dest])
        for j in range(spec.B):
            if b[j] == 0:
                continue
            for dest in np.flatnonzero(P[A + j]):
                nodes = list(b)
                nodes[j] -= 1
                if dest < A:
                    target = (seq + (int(dest),), tuple(nodes))
                else:
                    nodes[dest - A] += 1
                    target = (seq, tuple(nodes))
                builder.add(i, target, b[j] * mu[j] * P[A + j, dest])

    generator = builder.build()
    logging.debug(f"FCFS generator: {len(states)} states, {generator.Q.nnz} entries")
    return generator


def stationary_from_generator(Q: Union[Generator, spmatrix, np.ndarray]) -> np.ndarray:
    """Solve pi Q = 0, sum(pi) = 1 directly, with the last balance equation replaced by the normalization.
    :except ValueError: if Q is reducible or the solution is not a probability vector within tolerance
    :return: the stationary vector
    """
    if isinstance(Q, Generator):
        Q = Q.Q
    Q = csr_matrix(Q)
    n = Q.shape[0]
    if n == 1:
        return np.ones(1)

    off = Q - csr_matrix((Q.diagonal(), (np.arange(n), np.arange(n))), shape=(n, n))
    n_components, _ = connected_components(off != 0, directed=True, connection='strong')
    if n_components != 1:
        raise ValueError(f"Generator: not irreducible ({n_components} communicating classes)")

    system = vstack([Q.T.tocsr()[:-1], csr_matrix(np.ones((1, n)))]).tocsc()
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    pi = spsolve(system, rhs)

    residual = float(np.abs(Q.T @ pi).max()) if np.all(np.isfinite(pi)) else np.inf
    if not np.isfinite(residual) or residual > STATIONARY_TOLERANCE or pi.min() < -STATIONARY_TOLERANCE:
        raise ValueError(f"Generator: stationary solve failed, residual={residual:.3g}")
    return pi


def generator_residual(Q: Union[Generator, spmatrix], pi: np.ndarray) -> float:
    """max |pi Q|"""
    if isinstance(Q, Generator):
        Q = Q.Q
    return float(np.abs(Q.T @ pi).max())


def permute_generator(Q: spmatrix, order: np.ndarray) -> csr_matrix:
    """Relabel states: new state i is old state order[i]."""
    P = identity(Q.shape[0], format='csr')[order]
    return (P @ Q @ P.T).tocsr()
