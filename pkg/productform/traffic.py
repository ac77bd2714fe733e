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
import numpy as np
from pydantic import BaseModel
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components
from productform.network_spec import NetworkSpec

NORMALIZATION_KAPPA1 = "kappa1=1"
SOLVE_TOLERANCE = 1e-9


class ThroughputSolution(BaseModel):
    """Relative throughput values: gamma per class of the single-server node, kappa per infinite-server node."""
    gamma: np.ndarray
    kappa: np.ndarray
    normalization: str = NORMALIZATION_KAPPA1
    residual: float = 0.0

    class Config:
        arbitrary_types_allowed = True

    @property
    def visits(self) -> np.ndarray:
        return np.concatenate((self.gamma, self.kappa))

    def scaled(self, c: float) -> ThroughputSolution:
        return ThroughputSolution(gamma=self.gamma * c, kappa=self.kappa * c,
                                  normalization=f"{self.normalization}*{c:g}", residual=self.residual * c)


def traffic_residual(spec: NetworkSpec, visits: np.ndarray) -> float:
    """max |v P - v| over all sources."""
    return float(np.abs(visits @ spec.routing - visits).max())


def check_irreducible(spec: NetworkSpec):
    """Raise a ValueError naming a source that is not mutually reachable with the first node."""
    graph = csr_matrix(spec.routing > 0)
    n_components, _ = connected_components(graph, directed=True, connection='strong')
    if n_components == 1:
        return

    root = spec.A
    forward = set(breadth_first_order(graph, root, directed=True, return_predecessors=False).tolist())
    backward = set(breadth_first_order(graph.T.tocsr(), root, directed=True, return_predecessors=False).tolist())
    for i, label in enumerate(spec.labels):
        if i not in forward:
            raise ValueError(f"ThroughputSolution: routing is reducible, {label} unreachable from {spec.labels[root]}")
        if i not in backward:
            raise ValueError(f"ThroughputSolution: routing is reducible, {spec.labels[root]} unreachable from {label}")


def solve_traffic(spec: NetworkSpec) -> ThroughputSolution:
    """Solve the traffic equations v = v P with the first node pinned to kappa_1 = 1.
    The balance equation of that node is replaced by the normalization, which is valid since any single equation of an
    irreducible system is implied by the others.
    :param spec: the network
    :except ValueError: if the routing is reducible or the linear system is ill-conditioned
    :return: the ThroughputSolution including its residual
    """
    check_irreducible(spec)

    size = spec.size
    pinned = spec.A
    system = spec.routing.T - np.eye(size)
    system[pinned, :] = 0.0
    system[pinned, pinned] = 1.0
    rhs = np.zeros(size)
    rhs[pinned] = 1.0

    visits = np.linalg.solve(system, rhs)
    residual = traffic_residual(spec, visits)
    if residual > SOLVE_TOLERANCE or not np.all(visits > 0):
        raise ValueError(f"ThroughputSolution: traffic equations not solved, residual={residual:.3g}")
    logging.debug(f"Traffic equations solved: {spec.labels} -> {visits}, residual={residual:.3g}")

    return ThroughputSolution(gamma=visits[:spec.A].copy(), kappa=visits[spec.A:].copy(),
                              normalization=NORMALIZATION_KAPPA1, residual=residual)
