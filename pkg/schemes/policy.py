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
from abc import ABC, abstractmethod
from typing import TYPE_CHECKING, Dict, List, Optional
from config import PolicyConfig

if TYPE_CHECKING:
    from simcore.engine import Simulation

OPEN = "open"
CLOSED = "closed"


class DispatcherEntry:
    """What the dispatcher knows about one server.
    state = last_report + sent_since is an upper bound on the server's queue length."""
    __slots__ = ('last_report', 'sent_since', 'label', 'last_interaction', 'next_update')

    def __init__(self, label: str = OPEN):
        self.last_report = 0
        self.sent_since = 0
        self.label = label
        self.last_interaction = 0.0
        self.next_update: Optional[float] = None

    @property
    def state(self) -> int:
        return self.last_report + self.sent_since

    def __repr__(self):
        return f"DispatcherEntry({self.label}, report={self.last_report}, sent={self.sent_since})"


class Policy(ABC):
    """An abstract dispatcher policy, driven by the simulation through select, on_dispatch and on_timer.
    A policy keeps one DispatcherEntry per server and tells the simulation which servers work via set_working.
    """

    KIND_FIELD = 'kind'

    # the dispatcher sees a virtual queue that is only served while the server is closed
    coupled = False
    # the policy is only defined for exponential services
    exponential_only = False
    # consecutive updates of a server are exactly min_update_gap apart, rather than at least
    exact_gap = False

    @abstractmethod
    def __init__(self, config: PolicyConfig):
        self.config = config
        self.K = config.K
        self.sim: Optional[Simulation] = None
        self.entries: List[DispatcherEntry] = []
        self.phase_counts: Dict[str, int] = {}

    def attach(self, sim: Simulation):
        """Bind to a simulation and set up the state at time 0."""
        self.sim = sim
        self.entries = [DispatcherEntry() for _ in range(sim.N)]
        self._start(sim.N)

    @abstractmethod
    def _start(self, N: int):
        pass

    @abstractmethod
    def select(self, now: float) -> Optional[int]:
        """Pick a server for an arriving job.
        :return: a server index, or None if the job is blocked
        """
        pass

    @abstractmethod
    def on_dispatch(self, sid: int, now: float):
        """Account for a job that was just sent to server sid."""
        pass

    @abstractmethod
    def on_timer(self, sid: int, now: float, tag: int):
        """Handle a timer of server sid that this policy scheduled."""
        pass

    @property
    @abstractmethod
    def open_count(self) -> int:
        """Number of servers that may receive a job right now."""
        pass

    @property
    @abstractmethod
    def message_budget(self) -> float:
        """The message rate per server this policy never exceeds, delta."""
        pass

    @property
    @abstractmethod
    def min_update_gap(self) -> float:
        pass

    def upper_bound(self, sid: int) -> int:
        return self.entries[sid].state

    def _move(self, old: Optional[str], new: str):
        if old is not None:
            self.phase_counts[old] -= 1
        self.phase_counts[new] = self.phase_counts.get(new, 0) + 1

    def __str__(self):
        return self.config.label()

    @staticmethod
    def create(config: PolicyConfig) -> Policy:
        """A factory method to create a new Policy.
        :param config: the policy description
        :except ValueError: if an unsupported policy kind was provided
        :return: a new Policy
        """
        from schemes.baseline_policy import BaselinePolicy
        from schemes.non_idling_policy import NonIdlingPolicy
        from schemes.work_conserving_policy import WorkConservingPolicy
        from schemes.aujsq_policy import AujsqPolicy
        from schemes.extension_policy import ExtensionPolicy

        supported_policy_kinds = {
            "baseline": BaselinePolicy,
            "non_idling": NonIdlingPolicy,
            "work_conserving": WorkConservingPolicy,
            "aujsq": AujsqPolicy,
            "extension": ExtensionPolicy,
        }

        if config.kind not in supported_policy_kinds:
            raise ValueError(f"Policy: unsupported kind: {config.kind}")
        return supported_policy_kinds[config.kind](config)
