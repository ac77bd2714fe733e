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
import heapq
from typing import List, Optional
from config import PolicyConfig
from schemes.policy import CLOSED, OPEN, Policy


class AujsqPolicy(Policy):
    """Every server is updated exactly every tau time units on a timer, from a per-server phase.
    Jobs go to a server of minimal state among those below K, ties to the smallest index. Servers always work.
    """

    exact_gap = True

    def __init__(self, config: PolicyConfig):
        super().__init__(config)
        self.tau = config.tau
        self.buckets: List[List[int]] = []
        self.in_bucket: List[List[bool]] = []
        self.n_open = 0

    def _start(self, N: int):
        self.buckets = [[] for _ in range(self.K)]
        self.in_bucket = [[False] * N for _ in range(self.K)]
        self.n_open = 0
        for sid in range(N):
            self._place(sid, None)
            self.sim.set_working(sid, True)
            self.sim.schedule_timer(sid, self._phase(sid, N))

    def _phase(self, sid: int, N: int) -> float:
        mode = self.config.aujsq_phase
        if mode == "synchronized":
            return 0.0
        if mode == "staggered":
            return sid / N * self.tau
        return self.sim.phases.uniform() * self.tau

    @staticmethod
    def _label(state: int) -> str:
        return f"state{state}"

    def _place(self, sid: int, old_state: Optional[int]):
        """Move sid from old_state to its current state in the buckets and the phase counts."""
        state = self.entries[sid].state
        self._move(None if old_state is None else self._label(old_state), self._label(state))
        if old_state is None or old_state >= self.K:
            if state < self.K:
                self.n_open += 1
        elif state >= self.K:
            self.n_open -= 1
        if state < self.K and not self.in_bucket[state][sid]:
            self.in_bucket[state][sid] = True
            heapq.heappush(self.buckets[state], sid)

    def select(self, now: float) -> Optional[int]:
        for state, bucket in enumerate(self.buckets):
            while bucket:
                sid = bucket[0]
                if self.entries[sid].state == state:
                    return sid
                heapq.heappop(bucket)
                self.in_bucket[state][sid] = False
        return None

    def on_dispatch(self, sid: int, now: float):
        entry = self.entries[sid]
        old_state = entry.state
        entry.sent_since += 1
        entry.last_interaction = now
        entry.label = OPEN if entry.state < self.K else CLOSED
        self._place(sid, old_state)

    def on_timer(self, sid: int, now: float, tag: int):
        entry = self.entries[sid]
        old_state = entry.state
        entry.last_report = self.sim.report(sid)
        entry.sent_since = 0
        entry.last_interaction = now
        entry.label = OPEN if entry.state < self.K else CLOSED
        entry.next_update = now + self.tau
        self._place(sid, old_state)
        self.sim.schedule_timer(sid, entry.next_update)

    @property
    def open_count(self) -> int:
        return self.n_open

    @property
    def message_budget(self) -> float:
        return 1.0 / self.tau

    @property
    def min_update_gap(self) -> float:
        return self.tau
