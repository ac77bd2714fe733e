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
from typing import List, Optional
from config import PolicyConfig
from schemes.policy import CLOSED, OPEN, Policy
from schemes.selection import SELECTORS

A1 = "A1"
B1 = "B1"
A2 = "A2"
B2 = "B2"
B3 = "B3"

TAG_B1_END = 1
TAG_B2_END = 2
TAG_B3_END = 3


class ExtensionPolicy(Policy):
    """Cool-down extension for K=2.

    A1: open and idle with no jobs. A job moves the server to B1, closed for tau1 while working.
    B1 ends silently in A2: open and idle with at most one job. A job moves the server to B2, closed for tau2.
    B2 and B3 end with an update reporting j jobs: j=0 goes to A1, j=1 to B1 and j=2 to B3, closed for tau3.
    Arrivals pick among all open servers, A1 and A2 alike.
    """

    def __init__(self, config: PolicyConfig):
        super().__init__(config)
        params = config.extension_params()
        self.tau1, self.tau2, self.tau3 = params.tau1, params.tau2, params.tau3
        self.phase: List[str] = []
        self.open_set = None

    def _start(self, N: int):
        self.open_set = SELECTORS[self.config.selection](N)
        self.phase = [A1] * N
        for name in (A1, B1, A2, B2, B3):
            self.phase_counts[name] = 0
        for sid in range(N):
            self.open_set.add(sid, 0.0)
            self._move(None, A1)
            self.sim.set_working(sid, False)

    def _enter(self, sid: int, phase: str, now: float):
        self._move(self.phase[sid], phase)
        self.phase[sid] = phase
        entry = self.entries[sid]

        if phase in (A1, A2):
            entry.label = OPEN
            entry.next_update = None
            # B1 ends without an update, so an A2 server keeps the FCFS key of the dispatch that closed it
            self.open_set.add(sid, entry.last_interaction)
            self.sim.set_working(sid, False)
            return

        entry.label = CLOSED
        self.open_set.discard(sid)
        duration, tag = {B1: (self.tau1, TAG_B1_END), B2: (self.tau2, TAG_B2_END), B3: (self.tau3, TAG_B3_END)}[phase]
        entry.next_update = None if phase == B1 else now + duration
        self.sim.schedule_timer(sid, now + duration, tag)
        self.sim.set_working(sid, True)

    def select(self, now: float) -> Optional[int]:
        return self.open_set.choose(self.sim.selection)

    def on_dispatch(self, sid: int, now: float):
        entry = self.entries[sid]
        entry.sent_since += 1
        entry.last_interaction = now
        self._enter(sid, B1 if self.phase[sid] == A1 else B2, now)

    def on_timer(self, sid: int, now: float, tag: int):
        if tag == TAG_B1_END:
            self._enter(sid, A2, now)
            return

        entry = self.entries[sid]
        reported = self.sim.report(sid, source=self.phase[sid])
        entry.last_report = reported
        entry.sent_since = 0
        entry.last_interaction = now
        self._enter(sid, (A1, B1, B3)[reported], now)

    @property
    def open_count(self) -> int:
        return len(self.open_set)

    @property
    def message_budget(self) -> float:
        return 1.0 / min(self.tau2, self.tau3)

    @property
    def min_update_gap(self) -> float:
        return min(self.tau2, self.tau3)
