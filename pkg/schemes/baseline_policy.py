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
from typing import Optional
from config import PolicyConfig
from schemes.policy import CLOSED, OPEN, Policy
from schemes.selection import SELECTORS


class BaselinePolicy(Policy):
    """The hyper-scalable scheme.
    A server is open while its state is below K. The job that brings it to K closes it, and exactly tau later the
    dispatcher requests its queue length: below K reopens it, K keeps it closed for another tau. Closed servers work,
    open servers idle.
    """

    # whether open servers keep serving their jobs
    works_while_open = False

    def __init__(self, config: PolicyConfig):
        super().__init__(config)
        self.tau = config.tau
        self.open_set = None

    def _start(self, N: int):
        self.open_set = SELECTORS[self.config.selection](N)
        for sid in range(N):
            self.open_set.add(sid, 0.0)
            self._move(None, OPEN)
            self._set_working(sid, closed=False)

    def _set_working(self, sid: int, closed: bool):
        self.sim.set_working(sid, closed or self.works_while_open, virtual_working=closed)

    def select(self, now: float) -> Optional[int]:
        return self.open_set.choose(self.sim.selection)

    def on_dispatch(self, sid: int, now: float):
        entry = self.entries[sid]
        entry.sent_since += 1
        entry.last_interaction = now
        if entry.state < self.K:
            self.open_set.touch(sid, entry.last_interaction)
            return

        self.open_set.discard(sid)
        entry.label = CLOSED
        self._move(OPEN, CLOSED)
        self._schedule_update(sid, now)
        self._set_working(sid, closed=True)

    def _schedule_update(self, sid: int, now: float):
        entry = self.entries[sid]
        entry.next_update = now + self.tau
        self.sim.schedule_timer(sid, entry.next_update)

    def on_timer(self, sid: int, now: float, tag: int):
        entry = self.entries[sid]
        entry.last_report = self.sim.report(sid)
        entry.sent_since = 0
        entry.last_interaction = now
        entry.next_update = None

        if entry.last_report >= self.K:
            self._schedule_update(sid, now)
            return

        entry.label = OPEN
        self._move(CLOSED, OPEN)
        self.open_set.add(sid, entry.last_interaction)
        self._set_working(sid, closed=False)

    @property
    def open_count(self) -> int:
        return len(self.open_set)

    @property
    def message_budget(self) -> float:
        return 1.0 / self.tau

    @property
    def min_update_gap(self) -> float:
        return self.tau
