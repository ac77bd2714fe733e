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
import itertools
from typing import List, NamedTuple, Optional

# events at equal times: timers (updates, phase ends) first, then arrivals, then service events
PRIORITY_TIMER = 0
PRIORITY_ARRIVAL = 1
PRIORITY_SERVICE = 2

KIND_TIMER = "timer"
KIND_ARRIVAL = "arrival"
KIND_TICK = "tick"
KIND_COMPLETION = "completion"

NO_SERVER = -1


class Event(NamedTuple):
    time: float
    priority: int
    server: int
    seq: int
    kind: str
    token: int


class EventCalendar:
    """Heap of pending events ordered by (time, priority, server, insertion sequence)."""

    def __init__(self):
        self._heap: List[Event] = []
        self._seq = itertools.count()

    def schedule(self, time: float, priority: int, kind: str, server: int = NO_SERVER, token: int = 0):
        heapq.heappush(self._heap, Event(time, priority, server, next(self._seq), kind, token))

    def pop(self) -> Optional[Event]:
        if self._heap:
            return heapq.heappop(self._heap)
        return None

    def __len__(self) -> int:
        return len(self._heap)
