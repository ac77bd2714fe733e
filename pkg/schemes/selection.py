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
from typing import List, Optional, Tuple
from simcore.streams import BufferedStream


class RandomOpenSet:
    """Open servers in a swap-remove list; choose is uniform over the members."""

    def __init__(self, N: int):
        self.members: List[int] = []
        self.position = [-1] * N

    def add(self, sid: int, now: float):
        if self.position[sid] < 0:
            self.position[sid] = len(self.members)
            self.members.append(sid)

    def touch(self, sid: int, now: float):
        pass

    def discard(self, sid: int):
        pos = self.position[sid]
        if pos < 0:
            return
        last = self.members.pop()
        if last != sid:
            self.members[pos] = last
            self.position[last] = pos
        self.position[sid] = -1

    def choose(self, stream: BufferedStream) -> Optional[int]:
        if not self.members:
            return None
        return self.members[stream.index(len(self.members))]

    def __contains__(self, sid: int) -> bool:
        return self.position[sid] >= 0

    def __len__(self) -> int:
        return len(self.members)


class FcfsOpenSet:
    """Open servers keyed by the time of their latest interaction; choose returns the earliest, ties by index.
    Stale heap entries are skipped lazily."""

    def __init__(self, N: int):
        self.heap: List[Tuple[float, int, int]] = []
        self.stamp = [0] * N
        self.active = [False] * N
        self.size = 0

    def add(self, sid: int, now: float):
        if not self.active[sid]:
            self.active[sid] = True
            self.size += 1
        self.stamp[sid] += 1
        heapq.heappush(self.heap, (now, sid, self.stamp[sid]))

    def touch(self, sid: int, now: float):
        if self.active[sid]:
            self.add(sid, now)

    def discard(self, sid: int):
        if self.active[sid]:
            self.active[sid] = False
            self.size -= 1
            self.stamp[sid] += 1

    def choose(self, stream: BufferedStream = None) -> Optional[int]:
        while self.heap:
            _, sid, stamp = self.heap[0]
            if self.active[sid] and stamp == self.stamp[sid]:
                return sid
            heapq.heappop(self.heap)
        return None

    def __contains__(self, sid: int) -> bool:
        return self.active[sid]

    def __len__(self) -> int:
        return self.size


SELECTORS = {
    "random": RandomOpenSet,
    "fcfs": FcfsOpenSet,
}
