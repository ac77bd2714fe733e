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
import math
from collections import deque
from typing import List, NamedTuple, Optional, Sequence, TextIO
from pydantic import BaseModel
from analytic import BoundParams, throughput_bound

AUDIT_QUEUE_LIMIT = "queue_limit"
AUDIT_VIEW = "dispatcher_view"
AUDIT_COUPLING = "coupling"
AUDIT_UPDATE_GAP = "update_gap"
AUDIT_MESSAGE_BUDGET = "message_budget"
AUDIT_PASS_ACCOUNTING = "pass_accounting"
AUDIT_NAMES = (AUDIT_QUEUE_LIMIT, AUDIT_VIEW, AUDIT_COUPLING, AUDIT_UPDATE_GAP, AUDIT_MESSAGE_BUDGET,
               AUDIT_PASS_ACCOUNTING)

GAP_TOLERANCE = 1e-9


class AuditError(RuntimeError):
    """A violated hard invariant of the simulation. It points at an implementation bug, never at a legal outcome."""

    def __init__(self, message: str, excerpt: Sequence[str] = ()):
        self.excerpt = list(excerpt)
        super().__init__("\n".join([message] + self.excerpt))


class TraceRecord(NamedTuple):
    time: float
    kind: str
    server: int
    payload: str


def format_trace_line(record: TraceRecord) -> str:
    return f"{record.time:.9g} {record.kind} {record.server} {record.payload}".rstrip() + "\n"


class Trace:
    """The most recent events, kept for audit excerpts, plus an optional dump with one event per line."""

    def __init__(self, path: Optional[str] = None, keep: int = 40):
        self.recent = deque(maxlen=keep)
        self.path = path
        self._file: Optional[TextIO] = open(path, "w") if path else None

    def record(self, time: float, kind: str, server: int, payload: str = ""):
        record = TraceRecord(time, kind, server, payload)
        self.recent.append(record)
        if self._file:
            self._file.write(format_trace_line(record))

    def excerpt(self) -> List[str]:
        return [format_trace_line(x).rstrip("\n") for x in self.recent]

    def close(self):
        if self._file:
            self._file.close()
            self._file = None

    def __enter__(self) -> Trace:
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()


class Checkpoint(BaseModel):
    time: float
    admitted: int
    updates: int


class PassAccountingEntry(BaseModel):
    T0: float
    admitted: int
    bound: float
    slack: float


class AuditResult(BaseModel):
    name: str
    passed: bool
    skipped: bool = False
    entries: List[PassAccountingEntry] = []
    detail: str = ""


def pass_accounting_audit(checkpoints: Sequence[Checkpoint], params: BoundParams, N: int) -> AuditResult:
    """Check admitted(0, T0) <= 2KN + lambda*(delta, K) N T0 at every checkpoint.
    :param checkpoints: cumulative admissions from time 0
    :param params: the message rate delta the run was entitled to, K and the average speed
    :param N: number of servers
    """
    bound_rate = throughput_bound(params)
    entries = []
    for c in checkpoints:
        bound = 2 * params.K * N + bound_rate * N * c.time
        entries.append(PassAccountingEntry(T0=c.time, admitted=c.admitted, bound=bound, slack=bound - c.admitted))
    passed = all(x.slack >= 0 for x in entries)
    if not passed:
        logging.warning(f"Pass accounting violated: {[x for x in entries if x.slack < 0]}")
    return AuditResult(name=AUDIT_PASS_ACCOUNTING, passed=passed, entries=entries,
                       detail=f"delta={params.delta:g}, K={params.K}, lambda*={bound_rate:.9g}")


def message_budget_violations(update_counts: Sequence[int], horizon: float, min_gap: float) -> int:
    """Number of servers with more updates than floor(T / min_gap) + 1."""
    allowed = math.floor(horizon / min_gap + GAP_TOLERANCE) + 1
    return sum(1 for x in update_counts if x > allowed)
