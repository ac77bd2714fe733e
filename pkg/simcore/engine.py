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
from typing import Dict, List, Optional
import numpy as np
from analytic import BoundParams
from config import SimConfig
from schemes.policy import Policy
from simcore.audits import (AUDIT_COUPLING, AUDIT_MESSAGE_BUDGET, AUDIT_NAMES, AUDIT_QUEUE_LIMIT,
                            AUDIT_UPDATE_GAP, AUDIT_VIEW, GAP_TOLERANCE, AuditError, AuditResult, Checkpoint,
                            Trace, message_budget_violations, pass_accounting_audit, AUDIT_PASS_ACCOUNTING)
from simcore.events import (KIND_ARRIVAL, KIND_COMPLETION, KIND_TICK, KIND_TIMER, PRIORITY_ARRIVAL,
                            PRIORITY_SERVICE, PRIORITY_TIMER, EventCalendar)
from simcore.metrics import Metrics
from simcore.streams import RandomStreams

CHECKPOINT_FRACTIONS = (0.1, 0.5, 1.0)


class ServerRecord:
    """The physical server. virtual_queue and virtual_working only matter when the policy couples a virtual queue to
    the actual one; job_* fields only matter for non-exponential services."""
    __slots__ = ('queue', 'virtual_queue', 'working', 'virtual_working', 'speed', 'tick_pending', 'job_token',
                 'job_remaining', 'job_start', 'running', 'last_update', 'update_count')

    def __init__(self, speed: float = 1.0):
        self.queue = 0
        self.virtual_queue = 0
        self.working = False
        self.virtual_working = False
        self.speed = speed
        self.tick_pending = False
        self.job_token = 0
        self.job_remaining: Optional[float] = None
        self.job_start = 0.0
        self.running = False
        self.last_update: Optional[float] = None
        self.update_count = 0


class Simulation:
    """One seeded run of a dispatcher policy over N servers.

    Exponential services are driven by per-server tick streams: a tick completes a job if the server is working and
    nonempty and is discarded otherwise. Non-exponential services schedule one completion per job; a server that stops
    working freezes the remaining work of its job until it resumes.
    """

    def __init__(self, config: SimConfig, policy: Optional[Policy] = None):
        self.config = config
        self.N = config.N
        self.K = config.scheme.K
        self.policy = policy or Policy.create(config.scheme)
        self.coupled = self.policy.coupled
        self.exponential = config.service.is_exponential
        if self.policy.exponential_only and not self.exponential:
            raise ValueError(f"Simulation: {self.policy} requires exponential services")

        speeds = config.service.speeds or [1.0] * self.N
        self.servers: List[ServerRecord] = [ServerRecord(x) for x in speeds]
        self.streams = RandomStreams(config.seed, config.service, speeds)
        self.calendar = EventCalendar()
        self.trace = Trace(config.trace_path)

        self.horizon = config.horizon
        self.warmup_time = config.warmup_time
        self.arrival_rate = config.lam * self.N
        self.now = 0.0
        self._last_time = 0.0
        self._next_snapshot = self.warmup_time

        self.arrivals = self.admitted = self.blocked = self.updates = self.completions = 0
        self.jobs_ahead_sum = 0
        self.area_open = 0.0
        self.open_time_hist = np.zeros(self.N + 1)
        self.open_snapshots = np.zeros(self.N + 1, dtype=np.int64)
        self.report_hist: Dict[str, List[int]] = {}
        self.phase_area: Dict[str, float] = {}

        self.admitted_total = 0
        self.updates_total = 0
        self.checkpoint_times = [f * self.horizon for f in CHECKPOINT_FRACTIONS]
        self.checkpoints: List[Checkpoint] = []
        self.violations = {x: 0 for x in AUDIT_NAMES}

    # ---- interface for policies

    @property
    def selection(self):
        return self.streams.selection

    @property
    def phases(self):
        return self.streams.phases

    def schedule_timer(self, sid: int, time: float, tag: int = 0):
        self.calendar.schedule(time, PRIORITY_TIMER, KIND_TIMER, sid, tag)

    def report(self, sid: int, source: str = "update") -> int:
        """One update message: the server reports its queue length to the dispatcher.
        Coupled policies receive the virtual queue length."""
        server = self.servers[sid]
        value = server.virtual_queue if self.coupled else server.queue

        if server.last_update is not None:
            gap = self.now - server.last_update
            min_gap = self.policy.min_update_gap
            bad = abs(gap - min_gap) > GAP_TOLERANCE * max(1.0, min_gap) if self.policy.exact_gap \
                else gap < min_gap - GAP_TOLERANCE * max(1.0, min_gap)
            if bad:
                self.violations[AUDIT_UPDATE_GAP] += 1
                logging.warning(f"Update gap audit: server {sid} gap {gap:.9g} at t={self.now:.9g}")
        server.last_update = self.now
        server.update_count += 1
        self.updates_total += 1

        if self.now >= self.warmup_time:
            self.updates += 1
            hist = self.report_hist.setdefault(source, [0] * (self.K + 1))
            hist[value] += 1
        self.trace.record(self.now, "update", sid, f"{source}={value}")
        return value

    def set_working(self, sid: int, working: bool, virtual_working: Optional[bool] = None):
        server = self.servers[sid]
        server.working = working
        server.virtual_working = working if virtual_working is None else virtual_working
        self._refresh(sid)

    def queue_length(self, sid: int) -> int:
        return self.servers[sid].queue

    # ---- service

    def _refresh(self, sid: int):
        server = self.servers[sid]
        if self.exponential:
            if self.coupled:
                eligible = server.queue > 0 or (server.virtual_working and server.virtual_queue > 0)
            else:
                eligible = server.working and server.queue > 0
            if eligible and not server.tick_pending:
                server.tick_pending = True
                t = self.streams.ticks[sid].next_after(self.now)
                self.calendar.schedule(t, PRIORITY_SERVICE, KIND_TICK, sid)
            return

        eligible = server.working and server.queue > 0
        if eligible and not server.running:
            if server.job_remaining is None:
                server.job_remaining = self.streams.service.draw()
            server.running = True
            server.job_start = self.now
            server.job_token += 1
            self.calendar.schedule(self.now + server.job_remaining / server.speed, PRIORITY_SERVICE,
                                   KIND_COMPLETION, sid, server.job_token)
        elif not eligible and server.running:
            server.job_remaining -= (self.now - server.job_start) * server.speed
            server.running = False
            server.job_token += 1

    def _complete(self, sid: int):
        self.servers[sid].queue -= 1
        self.completions += self.now >= self.warmup_time
        self.trace.record(self.now, "completion", sid)

    def _on_tick(self, sid: int):
        server = self.servers[sid]
        server.tick_pending = False
        if self.coupled:
            if server.queue > 0:
                self._complete(sid)
            if server.virtual_working and server.virtual_queue > 0:
                server.virtual_queue -= 1
            if server.virtual_queue < server.queue:
                self.violations[AUDIT_COUPLING] += 1
                logging.warning(f"Coupling audit: server {sid} virtual {server.virtual_queue} < {server.queue}")
        elif server.working and server.queue > 0:
            self._complete(sid)
        self._refresh(sid)

    def _on_completion(self, sid: int, token: int):
        server = self.servers[sid]
        if token != server.job_token:
            return
        server.running = False
        server.job_remaining = None
        self._complete(sid)
        self._refresh(sid)

    # ---- arrivals

    def _on_arrival(self):
        counted = self.now >= self.warmup_time
        self.arrivals += counted
        self.calendar.schedule(self.now + self.streams.arrivals.exponential(self.arrival_rate), PRIORITY_ARRIVAL,
                               KIND_ARRIVAL)

        sid = self.policy.select(self.now)
        if sid is None:
            self.blocked += counted
            self.trace.record(self.now, "block", -1)
            return

        server = self.servers[sid]
        if server.queue >= self.K:
            self.violations[AUDIT_QUEUE_LIMIT] += 1
            self.trace.record(self.now, "dispatch", sid, f"queue={server.queue}")
            raise AuditError(f"Queue limit violated: server {sid} holds {server.queue} >= K={self.K} jobs at "
                             f"t={self.now:.9g}", self.trace.excerpt())
        if server.queue > self.policy.upper_bound(sid):
            self.violations[AUDIT_VIEW] += 1
            logging.warning(f"Dispatcher view audit: server {sid} holds {server.queue} > "
                            f"{self.policy.upper_bound(sid)} at t={self.now:.9g}")

        if counted:
            self.admitted += 1
            self.jobs_ahead_sum += server.queue
        self.admitted_total += 1
        server.queue += 1
        if self.coupled:
            server.virtual_queue += 1
        self.trace.record(self.now, "dispatch", sid, f"queue={server.queue}")
        self.policy.on_dispatch(sid, self.now)
        self._refresh(sid)

    # ---- bookkeeping

    def _advance(self, t: float):
        start = max(self._last_time, self.warmup_time)
        if t > start:
            dt = t - start
            n_open = self.policy.open_count
            self.area_open += n_open * dt
            self.open_time_hist[n_open] += dt
            for label, count in self.policy.phase_counts.items():
                self.phase_area[label] = self.phase_area.get(label, 0.0) + count * dt
        while self._next_snapshot < t:
            self.open_snapshots[self.policy.open_count] += 1
            self._next_snapshot += self.config.snapshot_interval
        self._last_time = max(self._last_time, t)

    def _checkpoint(self, t: float):
        while self.checkpoint_times and self.checkpoint_times[0] < t:
            self.checkpoints.append(Checkpoint(time=self.checkpoint_times.pop(0), admitted=self.admitted_total,
                                               updates=self.updates_total))

    def _final_audits(self) -> AuditResult:
        self.violations[AUDIT_MESSAGE_BUDGET] = message_budget_violations(
            [x.update_count for x in self.servers], self.horizon, self.policy.min_update_gap)

        if not self.exponential:
            return AuditResult(name=AUDIT_PASS_ACCOUNTING, passed=True, skipped=True,
                               detail="bound assumes exponential services")
        mu_bar = float(np.mean([x.speed for x in self.servers]))
        params = BoundParams(delta=self.policy.message_budget, K=self.K, mu_bar=mu_bar)
        result = pass_accounting_audit(self.checkpoints, params, self.N)
        self.violations[AUDIT_PASS_ACCOUNTING] = sum(1 for x in result.entries if x.slack < 0)
        return result

    def run(self) -> Metrics:
        """Simulate [0, T] and collect statistics over [warmup, T].
        :except AuditError: if a job would be admitted beyond the queue limit
        :return: the Metrics of this run
        """
        logging.info(f"Simulating {self.policy} with N={self.N}, lambda={self.config.lam:g}, "
                     f"service={self.config.service.label()}, T={self.horizon:g}, seed={self.config.seed}")
        with self.trace:
            self.policy.attach(self)
            self.calendar.schedule(self.streams.arrivals.exponential(self.arrival_rate), PRIORITY_ARRIVAL,
                                   KIND_ARRIVAL)

            while self.calendar:
                event = self.calendar.pop()
                if event.time > self.horizon:
                    break
                self._checkpoint(event.time)
                self._advance(event.time)
                self.now = event.time
                if event.kind == KIND_ARRIVAL:
                    self._on_arrival()
                elif event.kind == KIND_TICK:
                    self._on_tick(event.server)
                elif event.kind == KIND_COMPLETION:
                    self._on_completion(event.server, event.token)
                else:
                    self.policy.on_timer(event.server, self.now, event.token)

            self._checkpoint(self.horizon + 1.0)
            self._advance(self.horizon)
            self.now = self.horizon
            pass_accounting = self._final_audits()

        metrics = Metrics(
            N=self.N, lam=self.config.lam, horizon=self.horizon, t_eff=self.horizon - self.warmup_time,
            policy=str(self.policy), service=self.config.service.label(), seed=self.config.seed,
            arrivals=self.arrivals, admitted=self.admitted, blocked=self.blocked, updates=self.updates,
            completions=self.completions, area_open=self.area_open, jobs_ahead_sum=self.jobs_ahead_sum,
            open_time_hist=self.open_time_hist.tolist(), open_snapshots=self.open_snapshots.tolist(),
            report_hist=self.report_hist, phase_area=self.phase_area, checkpoints=self.checkpoints,
            audit_violations=self.violations, pass_accounting=pass_accounting,
        )
        logging.info(f"Finished {self.policy}: throughput={metrics.throughput:.6g}, blocking={metrics.blocking:.6g}, "
                     f"messages/job={metrics.messages_per_admitted_job:.6g}")
        return metrics


def run(config: SimConfig) -> Metrics:
    return Simulation(config).run()
