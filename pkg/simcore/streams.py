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
import math
from typing import List, Optional, Sequence, Union
import numpy as np
from config import ServiceConfig

BLOCK_SIZE = 4096


def sample_service(service: ServiceConfig, rng: np.random.Generator,
                   size: Optional[int] = None) -> Union[float, np.ndarray]:
    """Draw service requirements.
    Exponential requirements have unit mean and are drawn by inversion, Gamma(shape, rate) requirements use numpy's
    rejection sampler.
    :param service: the service distribution
    :param rng: the generator to draw from
    :param size: None for a single float, otherwise the number of draws
    """
    if service.kind == "gamma":
        draws = rng.gamma(service.shape, 1.0 / service.rate, size=size)
    else:
        draws = -np.log1p(-rng.random(size=size))
    return float(draws) if size is None else draws


class BufferedStream:
    """A numpy Generator read in blocks, so that per-event draws stay cheap."""

    def __init__(self, seed: np.random.SeedSequence):
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self._block = self.rng.random(BLOCK_SIZE)
        self._pos = 0

    def uniform(self) -> float:
        if self._pos == BLOCK_SIZE:
            self._block = self.rng.random(BLOCK_SIZE)
            self._pos = 0
        u = self._block[self._pos]
        self._pos += 1
        return float(u)

    def exponential(self, rate: float) -> float:
        return -math.log1p(-self.uniform()) / rate

    def index(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return min(int(self.uniform() * n), n - 1)


class TickStream:
    """One fixed realization of a Poisson process of potential service completions.
    Ticks are generated in order whether or not anybody listens, so skipping ahead to the first tick after some time
    yields the same ticks as an always-on listener."""

    def __init__(self, seed: np.random.SeedSequence, rate: float):
        self.stream = BufferedStream(seed)
        self.rate = rate
        self.current = self.stream.exponential(rate)

    def next_after(self, t: float) -> float:
        while self.current <= t:
            self.current += self.stream.exponential(self.rate)
        return self.current


class ServiceSampler:

    def __init__(self, service: ServiceConfig, seed: np.random.SeedSequence):
        self.service = service
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self._block = sample_service(service, self.rng, BLOCK_SIZE)
        self._pos = 0

    def draw(self) -> float:
        if self._pos == BLOCK_SIZE:
            self._block = sample_service(self.service, self.rng, BLOCK_SIZE)
            self._pos = 0
        x = self._block[self._pos]
        self._pos += 1
        return float(x)


class RandomStreams:
    """Independent streams spawned from one seed: arrivals, selection, phases, service requirements and one tick
    stream per server. Policies that consume the same draws therefore see the same randomness."""

    def __init__(self, seed: int, service: ServiceConfig, speeds: Sequence[float]):
        root = np.random.SeedSequence(seed)
        arrivals, selection, phases, services, ticks = root.spawn(5)
        self.arrivals = BufferedStream(arrivals)
        self.selection = BufferedStream(selection)
        self.phases = BufferedStream(phases)
        self.service = ServiceSampler(service, services)
        self.ticks: List[TickStream] = [TickStream(s, rate) for s, rate in zip(ticks.spawn(len(speeds)), speeds)]
