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
import json
import logging
import math
from typing import Any, Dict, List, Optional, Union
from pydantic import BaseModel, Field, conint, root_validator, validator
from analytic import ExtensionParams, UpdateLaw

SERVICE_KINDS = ("exponential", "gamma")
POLICY_KINDS = ("baseline", "non_idling", "work_conserving", "aujsq", "extension")
SELECTIONS = ("random", "fcfs")
AUJSQ_PHASES = ("synchronized", "staggered", "random")
TIEBREAKS = ("timers_first",)
MODES = ("bound", "pmf", "simulate", "sweep", "verify", "extension", "reproduce")

# keys of ExperimentSpec.sweep that are applied to the policy rather than to the simulation
POLICY_SWEEP_KEYS = ("tau", "K", "tau1", "tau2", "tau3", "selection", "aujsq_phase")
SIM_SWEEP_KEYS = ("lambda", "N")


def _finite_positive(v: float, label: str) -> float:
    if v is None or not v > 0 or math.isinf(v):
        raise ValueError(f"{label} required to be positive and finite")
    return v


class ServiceConfig(BaseModel):
    """Service time distribution: unit-mean exponential, Gamma(shape, rate), or exponential with per-server speeds."""
    kind: str = "exponential"
    shape: float = 1.0
    rate: float = 1.0
    speeds: Optional[List[float]] = None

    @validator('kind')
    def kind_is_supported(cls, v):
        if v not in SERVICE_KINDS:
            raise ValueError(f"Service kind not supported: {v}")
        return v

    @validator('shape', 'rate')
    def parameter_is_positive(cls, v, field):
        return _finite_positive(v, f"Service {field.name}")

    @validator('speeds')
    def speeds_are_positive(cls, v):
        if v is not None and not all(x > 0 and not math.isinf(x) for x in v):
            raise ValueError("Service speeds required to be positive")
        return v

    @root_validator(skip_on_failure=True)
    def speeds_need_exponential(cls, values):
        if values.get('speeds') is not None and values.get('kind') != "exponential":
            raise ValueError("Service speeds only supported for exponential services")
        return values

    @property
    def is_exponential(self) -> bool:
        return self.kind == "exponential"

    @property
    def mean(self) -> float:
        return self.shape / self.rate if self.kind == "gamma" else 1.0

    def label(self) -> str:
        if self.kind == "gamma":
            return f"gamma({self.shape:g},{self.rate:g})"
        return "exponential" if self.speeds is None else "exponential(speeds)"


class PolicyConfig(BaseModel):
    """Dispatcher policy and its parameters."""
    kind: str = "baseline"
    tau: Optional[float] = None
    K: conint(ge=1) = 2
    selection: str = "random"
    tau1: Optional[float] = None
    tau2: Optional[float] = None
    tau3: Optional[float] = None
    aujsq_phase: str = "staggered"

    @validator('kind')
    def kind_is_supported(cls, v):
        if v not in POLICY_KINDS:
            raise ValueError(f"Policy kind not supported: {v}")
        return v

    @validator('selection')
    def selection_is_supported(cls, v):
        if v not in SELECTIONS:
            raise ValueError(f"Policy selection not supported: {v}")
        return v

    @validator('aujsq_phase')
    def phase_is_supported(cls, v):
        if v not in AUJSQ_PHASES:
            raise ValueError(f"AUJSQ phase mode not supported: {v}")
        return v

    @root_validator(skip_on_failure=True)
    def parameters_match_kind(cls, values):
        if values['kind'] == "extension":
            if values['K'] != 2:
                raise ValueError("Extension policy requires K=2")
            if any(values.get(x) is None for x in ('tau1', 'tau2', 'tau3')):
                raise ValueError("Extension policy requires tau1, tau2 and tau3")
            ExtensionParams(tau1=values['tau1'], tau2=values['tau2'], tau3=values['tau3'])
        else:
            _finite_positive(values.get('tau'), "Policy tau")
        return values

    def update_law(self) -> UpdateLaw:
        if self.kind == "extension":
            raise ValueError("Extension policy has no single update law")
        return UpdateLaw(tau=self.tau, K=self.K)

    def extension_params(self) -> ExtensionParams:
        return ExtensionParams(tau1=self.tau1, tau2=self.tau2, tau3=self.tau3)

    def label(self) -> str:
        if self.kind == "extension":
            return f"extension({self.tau1:g},{self.tau2:g},{self.tau3:g})"
        if self.kind == "aujsq":
            return f"aujsq({self.aujsq_phase})"
        return self.kind if self.selection == "random" else f"{self.kind}({self.selection})"


class SimConfig(BaseModel):
    """A complete simulation experiment: N servers, arrivals at rate lambda*N, policy, service, horizon and seed."""
    N: conint(ge=1)
    lam: float = Field(..., alias='lambda')
    scheme: PolicyConfig
    service: ServiceConfig = ServiceConfig()
    horizon: float = 1e4
    warmup: float = 0.2
    seed: conint(ge=0, lt=2 ** 64) = 0
    tiebreak: str = "timers_first"
    snapshot_interval: float = 10.0
    trace_path: Optional[str] = None

    class Config:
        allow_population_by_field_name = True

    @validator('lam')
    def arrival_rate_is_positive(cls, v):
        return _finite_positive(v, "Arrival rate lambda")

    @validator('horizon', 'snapshot_interval')
    def time_is_positive(cls, v, field):
        return _finite_positive(v, field.name.capitalize().replace("_", " "))

    @validator('warmup')
    def warmup_is_fraction(cls, v):
        if not 0 <= v < 1:
            raise ValueError("Warmup required to be in [0, 1)")
        return v

    @validator('tiebreak')
    def tiebreak_is_supported(cls, v):
        if v not in TIEBREAKS:
            raise ValueError(f"Tiebreak policy not supported: {v}")
        return v

    @root_validator(skip_on_failure=True)
    def service_matches_scheme(cls, values):
        service, scheme = values['service'], values['scheme']
        if service.speeds is not None and len(service.speeds) != values['N']:
            raise ValueError(f"Service speeds: expected {values['N']} entries, got {len(service.speeds)}")
        if scheme.kind == "non_idling" and not service.is_exponential:
            raise ValueError("Non-idling policy requires exponential services")
        return values

    @property
    def warmup_time(self) -> float:
        return self.warmup * self.horizon


class ExperimentSpec(BaseModel):
    """One experiment file. Which fields are used depends on mode."""
    mode: str
    name: Optional[str] = None
    deltas: Optional[List[float]] = None
    Ks: Optional[List[conint(ge=1)]] = None
    products: Optional[List[float]] = None
    N: Optional[conint(ge=1)] = None
    lam: Optional[float] = Field(None, alias='lambda')
    taus: Optional[List[float]] = None
    tau1s: Optional[List[float]] = None
    tau2s: Optional[List[float]] = None
    tau3s: Optional[List[float]] = None
    sim: Optional[SimConfig] = None
    sweep: Dict[str, List[Any]] = {}
    variants: Optional[List[PolicyConfig]] = None
    services: Optional[List[ServiceConfig]] = None
    seeds: Union[conint(ge=1), List[conint(ge=0)]] = 1
    max_states: conint(ge=1) = 10 ** 7
    output: Optional[str] = None

    class Config:
        allow_population_by_field_name = True

    @validator('mode')
    def mode_is_supported(cls, v):
        if v not in MODES:
            raise ValueError(f"Experiment mode not supported: {v}")
        return v

    @validator('deltas', 'products', 'taus', 'Ks', 'variants', 'services')
    def grid_is_nonempty(cls, v, field):
        if v is not None and not v:
            raise ValueError(f"Grid {field.name} required to be nonempty")
        return v

    @validator('deltas', 'products', 'taus', each_item=True)
    def grid_entries_are_positive(cls, v):
        return _finite_positive(v, "Grid entry")

    @validator('seeds')
    def seed_list_is_nonempty(cls, v):
        if isinstance(v, list) and not v:
            raise ValueError("Seed list required to be nonempty")
        return v

    @validator('sweep')
    def sweep_keys_are_supported(cls, v):
        for key, values in v.items():
            if key not in POLICY_SWEEP_KEYS + SIM_SWEEP_KEYS:
                raise ValueError(f"Sweep parameter not supported: {key}")
            if not values:
                raise ValueError(f"Sweep grid {key} required to be nonempty")
        return v

    @root_validator(skip_on_failure=True)
    def mode_has_inputs(cls, values):
        mode = values['mode']
        if mode == "bound" and not values.get('deltas') and not values.get('products'):
            raise ValueError("Bound mode requires deltas or products")
        if mode == "bound" and not values.get('Ks'):
            raise ValueError("Bound mode requires Ks")
        if mode in ("simulate", "sweep") and values.get('sim') is None:
            raise ValueError(f"{mode.capitalize()} mode requires sim")
        if mode == "extension" and not values.get('tau1s'):
            raise ValueError("Extension mode requires tau1s, tau2s and tau3s")
        return values

    def seed_list(self) -> List[int]:
        """Explicit seeds, or consecutive seeds starting at the simulation seed."""
        if isinstance(self.seeds, list):
            return list(self.seeds)
        base = self.sim.seed if self.sim is not None else 0
        return [base + i for i in range(self.seeds)]


def load_experiment(path: str) -> ExperimentSpec:
    """Read an experiment file.
    :param path: the JSON file
    :except ValueError: if the file is missing or its content is invalid
    :return: the validated ExperimentSpec
    """
    try:
        with open(path) as f:
            config_dict = json.load(f)
    except FileNotFoundError:
        logging.error(f"Configuration file not found: {path}")
        raise ValueError(f"Config: file not found: {path}")
    except json.JSONDecodeError as ex:
        raise ValueError(f"Config: not valid JSON: {path}: {ex}")
    return ExperimentSpec(**config_dict)
