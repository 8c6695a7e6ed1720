#!/usr/bin/env python3
"""
Configuration
Environment defaults (.env via python-dotenv), the JSON experiment
configuration and the connectivity presets of the simulation study.
"""

import json
import os
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Optional

import numpy as np
from dotenv import load_dotenv

from sampling_designs import DESIGN_TYPES, NODE_CENTERED, design_from_values
from sbm_core import SbmParameters
from sbm_errors import InputError

# Load environment variables
load_dotenv()

TOPOLOGIES = ('affiliation', 'star', 'bipartite', 'mar-affiliation')
METHODS = ('mar', 'double-standard', 'class', 'star-degree')
EXPERIMENT_METHODS = METHODS + ('oracle',)


def _env(name: str, default: str, cast):
    raw = os.getenv(name, default)
    try:
        return cast(raw)
    except (TypeError, ValueError):
        raise InputError(f"environment variable {name} has an invalid value: {raw!r}")


def _flag(raw: str) -> bool:
    return str(raw).strip().lower() in ('1', 'true', 'yes', 'on')


@dataclass
class Settings:
    """Defaults shared by the CLI and the experiment runner"""
    seed: int = 0
    restarts: int = 10
    max_iter: int = 500
    tolerance: float = 1e-6
    workers: int = 1
    output_dir: str = "."
    verbose: bool = False


def load_settings() -> Settings:
    settings = Settings(
        seed=_env('SBM_SEED', '0', int),
        restarts=_env('SBM_RESTARTS', '10', int),
        max_iter=_env('SBM_MAX_ITER', '500', int),
        tolerance=_env('SBM_TOLERANCE', '1e-6', float),
        workers=_env('SBM_WORKERS', '1', int),
        output_dir=os.getenv('SBM_OUTPUT_DIR', '.'),
        verbose=_flag(os.getenv('SBM_VERBOSE', '0')),
    )
    if settings.restarts < 1 or settings.max_iter < 1 or settings.workers < 1:
        raise InputError("SBM_RESTARTS, SBM_MAX_ITER and SBM_WORKERS must be >= 1")
    if settings.tolerance <= 0:
        raise InputError("SBM_TOLERANCE must be positive")
    return settings


def topology_parameters(topology: str, epsilon: float) -> SbmParameters:
    """
    Connectivity presets; epsilon sets the contrast (lower is more contrasted).
    For 'mar-affiliation' epsilon is the intra-block probability eta and
    the inter-block probability is eta / 10.
    """
    e = float(epsilon)
    if not 0 <= e <= 1:
        raise InputError(f"epsilon must lie in [0, 1], got {e}")
    if topology == 'affiliation':
        return SbmParameters(np.full(3, 1 / 3), np.where(np.eye(3, dtype=bool), 1 - e, e))
    if topology == 'star':
        pi = [[1 - e, 1 - e, 0, 0],
              [1 - e, 0, e, 0],
              [0, e, 1 - e, 1 - e],
              [0, 0, 1 - e, 0]]
        return SbmParameters([1 / 6, 1 / 3, 1 / 6, 1 / 3], pi)
    if topology == 'bipartite':
        pi = [[e, 1 - e, e, e],
              [1 - e, e, e, e],
              [e, e, e, 1 - e],
              [e, e, 1 - e, e]]
        return SbmParameters(np.full(4, 0.25), pi)
    if topology == 'mar-affiliation':
        return SbmParameters(np.full(3, 1 / 3), np.where(np.eye(3, dtype=bool), e, e / 10))
    raise InputError(f"unknown topology '{topology}', expected one of {TOPOLOGIES}")


@dataclass
class ExperimentConfig:
    """Simulation study configuration, one JSON file per study"""
    topology: str = 'affiliation'
    epsilon: float = 0.05
    n: int = 100
    design: str = 'double-standard'
    psi_grid: List[List[float]] = field(default_factory=lambda: [[0.2, 0.8]])
    q_grid: List[int] = field(default_factory=lambda: [3])
    methods: List[str] = field(default_factory=lambda: ['mar', 'double-standard'])
    replications: int = 50
    restarts: int = 10
    seed: int = 0
    output: str = 'results.csv'
    max_iter: int = 500
    tolerance: float = 1e-6
    workers: int = 1
    alpha: Optional[List[float]] = None  # overrides the topology's alpha
    pi: Optional[List[List[float]]] = None  # overrides the topology's pi

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise InputError(f"unknown topology '{self.topology}'")
        if self.design not in DESIGN_TYPES:
            raise InputError(f"unknown sampling design '{self.design}'")
        if not self.psi_grid or not self.q_grid or not self.methods:
            raise InputError("psi_grid, q_grid and methods must be non-empty")
        unknown = [m for m in self.methods if m not in EXPERIMENT_METHODS]
        if unknown:
            raise InputError(f"unknown methods {unknown}, expected {EXPERIMENT_METHODS}")
        row_methods = [m for m in self.methods if m in ('class', 'star-degree')]
        if row_methods and DESIGN_TYPES[self.design].centering != NODE_CENTERED:
            raise InputError(f"methods {row_methods} need a node-centered design, got '{self.design}'")
        if self.replications < 1 or self.restarts < 1 or self.workers < 1:
            raise InputError("replications, restarts and workers must be >= 1")
        if self.n < 2:
            raise InputError("n must be >= 2")
        if any(q < 1 for q in self.q_grid):
            raise InputError("q_grid entries must be >= 1")
        self.psi_grid = [[float(v) for v in np.atleast_1d(psi)] for psi in self.psi_grid]
        truth = self.true_parameters()
        for psi in self.psi_grid:
            design_from_values(self.design, psi)
            if self.design == 'class' and len(psi) != truth.q:
                raise InputError(f"class psi {psi} needs {truth.q} rates")

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, 'r') as f:
                data = json.load(f)
        except FileNotFoundError:
            raise InputError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise InputError(f"config file {path} is not valid JSON: {e}")
        known = {f.name for f in fields(cls)}
        extra = sorted(set(data) - known)
        if extra:
            raise InputError(f"unknown config keys {extra}")
        return cls(**data)

    def true_parameters(self) -> SbmParameters:
        preset = topology_parameters(self.topology, self.epsilon)
        alpha = preset.alpha if self.alpha is None else self.alpha
        pi = preset.pi if self.pi is None else self.pi
        return SbmParameters(alpha, pi)

    def to_record(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}
