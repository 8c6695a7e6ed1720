#!/usr/bin/env python3
"""
Sampling Designs
The six ways of hiding dyads of a pre-existing network (random-dyad, star,
snowball, double-standard, star-degree, class), their JSON records, the
simulation of the observation mask and each design's log-likelihood p(R|Y).
"""

from dataclasses import dataclass, fields
from typing import Any, ClassVar, Dict, NamedTuple, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, log_expit, xlogy

from sbm_core import BlockAssignment, ObservedNetwork
from sbm_errors import InputError

DYAD_CENTERED = "dyad"
NODE_CENTERED = "node"


def _check_probability(name: str, value: float):
    if not 0.0 <= value <= 1.0:
        raise InputError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class SamplingDesign:
    """Base of the tagged union; subclasses fix kind, centering and missingness"""
    kind: ClassVar[str] = ""
    centering: ClassVar[str] = ""
    missingness: ClassVar[str] = ""

    @property
    def n_params(self) -> int:
        return len(self.psi())

    def psi(self) -> np.ndarray:
        """Free sampling parameters as a flat vector"""
        raise NotImplementedError

    def to_record(self) -> Dict[str, Any]:
        params = {}
        for f in fields(self):
            value = getattr(self, f.name)
            params[f.name] = list(value) if isinstance(value, tuple) else value
        return {'type': self.kind, 'params': params}


@dataclass(frozen=True)
class RandomDyad(SamplingDesign):
    rho: float
    kind: ClassVar[str] = "random-dyad"
    centering: ClassVar[str] = DYAD_CENTERED
    missingness: ClassVar[str] = "MCAR"

    def __post_init__(self):
        _check_probability("rho", self.rho)

    def psi(self) -> np.ndarray:
        return np.array([self.rho])


@dataclass(frozen=True)
class Star(SamplingDesign):
    rho: float
    kind: ClassVar[str] = "star"
    centering: ClassVar[str] = NODE_CENTERED
    missingness: ClassVar[str] = "MCAR"

    def __post_init__(self):
        _check_probability("rho", self.rho)

    def psi(self) -> np.ndarray:
        return np.array([self.rho])


@dataclass(frozen=True)
class Snowball(SamplingDesign):
    rho: float
    waves: int = 2
    kind: ClassVar[str] = "snowball"
    centering: ClassVar[str] = NODE_CENTERED
    missingness: ClassVar[str] = "MAR"

    def __post_init__(self):
        _check_probability("rho", self.rho)
        if self.waves < 1:
            raise InputError(f"snowball needs at least one wave, got {self.waves}")

    def psi(self) -> np.ndarray:
        # waves is structural, not estimated
        return np.array([self.rho])


@dataclass(frozen=True)
class DoubleStandard(SamplingDesign):
    rho0: float
    rho1: float
    kind: ClassVar[str] = "double-standard"
    centering: ClassVar[str] = DYAD_CENTERED
    missingness: ClassVar[str] = "NMAR"

    def __post_init__(self):
        _check_probability("rho0", self.rho0)
        _check_probability("rho1", self.rho1)

    def psi(self) -> np.ndarray:
        return np.array([self.rho0, self.rho1])


@dataclass(frozen=True)
class StarDegree(SamplingDesign):
    a: float
    b: float
    kind: ClassVar[str] = "star-degree"
    centering: ClassVar[str] = NODE_CENTERED
    missingness: ClassVar[str] = "NMAR"

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise InputError("star-degree parameters must be finite")

    def psi(self) -> np.ndarray:
        return np.array([self.a, self.b])

    def selection_probabilities(self, degrees: np.ndarray) -> np.ndarray:
        return expit(self.a + self.b * np.asarray(degrees, dtype=float))


@dataclass(frozen=True)
class ClassSampling(SamplingDesign):
    rho: Tuple[float, ...]
    kind: ClassVar[str] = "class"
    centering: ClassVar[str] = NODE_CENTERED
    missingness: ClassVar[str] = "NMAR"

    def __post_init__(self):
        rho = tuple(float(r) for r in np.atleast_1d(self.rho))
        if not rho:
            raise InputError("class sampling needs one rate per block")
        for k, r in enumerate(rho):
            _check_probability(f"rho[{k}]", r)
        object.__setattr__(self, "rho", rho)

    def psi(self) -> np.ndarray:
        return np.array(self.rho)


DESIGN_TYPES = {cls.kind: cls for cls in
                (RandomDyad, Star, Snowball, DoubleStandard, StarDegree, ClassSampling)}

AnyDesign = Union[RandomDyad, Star, Snowball, DoubleStandard, StarDegree, ClassSampling]


def design_from_record(record: Dict[str, Any]) -> SamplingDesign:
    """Inverse of SamplingDesign.to_record: {'type': ..., 'params': {...}}"""
    try:
        cls = DESIGN_TYPES[record['type']]
    except KeyError:
        raise InputError(f"unknown sampling design record: {record!r}")
    params = dict(record.get('params', {}))
    if cls is ClassSampling and 'rho' in params:
        params['rho'] = tuple(params['rho'])
    try:
        return cls(**params)
    except TypeError as e:
        raise InputError(f"bad parameters for {cls.kind}: {e}")


def design_from_values(kind: str, values: Sequence[float]) -> SamplingDesign:
    """Build a design from its kind and a flat psi list (CLI --psi)"""
    values = [float(v) for v in values]
    if kind not in DESIGN_TYPES:
        raise InputError(f"unknown sampling design '{kind}'")
    if kind == ClassSampling.kind:
        return ClassSampling(tuple(values))
    if kind == Snowball.kind:
        if len(values) not in (1, 2):
            raise InputError("snowball expects psi = rho [waves]")
        waves = int(values[1]) if len(values) == 2 else 2
        return Snowball(values[0], waves)
    expected = {RandomDyad.kind: 1, Star.kind: 1, DoubleStandard.kind: 2, StarDegree.kind: 2}[kind]
    if len(values) != expected:
        raise InputError(f"{kind} expects {expected} psi values, got {len(values)}")
    return DESIGN_TYPES[kind](*values)


def _full_adjacency(y_full) -> np.ndarray:
    if isinstance(y_full, ObservedNetwork):
        if y_full.has_missing:
            raise InputError("complete network expected, found Missing dyads")
        return y_full.adjacency
    adjacency = np.asarray(y_full, dtype=float)
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise InputError("complete adjacency must be square")
    return adjacency


def _node_centered_mask(selected: np.ndarray) -> np.ndarray:
    observed = selected[:, None] | selected[None, :]
    np.fill_diagonal(observed, False)
    return observed


def selected_nodes(design: SamplingDesign, adjacency: np.ndarray, z: BlockAssignment,
                   rng: np.random.Generator) -> np.ndarray:
    """Node selection of a node-centered design (boolean vector)"""
    n = adjacency.shape[0]
    if isinstance(design, Star):
        return rng.random(n) < design.rho
    if isinstance(design, Snowball):
        selected = rng.random(n) < design.rho
        frontier = selected.copy()
        for _ in range(design.waves - 1):
            neighbors = (adjacency[frontier] > 0).any(axis=0) & ~selected
            if not neighbors.any():
                break
            selected |= neighbors
            frontier = neighbors
        return selected
    if isinstance(design, StarDegree):
        return rng.random(n) < design.selection_probabilities(adjacency.sum(axis=1))
    if isinstance(design, ClassSampling):
        return rng.random(n) < np.asarray(design.rho)[z.labels]
    raise InputError(f"{design.kind} is not node-centered")


def apply_design(net_full: ObservedNetwork, z: BlockAssignment, design: SamplingDesign,
                 rng: np.random.Generator) -> ObservedNetwork:
    """Hide dyads of a complete network according to the design"""
    adjacency = _full_adjacency(net_full)
    n = adjacency.shape[0]
    if z.n != n:
        raise InputError(f"block assignment has {z.n} nodes, network has {n}")
    if isinstance(design, ClassSampling) and len(design.rho) != z.q:
        raise InputError(f"class sampling has {len(design.rho)} rates for {z.q} blocks")

    if design.centering == DYAD_CENTERED:
        if isinstance(design, RandomDyad):
            keep_prob = np.full((n, n), design.rho)
        elif isinstance(design, DoubleStandard):
            keep_prob = np.where(adjacency > 0, design.rho1, design.rho0)
        else:
            raise InputError(f"unsupported design {design.kind}")
        kept = np.triu(rng.random((n, n)) < keep_prob, k=1)
        observed = kept | kept.T
    else:
        observed = _node_centered_mask(selected_nodes(design, adjacency, z, rng))

    missing = ~observed
    np.fill_diagonal(missing, False)
    return ObservedNetwork.from_adjacency(adjacency, missing_mask=missing)


class DesignLikelihood(NamedTuple):
    value: float
    impossible: bool


def _wrap(value: float) -> DesignLikelihood:
    value = float(value)
    return DesignLikelihood(value, value == -np.inf)


def design_log_likelihood(design: SamplingDesign, net: ObservedNetwork, y_full,
                          z: BlockAssignment) -> DesignLikelihood:
    """
    Exact log p_psi(R | Y) (or p_psi(R | Z) for class sampling) given the
    complete network. Zero-probability configurations give -inf with
    `impossible` set.
    """
    adjacency = _full_adjacency(y_full)
    if adjacency.shape[0] != net.n:
        raise InputError("complete network and observed network differ in size")
    observed = net.observed_mask
    missing = net.missing_mask
    with np.errstate(divide='ignore'):
        if isinstance(design, RandomDyad):
            return _wrap(xlogy(net.n_observed_dyads, design.rho)
                         + xlogy(net.n_missing_dyads, 1 - design.rho))
        if isinstance(design, DoubleStandard):
            # every unordered dyad appears twice in the masks
            s_o = adjacency[observed].sum() / 2
            sbar_o = net.n_observed_dyads - s_o
            s_m = adjacency[missing].sum() / 2
            sbar_m = net.n_missing_dyads - s_m
            return _wrap(xlogy(s_o, design.rho1) + xlogy(sbar_o, design.rho0)
                         + xlogy(s_m, 1 - design.rho1) + xlogy(sbar_m, 1 - design.rho0))

        if isinstance(design, (Star, StarDegree, ClassSampling)) and not net.is_node_centered:
            return DesignLikelihood(-np.inf, True)
        selected = net.sampled_nodes
        if isinstance(design, Star):
            n_sel = int(selected.sum())
            return _wrap(xlogy(n_sel, design.rho) + xlogy(net.n - n_sel, 1 - design.rho))
        if isinstance(design, StarDegree):
            x = design.a + design.b * adjacency.sum(axis=1)
            return _wrap(log_expit(x[selected]).sum() + log_expit(-x[~selected]).sum())
        if isinstance(design, ClassSampling):
            if len(design.rho) != z.q:
                raise InputError("class sampling rates do not match the block count")
            rho = np.asarray(design.rho)[z.labels]
            return _wrap(xlogy(1.0, rho[selected]).sum() + xlogy(1.0, 1 - rho[~selected]).sum())
    raise InputError(f"no closed-form likelihood for {design.kind} sampling")
