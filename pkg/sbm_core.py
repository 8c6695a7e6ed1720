#!/usr/bin/env python3
"""
SBM Core Model
Stochastic Block Model parameters, latent block assignments, partially observed
networks, network generation, clustering metrics and VEM initialization.
"""

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np
from sklearn.cluster import KMeans
from sklearn.metrics import adjusted_rand_score

from sbm_errors import InputError

ABSENT = 0
PRESENT = 1
MISSING = 2

# Probabilities are kept this far from 0 and 1 before any log/logit
PROB_EPS = 1e-9

EXHAUSTIVE_ALIGNMENT_MAX_Q = 6
SPECTRAL_CLAMP = (0.05, 0.95)


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SbmParameters:
    """Block proportions alpha and symmetric connectivity matrix pi"""
    alpha: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float).reshape(-1)
        pi = np.array(self.pi, dtype=float)
        if pi.ndim == 0:
            pi = pi.reshape(1, 1)
        if alpha.size < 1:
            raise InputError("alpha must contain at least one block")
        if pi.shape != (alpha.size, alpha.size):
            raise InputError(f"pi must be {alpha.size}x{alpha.size}, got {pi.shape}")
        if np.any(alpha < 0) or abs(alpha.sum() - 1.0) > 1e-12 * max(1, alpha.size):
            raise InputError(f"alpha is not a probability vector (sum={alpha.sum():.15g})")
        if np.any(pi < 0) or np.any(pi > 1) or not np.all(np.isfinite(pi)):
            raise InputError("pi entries must lie in [0, 1]")
        if not np.allclose(pi, pi.T, rtol=0, atol=1e-12):
            raise InputError("pi must be symmetric")
        object.__setattr__(self, "alpha", _readonly(alpha))
        object.__setattr__(self, "pi", _readonly((pi + pi.T) / 2))

    @property
    def q(self) -> int:
        return self.alpha.size

    def permuted(self, perm) -> "SbmParameters":
        """Relabel blocks so that new block k is old block perm[k]"""
        perm = np.asarray(perm)
        return SbmParameters(self.alpha[perm], self.pi[np.ix_(perm, perm)])

    def max_abs_change(self, other: "SbmParameters") -> float:
        """Max-abs distance over all entries of alpha and pi"""
        return float(max(np.max(np.abs(self.alpha - other.alpha)),
                         np.max(np.abs(self.pi - other.pi))))

    def to_record(self) -> Dict[str, list]:
        return {'alpha': self.alpha.tolist(), 'pi': self.pi.tolist()}


@dataclass(frozen=True, eq=False)
class BlockAssignment:
    """Block label per node, 0-based"""
    labels: np.ndarray
    q: int

    def __post_init__(self):
        labels = np.array(self.labels, dtype=int).reshape(-1)
        if self.q < 1:
            raise InputError("block count must be >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.q):
            raise InputError(f"labels must lie in [0, {self.q})")
        object.__setattr__(self, "labels", _readonly(labels))

    @property
    def n(self) -> int:
        return self.labels.size

    def one_hot(self) -> np.ndarray:
        z = np.zeros((self.n, self.q))
        z[np.arange(self.n), self.labels] = 1.0
        return z

    @classmethod
    def from_tau(cls, tau: np.ndarray) -> "BlockAssignment":
        """MAP labels; ties go to the lowest block index"""
        tau = np.asarray(tau)
        return cls(np.argmax(tau, axis=1), tau.shape[1])


@dataclass(frozen=True, eq=False)
class ObservedNetwork:
    """
    Undirected binary network whose dyads are Absent, Present or Missing.

    `states` is a symmetric n x n int8 matrix of ABSENT/PRESENT/MISSING codes;
    the diagonal carries no dyad and is ignored.
    """
    states: np.ndarray = field(repr=False)

    def __post_init__(self):
        states = np.array(self.states, dtype=np.int8)
        if states.ndim != 2 or states.shape[0] != states.shape[1]:
            raise InputError(f"dyad state matrix must be square, got {states.shape}")
        if not np.array_equal(states, states.T):
            raise InputError("dyad state matrix must be symmetric")
        if np.any((states < ABSENT) | (states > MISSING)):
            raise InputError("dyad states must be ABSENT, PRESENT or MISSING")
        np.fill_diagonal(states, ABSENT)
        object.__setattr__(self, "states", _readonly(states))

    @classmethod
    def from_adjacency(cls, adjacency, missing_mask=None) -> "ObservedNetwork":
        adjacency = np.asarray(adjacency)
        states = np.where(adjacency > 0, PRESENT, ABSENT).astype(np.int8)
        if missing_mask is not None:
            states[np.asarray(missing_mask, dtype=bool)] = MISSING
        return cls(states)

    @classmethod
    def from_dyads(cls, n: int, dyads: Dict[Tuple[int, int], int],
                   default: int = MISSING) -> "ObservedNetwork":
        states = np.full((n, n), default, dtype=np.int8)
        for (i, j), state in dyads.items():
            if i == j:
                raise InputError(f"self-dyad ({i}, {j}) is not allowed")
            states[i, j] = states[j, i] = state
        return cls(states)

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @cached_property
    def off_diagonal(self) -> np.ndarray:
        return _readonly(~np.eye(self.n, dtype=bool))

    @cached_property
    def observed_mask(self) -> np.ndarray:
        return _readonly((self.states != MISSING) & self.off_diagonal)

    @cached_property
    def missing_mask(self) -> np.ndarray:
        return _readonly((self.states == MISSING) & self.off_diagonal)

    @cached_property
    def adjacency(self) -> np.ndarray:
        """Float adjacency with Missing imputed as 0"""
        return _readonly((self.states == PRESENT).astype(float))

    @cached_property
    def missing_dyads(self) -> Tuple[np.ndarray, np.ndarray]:
        """(rows, cols) of D^m with i < j, lexicographic order"""
        rows, cols = np.nonzero(np.triu(self.missing_mask, k=1))
        return _readonly(rows), _readonly(cols)

    @cached_property
    def observed_dyads(self) -> Tuple[np.ndarray, np.ndarray]:
        rows, cols = np.nonzero(np.triu(self.observed_mask, k=1))
        return _readonly(rows), _readonly(cols)

    @property
    def n_dyads(self) -> int:
        return self.n * (self.n - 1) // 2

    @property
    def n_observed_dyads(self) -> int:
        return int(self.observed_dyads[0].size)

    @property
    def n_missing_dyads(self) -> int:
        return int(self.missing_dyads[0].size)

    @property
    def sampling_rate(self) -> float:
        return self.n_observed_dyads / self.n_dyads if self.n_dyads else 0.0

    @cached_property
    def observed_nodes(self) -> np.ndarray:
        """N^o: nodes touched by at least one observed dyad"""
        return _readonly(self.observed_mask.any(axis=1))

    @cached_property
    def sampled_nodes(self) -> np.ndarray:
        """Nodes whose whole row is observed (selected nodes of node-centered designs)"""
        if self.n < 2:
            return _readonly(np.zeros(self.n, dtype=bool))
        return _readonly((self.observed_mask | ~self.off_diagonal).all(axis=1))

    @cached_property
    def is_node_centered(self) -> bool:
        """True when the observed dyads are exactly those touching a sampled node"""
        sampled = self.sampled_nodes
        expected = (sampled[:, None] | sampled[None, :]) & self.off_diagonal
        return bool(np.array_equal(self.observed_mask, expected))

    @property
    def has_missing(self) -> bool:
        return self.n_missing_dyads > 0

    def state(self, i: int, j: int) -> int:
        if i == j:
            raise InputError("self-dyads carry no state")
        return int(self.states[i, j])

    def iter_dyads(self) -> Iterator[Tuple[int, int, int]]:
        rows, cols = np.triu_indices(self.n, k=1)
        for i, j in zip(rows, cols):
            yield int(i), int(j), int(self.states[i, j])

    def with_missing(self, missing_mask: np.ndarray) -> "ObservedNetwork":
        """Copy with extra dyads hidden; mask must be symmetric"""
        states = np.array(self.states)
        states[np.asarray(missing_mask, dtype=bool)] = MISSING
        return ObservedNetwork(states)

    def observed_density(self) -> float:
        n_obs = self.n_observed_dyads
        if n_obs == 0:
            return 0.0
        return float(self.adjacency[self.observed_mask].sum() / (2 * n_obs))


def connectivity(params: SbmParameters) -> float:
    """Overall connectivity c = sum_ql alpha_q alpha_l pi_ql"""
    return float(params.alpha @ params.pi @ params.alpha)


def sample_sbm_network(params: SbmParameters, n: int,
                       rng: np.random.Generator) -> Tuple[ObservedNetwork, BlockAssignment]:
    """Draw latent blocks i.i.d. from alpha, then each dyad from pi[z_i, z_j]"""
    if n < 1:
        raise InputError(f"node count must be >= 1, got {n}")
    labels = rng.choice(params.q, size=n, p=params.alpha)
    probs = params.pi[np.ix_(labels, labels)]
    draws = rng.random((n, n)) < probs
    upper = np.triu(draws, k=1)
    adjacency = upper | upper.T
    return ObservedNetwork.from_adjacency(adjacency), BlockAssignment(labels, params.q)


def adjusted_rand_index(a: BlockAssignment, b: BlockAssignment) -> float:
    if a.n != b.n:
        raise InputError(f"partitions have different sizes ({a.n} vs {b.n})")
    return float(adjusted_rand_score(a.labels, b.labels))


def _greedy_alignment(pi_hat: np.ndarray, pi: np.ndarray) -> np.ndarray:
    # permutation-free row signatures: diagonal entry plus sorted row
    cost = np.abs(np.diag(pi)[:, None] - np.diag(pi_hat)[None, :])
    cost += np.abs(np.sort(pi, axis=1)[:, None, :] - np.sort(pi_hat, axis=1)[None, :, :]).sum(axis=2)
    perm = np.full(pi.shape[0], -1)
    cost = cost.astype(float)
    for _ in range(pi.shape[0]):
        a, k = np.unravel_index(np.argmin(cost), cost.shape)
        perm[a] = k
        cost[a, :] = np.inf
        cost[:, k] = np.inf
    return perm


def best_block_permutation(pi_hat: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """
    Permutation perm minimizing ||pi_hat[perm][:, perm] - pi||_F.

    Exhaustive up to EXHAUSTIVE_ALIGNMENT_MAX_Q blocks, greedy row matching beyond.
    """
    pi_hat = np.asarray(pi_hat, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if pi_hat.shape != pi.shape or pi.ndim != 2 or pi.shape[0] != pi.shape[1]:
        raise InputError(f"dimension mismatch: {pi_hat.shape} vs {pi.shape}")
    q = pi.shape[0]
    if q > EXHAUSTIVE_ALIGNMENT_MAX_Q:
        return _greedy_alignment(pi_hat, pi)
    best, best_err = None, np.inf
    for perm in itertools.permutations(range(q)):
        perm = np.array(perm)
        err = np.linalg.norm(pi_hat[np.ix_(perm, perm)] - pi)
        if err < best_err - 1e-15:
            best, best_err = perm, err
    return best


def frobenius_rel_error(pi_hat, pi, perm: Optional[np.ndarray] = None) -> float:
    """||P pi_hat P^t - pi||_F / ||pi||_F, minimized over P when perm is None"""
    pi_hat = np.asarray(pi_hat, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if pi_hat.shape != pi.shape:
        raise InputError(f"dimension mismatch: {pi_hat.shape} vs {pi.shape}")
    if perm is None:
        perm = best_block_permutation(pi_hat, pi)
    perm = np.asarray(perm)
    norm = np.linalg.norm(pi)
    err = np.linalg.norm(pi_hat[np.ix_(perm, perm)] - pi)
    if norm == 0:
        return float(err)
    return float(err / norm)


def _spectral_embedding(net: ObservedNetwork, q: int) -> np.ndarray:
    adjacency = net.adjacency
    degrees = adjacency.sum(axis=1)
    inv_sqrt = np.zeros_like(degrees)
    inv_sqrt[degrees > 0] = 1.0 / np.sqrt(degrees[degrees > 0])
    normalized = inv_sqrt[:, None] * adjacency * inv_sqrt[None, :]
    eigenvalues, eigenvectors = np.linalg.eigh(normalized)
    # leading eigenvectors by absolute eigenvalue also capture disassortative blocks
    order = np.argsort(-np.abs(eigenvalues), kind="stable")[:q]
    return eigenvectors[:, order]


def soften_labels(labels: np.ndarray, q: int) -> np.ndarray:
    """One-hot clamped to SPECTRAL_CLAMP then renormalized"""
    tau = np.zeros((labels.size, q))
    tau[np.arange(labels.size), labels] = 1.0
    tau = np.clip(tau, *SPECTRAL_CLAMP)
    return tau / tau.sum(axis=1, keepdims=True)


def init_clustering(net: ObservedNetwork, q: int, strategy: str,
                    rng: np.random.Generator) -> np.ndarray:
    """Initial n x q row-stochastic tau by spectral clustering or Dirichlet draws"""
    if q < 1:
        raise InputError(f"block count must be >= 1, got {q}")
    if q > net.n:
        raise InputError(f"block count {q} exceeds node count {net.n}")
    if q == 1:
        return np.ones((net.n, 1))
    if strategy == "random":
        tau = rng.dirichlet(np.ones(q), size=net.n)
        return tau / tau.sum(axis=1, keepdims=True)
    if strategy == "spectral":
        embedding = _spectral_embedding(net, q)
        kmeans = KMeans(n_clusters=q, n_init=10,
                        random_state=int(rng.integers(2**31 - 1)))
        labels = kmeans.fit_predict(embedding)
        return soften_labels(labels, q)
    raise InputError(f"unknown initialization strategy '{strategy}'")


@dataclass(eq=False)
class FitResult:
    """
    Outcome of one variational EM run.

    `nu` follows the lexicographic order of `ObservedNetwork.missing_dyads`;
    `psi_hat` is the fitted sampling design (None for MAR fits).
    """
    method: str
    q: int
    theta_hat: SbmParameters
    tau: np.ndarray
    bound_trace: List[float]
    icl: float = np.inf
    psi_hat: Optional[Any] = None
    nu: Optional[np.ndarray] = None
    zeta: Optional[np.ndarray] = None
    n_iter: int = 0
    converged: bool = False
    flags: List[str] = field(default_factory=list)

    @property
    def labels(self) -> BlockAssignment:
        return BlockAssignment.from_tau(self.tau)

    @property
    def final_bound(self) -> float:
        return self.bound_trace[-1] if self.bound_trace else -np.inf

    def imputed_adjacency(self, net: ObservedNetwork) -> np.ndarray:
        """Observed entries as is, nu on missing dyads (posterior edge probabilities when no nu)"""
        filled = np.array(net.adjacency)
        rows, cols = net.missing_dyads
        if self.nu is not None:
            values = self.nu
        else:
            values = np.einsum('iq,ql,il->i', self.tau[rows], self.theta_hat.pi, self.tau[cols])
        filled[rows, cols] = values
        filled[cols, rows] = values
        return filled

    def to_record(self) -> Dict[str, Any]:
        record = {
            'method': self.method,
            'q': self.q,
            'theta': self.theta_hat.to_record(),
            'psi': self.psi_hat.to_record() if self.psi_hat is not None else None,
            'icl': None if not np.isfinite(self.icl) else float(self.icl),
            'bound_trace': [float(b) for b in self.bound_trace],
            'labels': self.labels.labels.tolist(),
            'n_iter': self.n_iter,
            'converged': self.converged,
            'flags': list(self.flags),
            'nu': None,
        }
        if self.nu is not None and self.nu.size:
            record['nu'] = {
                'count': int(self.nu.size),
                'mean': float(self.nu.mean()),
                'min': float(self.nu.min()),
                'max': float(self.nu.max()),
            }
        return record
