#!/usr/bin/env python3
"""
Identifiability Oracle
Recovers SBM parameters (and class sampling rates) from exact observation
moments with Hankel and Vandermonde algebra. The moment sequences are
analytic functions of (alpha, pi, rho); recovery inverts them block by block
and returns the parameters ordered by increasing root.
"""

import itertools
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.linalg import hankel

from sampling_designs import ClassSampling, RandomDyad, SamplingDesign, Star
from sbm_core import SbmParameters
from sbm_errors import DegeneracyError, InputError

MAX_ORACLE_Q = 5
IMAG_TOL = 1e-8
ROOT_GAP_TOL = 1e-10
HANKEL_DET_TOL = 1e-12
PAIRING_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class MomentSequence:
    """
    u_0..u_{2Q-1}, the cross-moment matrix U and, for class sampling, the
    second sequence v_0..v_{2Q-1}. u_0 is 1 for random-dyad sampling, rho
    for star sampling and sum_k rho_k alpha_k for class sampling.
    """
    kind: str
    u: np.ndarray
    U: np.ndarray
    v: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ('u', 'U', 'v'):
            value = getattr(self, name)
            if value is None:
                continue
            value = np.array(value, dtype=float)
            if np.any(value < -1e-12) or np.any(value > 1 + 1e-12):
                raise InputError(f"moment {name} has entries outside [0, 1]")
            object.__setattr__(self, name, value)
        if self.kind == RandomDyad.kind and abs(self.u[0] - 1) > 1e-12:
            raise InputError("random-dyad moments need u_0 = 1")
        if self.v is not None and abs(self.v[0] - 1) > 1e-12:
            raise InputError("class moments need v_0 = 1")

    @property
    def q(self) -> int:
        return self.U.shape[0]

    def to_record(self) -> Dict[str, list]:
        record = {'kind': self.kind, 'u': self.u.tolist(), 'U': self.U.tolist()}
        if self.v is not None:
            record['v'] = self.v.tolist()
        return record


@dataclass(frozen=True, eq=False)
class VandermondeSystem:
    """Sorted distinct roots and V[i, q] = roots[q]^i"""
    roots: np.ndarray
    vmatrix: np.ndarray

    @classmethod
    def from_roots(cls, roots) -> "VandermondeSystem":
        roots = np.sort(np.asarray(roots, dtype=float))
        if roots.size > 1 and np.min(np.diff(roots)) <= ROOT_GAP_TOL:
            raise DegeneracyError(f"repeated roots {roots.tolist()}: blocks are not distinguishable")
        return cls(roots, np.vander(roots, increasing=True).T)

    def weights(self, hankel_q: np.ndarray) -> np.ndarray:
        """diag(V^-1 H V^-t): the weights of H = V W V^t"""
        inner = np.linalg.solve(self.vmatrix, hankel_q)
        return np.diag(np.linalg.solve(self.vmatrix, inner.T).T).copy()

    def unmix(self, cross: np.ndarray) -> np.ndarray:
        """V^-1 C V^-t"""
        inner = np.linalg.solve(self.vmatrix, cross)
        return np.linalg.solve(self.vmatrix, inner.T).T


def _check_q(q: int):
    if not 1 <= q <= MAX_ORACLE_Q:
        raise InputError(f"moment recovery supports 1 <= Q <= {MAX_ORACLE_Q}, got {q}")


def _power_sums(weights: np.ndarray, roots: np.ndarray, count: int) -> np.ndarray:
    powers = roots[None, :] ** np.arange(count)[:, None]
    return powers @ weights


def _cross_moments(roots: np.ndarray, inner: np.ndarray) -> np.ndarray:
    V = np.vander(roots, increasing=True).T
    return V @ inner @ V.T


def exact_moments(params: SbmParameters, design: SamplingDesign) -> MomentSequence:
    """Analytic moments of a random-dyad, star or class sampled SBM"""
    q = params.q
    alpha, pi = params.alpha, params.pi
    A = np.diag(alpha)
    if isinstance(design, RandomDyad):
        s = design.rho * pi @ alpha
        return MomentSequence(design.kind, _power_sums(alpha, s, 2 * q),
                              _cross_moments(s, A @ pi @ A))
    if isinstance(design, Star):
        s = pi @ alpha
        return MomentSequence(design.kind, design.rho * _power_sums(alpha, s, 2 * q),
                              design.rho ** 2 * _cross_moments(s, A @ pi @ A))
    if isinstance(design, ClassSampling):
        rho = np.asarray(design.rho)
        if rho.size != q:
            raise InputError(f"class sampling has {rho.size} rates for {q} blocks")
        t = pi @ (rho * alpha)
        o = pi @ alpha
        return MomentSequence(design.kind, _power_sums(rho * alpha, o, 2 * q),
                              _cross_moments(t, A @ pi @ A @ np.diag(rho)),
                              v=_power_sums(alpha, t, 2 * q))
    raise InputError(f"no constructive identifiability result for {design.kind} sampling")


def hankel_polynomial(u: np.ndarray, q: int) -> np.ndarray:
    """
    Coefficients (increasing degree) of B(x) = sum_k (-1)^(k+Q) D_k x^k,
    D_k the determinant of the (Q+1) x Q Hankel matrix M without row k.
    Its roots are the Q atoms of the moment sequence.
    """
    u = np.asarray(u, dtype=float)
    if u.size < 2 * q:
        raise InputError(f"need {2 * q} moments for Q={q}, got {u.size}")
    M = hankel(u[:q + 1], u[q:2 * q])
    M_q = M[:q]
    # Hadamard-normalized determinant: 1 for orthogonal rows, 0 for dependent ones
    row_norms = np.prod(np.linalg.norm(M_q, axis=1))
    if row_norms == 0 or abs(np.linalg.det(M_q)) <= HANKEL_DET_TOL * row_norms:
        raise DegeneracyError(f"singular Hankel matrix M_Q for Q={q}")
    return np.array([(-1) ** (k + q) * np.linalg.det(np.delete(M, k, axis=0))
                     for k in range(q + 1)])


def vandermonde_system(u: np.ndarray, q: int) -> VandermondeSystem:
    coefficients = hankel_polynomial(u, q)
    roots = np.roots(coefficients[::-1])
    if np.any(np.abs(roots.imag) > IMAG_TOL * max(1.0, np.max(np.abs(roots)))):
        raise DegeneracyError(f"complex roots {roots.tolist()}")
    return VandermondeSystem.from_roots(roots.real)


def _hankel_q(u: np.ndarray, q: int) -> np.ndarray:
    return hankel(u[:q], u[q - 1:2 * q - 1])


def _as_parameters(alpha: np.ndarray, pi: np.ndarray) -> SbmParameters:
    if np.any(alpha <= 0):
        raise DegeneracyError(f"recovered non-positive block proportions {alpha.tolist()}")
    pi = np.clip((pi + pi.T) / 2, 0.0, 1.0)
    return SbmParameters(alpha / alpha.sum(), pi)


def recover_mar(moments: MomentSequence, rho: float, q: int) -> SbmParameters:
    """
    Invert random-dyad or star moments for known rho. Output blocks follow
    the sorted atoms s_q = (rho) (pi alpha)_q.
    """
    _check_q(q)
    if moments.kind not in (RandomDyad.kind, Star.kind):
        raise InputError(f"recover_mar handles random-dyad and star moments, got {moments.kind}")
    if not 0 < rho <= 1:
        raise InputError(f"rho must lie in (0, 1], got {rho}")
    if moments.U.shape != (q, q):
        raise InputError(f"cross moments must be {q}x{q}")
    system = vandermonde_system(moments.u, q)
    scale = rho if moments.kind == Star.kind else 1.0
    alpha = system.weights(_hankel_q(moments.u, q)) / scale
    pi = system.unmix(moments.U) / np.outer(alpha, alpha) / scale ** 2
    return _as_parameters(alpha, pi)


def recover_class(moments: MomentSequence, q: int) -> Tuple[SbmParameters, np.ndarray]:
    """
    Invert class-sampling moments. alpha comes from the v sequence (atoms t),
    the products alpha_q rho_q from the u sequence (atoms o). The two root
    orders are matched by the block permutation making pi symmetric with
    pi alpha = o. Output blocks follow the sorted t atoms.
    """
    _check_q(q)
    if moments.kind != ClassSampling.kind or moments.v is None:
        raise InputError("recover_class needs class moments with both u and v sequences")
    t_system = vandermonde_system(moments.v, q)
    o_system = vandermonde_system(moments.u, q)
    alpha = t_system.weights(_hankel_q(moments.v, q))
    products = o_system.weights(_hankel_q(moments.u, q))
    if np.any(alpha <= 0) or np.any(products <= 0):
        raise DegeneracyError("recovered non-positive block weights")
    # X = pi A B in t order
    mixed = t_system.unmix(moments.U) / alpha[:, None]

    best_score, best = np.inf, None
    for perm in itertools.permutations(range(q)):
        perm = np.array(perm)
        pi = mixed / products[perm][None, :]
        score = max(np.max(np.abs(pi - pi.T)),
                    np.max(np.abs(pi @ alpha - o_system.roots[perm])))
        if score < best_score:
            best_score, best = score, (perm, pi)
    perm, pi = best
    if best_score > PAIRING_TOL:
        raise DegeneracyError(f"no consistent pairing of the two root systems (residual {best_score:.2e})")
    rho = np.clip(products[perm] / alpha, 0.0, 1.0)
    return _as_parameters(alpha, pi), rho
