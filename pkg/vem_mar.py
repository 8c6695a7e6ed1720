#!/usr/bin/env python3
"""
Variational EM for MAR sampling
Inference restricted to the observed dyads: M-step, fixed-point variational
E-step, the variational lower bound and the MAR ICL criterion. The tau
fixed point and the expected block counts are shared with the NMAR algorithm.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp, xlogy

from sbm_core import PROB_EPS, BlockAssignment, FitResult, ObservedNetwork, SbmParameters
from sbm_errors import InputError

EMPTY_PAIR_PI = 0.5
TAU_TOL = 1e-6
TAU_MAX_SWEEPS = 50


@dataclass
class MarState:
    tau: np.ndarray


def edge_weights_mar(net: ObservedNetwork) -> Tuple[np.ndarray, np.ndarray]:
    """(present, absent) weight matrices over observed dyads"""
    present = net.adjacency * net.observed_mask
    absent = net.observed_mask.astype(float) - present
    return present, absent


def clip_probability(p):
    return np.clip(p, PROB_EPS, 1 - PROB_EPS)


def block_counts(present: np.ndarray, absent: np.ndarray,
                 tau: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Expected present/absent dyad counts per block pair, each unordered dyad once"""
    return tau.T @ present @ tau / 2, tau.T @ absent @ tau / 2


def connection_term(present: np.ndarray, absent: np.ndarray, pi: np.ndarray,
                    tau: np.ndarray) -> float:
    """sum_{dyads} sum_{ql} tau_iq tau_jl log b(w_ij; pi_ql) for fractional weights w"""
    ones, zeros = block_counts(present, absent, tau)
    with np.errstate(divide='ignore', invalid='ignore'):
        total = xlogy(ones, pi).sum() + xlogy(zeros, 1 - pi).sum()
    return float(total) if not np.isnan(total) else -np.inf


def prior_entropy_term(tau: np.ndarray, alpha: np.ndarray, nodes: Optional[np.ndarray] = None) -> float:
    """sum_i sum_q tau_iq log(alpha_q / tau_iq) over the selected nodes"""
    if nodes is not None:
        tau = tau[nodes]
    with np.errstate(divide='ignore'):
        return float((xlogy(tau, alpha[None, :]) - xlogy(tau, tau)).sum())


def estimate_pi(numerator: np.ndarray, denominator: np.ndarray,
                flags: Optional[List[str]] = None) -> np.ndarray:
    """Ratio of expected counts; empty block pairs get EMPTY_PAIR_PI and a flag"""
    empty = denominator <= 0
    pi = np.where(empty, EMPTY_PAIR_PI, numerator / np.where(empty, 1.0, denominator))
    if empty.any() and flags is not None:
        pairs = sorted({tuple(sorted(p)) for p in zip(*np.nonzero(empty))})
        flags.append(f"empty-block-pair:{pairs}")
    # maximizer over [eps, 1 - eps], which keeps the bound finite after tau moves
    pi = clip_probability(pi)
    return (pi + pi.T) / 2


def estimate_alpha(column_sums: np.ndarray) -> np.ndarray:
    """
    Maximizer of sum_q c_q log alpha_q over the simplex with alpha_q >= PROB_EPS:
    blocks whose share falls under the floor sit on it, the rest share the
    remaining mass proportionally.
    """
    c = np.asarray(column_sums, dtype=float)
    floored = c / c.sum() < PROB_EPS
    while True:
        free = ~floored
        mass = 1 - floored.sum() * PROB_EPS
        alpha = np.where(floored, PROB_EPS, c * mass / c[free].sum())
        newly = free & (alpha < PROB_EPS)
        if not newly.any():
            return alpha
        floored |= newly


def tau_fixed_point(present: np.ndarray, absent: np.ndarray, params: SbmParameters,
                    tau: np.ndarray, log_lambda: Optional[np.ndarray] = None,
                    tol: float = TAU_TOL, max_sweeps: int = TAU_MAX_SWEEPS) -> np.ndarray:
    """
    Node-by-node fixed point
        tau_iq ∝ lambda_iq alpha_q prod_j prod_l b(w_ij; pi_ql)^tau_jl
    solved in log space with a log-sum-exp row normalization. Each node
    update is the exact maximizer of the bound in tau_i.
    """
    tau = np.array(tau, dtype=float)
    pi = clip_probability(params.pi)
    log_pi, log_1m_pi = np.log(pi), np.log1p(-pi)
    base = np.broadcast_to(np.log(np.maximum(params.alpha, PROB_EPS)), tau.shape).copy()
    if log_lambda is not None:
        base = base + log_lambda
    n = tau.shape[0]
    for _ in range(max_sweeps):
        max_change = 0.0
        for i in range(n):
            logits = base[i] + log_pi @ (present[i] @ tau) + log_1m_pi @ (absent[i] @ tau)
            new_row = np.exp(logits - logsumexp(logits))
            new_row /= new_row.sum()
            max_change = max(max_change, float(np.max(np.abs(new_row - tau[i]))))
            tau[i] = new_row
        if max_change < tol:
            break
    return tau


def lower_bound_mar(net: ObservedNetwork, params: SbmParameters, state: MarState) -> float:
    """J(tau, theta) on the observed dyads; -inf when pi contradicts an observation"""
    present, absent = edge_weights_mar(net)
    return (connection_term(present, absent, params.pi, state.tau)
            + prior_entropy_term(state.tau, params.alpha, net.observed_nodes))


def m_step_mar(net: ObservedNetwork, state: MarState,
               flags: Optional[List[str]] = None) -> SbmParameters:
    """alpha averaged over N^o, pi as observed-dyad weighted densities"""
    if net.n_observed_dyads == 0:
        raise InputError("no observed dyad: the MAR M-step is undefined")
    tau = state.tau
    nodes = net.observed_nodes
    alpha = estimate_alpha(tau[nodes].sum(axis=0))
    present, absent = edge_weights_mar(net)
    ones, zeros = block_counts(present, absent, tau)
    pi = estimate_pi(ones, ones + zeros, flags)
    return SbmParameters(alpha, pi)


def ve_step_mar(net: ObservedNetwork, params: SbmParameters, state: MarState) -> MarState:
    present, absent = edge_weights_mar(net)
    return MarState(tau_fixed_point(present, absent, params, state.tau))


def _check_init(net: ObservedNetwork, q: int, init: np.ndarray) -> np.ndarray:
    if q < 1:
        raise InputError(f"block count must be >= 1, got {q}")
    tau = np.array(init, dtype=float)
    if tau.shape != (net.n, q):
        raise InputError(f"initial tau must be {net.n}x{q}, got {tau.shape}")
    if np.any(tau < 0) or not np.allclose(tau.sum(axis=1), 1.0, atol=1e-10):
        raise InputError("initial tau rows must be probability vectors")
    return tau


def fit_mar(net: ObservedNetwork, q: int, init: np.ndarray, eps: float = 1e-6,
            max_iter: int = 500, verbose: bool = False, debug: bool = False) -> FitResult:
    """
    Variational EM on the observed dyads (MAR sampling).

    The bound is recorded after every half-step; the loop stops when the
    max-abs change of (alpha, pi) falls below eps.
    """
    tau = _check_init(net, q, init)
    flags: List[str] = []
    if net.n_observed_dyads == 0:
        params = SbmParameters(estimate_alpha(tau.sum(axis=0)), np.full((q, q), EMPTY_PAIR_PI))
        if verbose:
            print("[VERBOSE] No observed dyad: returning prior-only fit")
        return FitResult('mar', q, params, tau, [], np.inf, flags=['degenerate:no-observed-dyads'])

    state = MarState(tau)
    params = m_step_mar(net, state, flags)
    trace = [lower_bound_mar(net, params, state)]
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        state = ve_step_mar(net, params, state)
        trace.append(lower_bound_mar(net, params, state))
        new_params = m_step_mar(net, state, flags)
        trace.append(lower_bound_mar(net, new_params, state))
        change = new_params.max_abs_change(params)
        params = new_params
        if debug:
            print(f"[DEBUG] MAR iteration {iteration}: VE bound {trace[-2]:.6f}, M bound {trace[-1]:.6f}")
        if verbose:
            print(f"[VERBOSE] MAR iteration {iteration}: bound {trace[-1]:.6f}, theta change {change:.2e}")
        if change < eps:
            converged = True
            break

    fit = FitResult('mar', q, params, state.tau, trace, n_iter=iteration,
                    converged=converged, flags=sorted(set(flags)))
    fit.icl = icl_mar(net, fit, q)
    return fit


def complete_log_likelihood_mar(net: ObservedNetwork, params: SbmParameters,
                                z: np.ndarray) -> float:
    """log p(Y^o, Z) for a (hard or soft) membership matrix z"""
    present, absent = edge_weights_mar(net)
    alpha = np.maximum(params.alpha, PROB_EPS)
    return (connection_term(present, absent, clip_probability(params.pi), z)
            + float(xlogy(z[net.observed_nodes], alpha[None, :]).sum()))


def icl_penalty_mar(q: int, n_observed_dyads: int, n_observed_nodes: int) -> float:
    return q * (q + 1) / 2 * np.log(n_observed_dyads) + (q - 1) * np.log(n_observed_nodes)


def icl_mar(net: ObservedNetwork, fit: FitResult, q: int, hard: bool = True) -> float:
    """
    ICL(Q) = -2 E[log p(Y^o, Z)] + Q(Q+1)/2 log|D^o| + (Q-1) log|N^o|,
    the expectation taken at the MAP labels (soft tau when hard=False).
    """
    if net.n_observed_dyads == 0:
        raise InputError("ICL is undefined without observed dyads")
    z = BlockAssignment.from_tau(fit.tau).one_hot() if hard else fit.tau
    loglik = complete_log_likelihood_mar(net, fit.theta_hat, z)
    return float(-2 * loglik + icl_penalty_mar(q, net.n_observed_dyads,
                                               int(net.observed_nodes.sum())))
