#!/usr/bin/env python3
"""
Variational EM for NMAR sampling
Double mean-field approximation over latent blocks (tau) and missing dyads
(nu), with design-specific steps for double-standard, class and star-degree
sampling. Star-degree sampling adds one logistic bound parameter per node (zeta).
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.special import expit, log_expit, logit, xlogy

from sampling_designs import (ClassSampling, DoubleStandard, RandomDyad, SamplingDesign,
                              Star, StarDegree, DYAD_CENTERED, NODE_CENTERED)
from sbm_core import PROB_EPS, BlockAssignment, FitResult, ObservedNetwork, SbmParameters
from sbm_errors import InputError
from vem_mar import (EMPTY_PAIR_PI, MarState, block_counts, clip_probability, connection_term,
                     estimate_alpha, estimate_pi, m_step_mar, prior_entropy_term, tau_fixed_point,
                     _check_init)

ZETA_FLOOR = 1e-8
H_SERIES_BELOW = 1e-4
DEGENERATE_PSI = 0.5

NMAR_FAMILIES = (DoubleStandard.kind, ClassSampling.kind, StarDegree.kind)


@dataclass
class NmarState:
    """tau per node, nu per missing dyad (lexicographic), zeta per node for star-degree"""
    tau: np.ndarray
    nu: np.ndarray
    zeta: Optional[np.ndarray] = None


def filled_weights(net: ObservedNetwork, nu: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(present, absent) weights over all dyads: Y on D^o, nu on D^m"""
    present = np.array(net.adjacency * net.observed_mask)
    rows, cols = net.missing_dyads
    present[rows, cols] = nu
    present[cols, rows] = nu
    absent = net.off_diagonal - present
    return present, absent


def nu_entropy(nu: np.ndarray) -> float:
    return float(-(xlogy(nu, nu) + xlogy(1 - nu, 1 - nu)).sum())


@dataclass(frozen=True)
class DyadStats:
    """Observed Present/Absent counts and their variational counterparts on D^m"""
    s_o: float
    sbar_o: float
    s_m: float
    sbar_m: float

    @classmethod
    def from_state(cls, net: ObservedNetwork, nu: np.ndarray) -> "DyadStats":
        s_o = float(net.adjacency[net.observed_mask].sum() / 2)
        return cls(s_o, net.n_observed_dyads - s_o, float(nu.sum()), float((1 - nu).sum()))


@dataclass(frozen=True)
class DegreeStats:
    """Expected degrees D~_i and second moments E[D_i^2] under the nu distribution"""
    d_tilde: np.ndarray
    d2_tilde: np.ndarray

    @classmethod
    def from_state(cls, net: ObservedNetwork, nu: np.ndarray) -> "DegreeStats":
        present, _ = filled_weights(net, nu)
        d_tilde = present.sum(axis=1)
        variance = np.zeros((net.n, net.n))
        rows, cols = net.missing_dyads
        variance[rows, cols] = nu * (1 - nu)
        variance[cols, rows] = nu * (1 - nu)
        return cls(d_tilde, variance.sum(axis=1) + d_tilde ** 2)

    def d_tilde_minus(self, k: int, nu_kl: float) -> float:
        """D~_k with the contribution of dyad (k, l) removed"""
        return float(self.d_tilde[k] - nu_kl)


def jaakkola_h(zeta):
    """h(zeta) = -(logistic(zeta) - 1/2) / (2 zeta), series limit near 0"""
    zeta = np.asarray(zeta, dtype=float)
    small = np.abs(zeta) < H_SERIES_BELOW
    safe = np.where(small, 1.0, zeta)
    h = np.where(small, -0.125 + zeta ** 2 / 96, -np.tanh(safe / 2) / (4 * safe))
    return h if h.ndim else float(h)


# -- design terms E[log p_psi(R | .)] ---------------------------------------

def star_degree_term(net: ObservedNetwork, a: float, b: float, zeta: np.ndarray,
                     stats: DegreeStats) -> float:
    """Logistic-bound replacement of E[log p_psi(R | Y)] for star-degree sampling"""
    if np.any(zeta <= 0):
        raise InputError("zeta must be positive")
    unsampled = ~net.sampled_nodes
    mean_x = a + b * stats.d_tilde
    second = a ** 2 + 2 * a * b * stats.d_tilde + b ** 2 * stats.d2_tilde
    h = jaakkola_h(zeta)
    return float(-mean_x[unsampled].sum()
                 + (log_expit(zeta) + (mean_x - zeta) / 2 + h * (second - zeta ** 2)).sum())


def design_term(net: ObservedNetwork, psi: SamplingDesign, tau: np.ndarray, nu: np.ndarray,
                zeta: Optional[np.ndarray] = None) -> float:
    if psi.centering == NODE_CENTERED and not net.is_node_centered:
        return -np.inf
    with np.errstate(divide='ignore'):
        if isinstance(psi, DoubleStandard):
            stats = DyadStats.from_state(net, nu)
            return float(xlogy(stats.s_o, psi.rho1) + xlogy(stats.sbar_o, psi.rho0)
                         + xlogy(stats.s_m, 1 - psi.rho1) + xlogy(stats.sbar_m, 1 - psi.rho0))
        if isinstance(psi, ClassSampling):
            rho = np.asarray(psi.rho)
            sampled = net.sampled_nodes
            return float(xlogy(tau[sampled], rho[None, :]).sum()
                         + xlogy(tau[~sampled], 1 - rho[None, :]).sum())
        if isinstance(psi, StarDegree):
            return star_degree_term(net, psi.a, psi.b, zeta, DegreeStats.from_state(net, nu))
        if isinstance(psi, RandomDyad):
            return float(xlogy(net.n_observed_dyads, psi.rho) + xlogy(net.n_missing_dyads, 1 - psi.rho))
        if isinstance(psi, Star):
            n_sel = int(net.sampled_nodes.sum())
            return float(xlogy(n_sel, psi.rho) + xlogy(net.n - n_sel, 1 - psi.rho))
    raise InputError(f"no variational design term for {psi.kind} sampling")


def lower_bound_nmar(net: ObservedNetwork, params: SbmParameters, psi: SamplingDesign,
                     state: NmarState) -> float:
    """
    J(tau, nu, theta, psi) = E[log p_psi(R|.)] + SBM connection terms on D^o and D^m
    + prior/entropy of tau + entropy of nu. For star-degree sampling the first
    term is the zeta bound, so the value is a lower bound of the lower bound.
    """
    present, absent = filled_weights(net, state.nu)
    return (design_term(net, psi, state.tau, state.nu, state.zeta)
            + connection_term(present, absent, params.pi, state.tau)
            + prior_entropy_term(state.tau, params.alpha)
            + nu_entropy(state.nu))


def lower_bound_star_degree(net: ObservedNetwork, params: SbmParameters, psi: StarDegree,
                            state: NmarState, stats: Optional[DegreeStats] = None) -> float:
    if stats is None:
        stats = DegreeStats.from_state(net, state.nu)
    present, absent = filled_weights(net, state.nu)
    return (star_degree_term(net, psi.a, psi.b, state.zeta, stats)
            + connection_term(present, absent, params.pi, state.tau)
            + prior_entropy_term(state.tau, params.alpha)
            + nu_entropy(state.nu))


# -- common steps --------------------------------------------------------------

def m_step_theta(net: ObservedNetwork, state: NmarState,
                 flags: Optional[List[str]] = None) -> SbmParameters:
    """alpha averaged over all nodes, pi from observed edges plus nu-imputed ones"""
    tau = state.tau
    present, absent = filled_weights(net, state.nu)
    ones, zeros = block_counts(present, absent, tau)
    return SbmParameters(estimate_alpha(tau.sum(axis=0)), estimate_pi(ones, ones + zeros, flags))


def design_lambda(net: ObservedNetwork, psi: SamplingDesign, q: int) -> np.ndarray:
    """lambda_iq of the tau fixed point: rho_q / (1 - rho_q) weights for class sampling, else ones"""
    if isinstance(psi, ClassSampling):
        rho = np.asarray(psi.rho)
        return np.where(net.sampled_nodes[:, None], rho[None, :], 1 - rho[None, :])
    return np.ones((net.n, q))


def ve_step_tau(net: ObservedNetwork, params: SbmParameters, state: NmarState,
                lam: np.ndarray) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0) or np.any(lam.sum(axis=1) <= 0):
        raise InputError("every lambda row needs a positive entry")
    present, absent = filled_weights(net, state.nu)
    with np.errstate(divide='ignore'):
        log_lambda = np.log(lam)
    return tau_fixed_point(present, absent, params, state.tau, log_lambda)


def _missing_logits(net: ObservedNetwork, params: SbmParameters, tau: np.ndarray) -> np.ndarray:
    """sum_ql tau_iq tau_jl logit(pi_ql) for every missing dyad"""
    rows, cols = net.missing_dyads
    log_odds = logit(clip_probability(params.pi))
    return np.einsum('iq,ql,il->i', tau[rows], log_odds, tau[cols])


# -- double-standard sampling -------------------------------------------------

def update_psi_double_standard(stats: DyadStats,
                               flags: Optional[List[str]] = None) -> Tuple[float, float]:
    """rho0 = Sbar^o / (Sbar^o + sbar^m), rho1 = S^o / (S^o + s^m)"""
    def ratio(num, den, name):
        if den <= 0:
            if flags is not None:
                flags.append(f"degenerate:{name}")
            return DEGENERATE_PSI
        return num / den
    return (ratio(stats.sbar_o, stats.sbar_o + stats.sbar_m, 'rho0'),
            ratio(stats.s_o, stats.s_o + stats.s_m, 'rho1'))


def update_nu_double_standard(net: ObservedNetwork, params: SbmParameters, psi: DoubleStandard,
                              tau: np.ndarray) -> np.ndarray:
    rho0, rho1 = clip_probability(psi.rho0), clip_probability(psi.rho1)
    offset = np.log1p(-rho1) - np.log1p(-rho0)
    return clip_probability(expit(offset + _missing_logits(net, params, tau)))


# -- class sampling -------------------------------------------------------------

def update_psi_class(tau: np.ndarray, sampled: np.ndarray,
                     flags: Optional[List[str]] = None) -> np.ndarray:
    """rho_q = sum_{i in N^o} tau_iq / sum_i tau_iq"""
    column = tau.sum(axis=0)
    empty = column <= 0
    if empty.any() and flags is not None:
        flags.append(f"degenerate:class-rate:{np.nonzero(empty)[0].tolist()}")
    observed = tau[np.asarray(sampled, dtype=bool)].sum(axis=0)
    return np.where(empty, DEGENERATE_PSI, observed / np.where(empty, 1.0, column))


def update_nu_class(net: ObservedNetwork, params: SbmParameters, tau: np.ndarray) -> np.ndarray:
    return clip_probability(expit(_missing_logits(net, params, tau)))


# -- star-degree sampling --------------------------------------------------------

def update_psi_star_degree(stats: DegreeStats, zeta: np.ndarray, sampled: np.ndarray, n: int,
                           previous: Optional[Tuple[float, float]] = None,
                           flags: Optional[List[str]] = None) -> Tuple[float, float]:
    """
    Maximizer of the zeta bound in (a, b): the bound is a concave quadratic,
    so (a, b) solves its 2x2 stationarity system. A singular system keeps
    the previous values.
    """
    unsampled = ~np.asarray(sampled, dtype=bool)
    h = jaakkola_h(zeta)
    h_sum = h.sum()
    hd_sum = (h * stats.d_tilde).sum()
    hd2_sum = (h * stats.d2_tilde).sum()
    c_a = n / 2 - unsampled.sum()
    c_b = stats.d_tilde.sum() / 2 - stats.d_tilde[unsampled].sum()
    det = h_sum * hd2_sum - hd_sum ** 2
    if abs(det) <= 1e-12 * max(abs(h_sum * hd2_sum), 1e-300):
        if flags is not None:
            flags.append("degenerate:star-degree-system")
        return previous if previous is not None else (0.0, 0.0)
    a, b = np.linalg.solve(np.array([[2 * h_sum, 2 * hd_sum], [2 * hd_sum, 2 * hd2_sum]]),
                           np.array([-c_a, -c_b]))
    return float(a), float(b)


def update_zeta(psi: StarDegree, stats: DegreeStats) -> np.ndarray:
    """zeta_i = sqrt(a^2 + b^2 E[D_i^2] + 2ab D~_i), floored at ZETA_FLOOR"""
    a, b = psi.a, psi.b
    radicand = a ** 2 + b ** 2 * stats.d2_tilde + 2 * a * b * stats.d_tilde
    # a^2 + b^2 E[D^2] + 2ab D~ = E[(a + bD)^2] >= 0
    assert np.all(radicand >= -1e-9 * (1 + np.abs(radicand))), "negative zeta radicand"
    return np.maximum(np.sqrt(np.maximum(radicand, 0.0)), ZETA_FLOOR)


def update_nu_star_degree(net: ObservedNetwork, params: SbmParameters, psi: StarDegree,
                          tau: np.ndarray, zeta: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """
    One Gauss-Seidel sweep over D^m in lexicographic order. The bound is
    linear in each nu_ij apart from its entropy, so every update is exact.
    """
    a, b = psi.a, psi.b
    rows, cols = net.missing_dyads
    base = _missing_logits(net, params, tau) - b
    h = jaakkola_h(zeta)
    stats = DegreeStats.from_state(net, nu)
    degrees = np.array(stats.d_tilde)
    nu = np.array(nu, dtype=float)
    for k in range(nu.size):
        i, j = rows[k], cols[k]
        rest_i = degrees[i] - nu[k]
        rest_j = degrees[j] - nu[k]
        arg = (base[k]
               + h[i] * (2 * a * b + b ** 2 * (1 + 2 * rest_i))
               + h[j] * (2 * a * b + b ** 2 * (1 + 2 * rest_j)))
        new = float(clip_probability(expit(arg)))
        degrees[i] += new - nu[k]
        degrees[j] += new - nu[k]
        nu[k] = new
    return nu


# -- algorithm -----------------------------------------------------------------

def _family_kind(design_family: Union[str, SamplingDesign, type]) -> str:
    kind = design_family if isinstance(design_family, str) else design_family.kind
    if kind not in NMAR_FAMILIES:
        raise InputError(f"NMAR inference supports {NMAR_FAMILIES}, got '{kind}'")
    return kind


def initial_psi(kind: str, net: ObservedNetwork, tau: np.ndarray,
                flags: Optional[List[str]] = None) -> SamplingDesign:
    if kind == DoubleStandard.kind:
        return DoubleStandard(0.5, 0.5)
    if kind == ClassSampling.kind:
        rho = update_psi_class(tau, net.sampled_nodes, flags)
        return ClassSampling(tuple(clip_probability(rho)))
    rate = clip_probability(net.sampled_nodes.mean()) if net.n else 0.5
    return StarDegree(float(logit(rate)), 0.0)


def _psi_step(kind: str, net: ObservedNetwork, state: NmarState, psi: SamplingDesign,
              flags: List[str]) -> SamplingDesign:
    # clipping to [eps, 1 - eps] keeps each rate the maximizer over that box
    if kind == DoubleStandard.kind:
        rho0, rho1 = update_psi_double_standard(DyadStats.from_state(net, state.nu), flags)
        return DoubleStandard(float(clip_probability(rho0)), float(clip_probability(rho1)))
    if kind == ClassSampling.kind:
        rho = update_psi_class(state.tau, net.sampled_nodes, flags)
        return ClassSampling(tuple(float(r) for r in clip_probability(rho)))
    a, b = update_psi_star_degree(DegreeStats.from_state(net, state.nu), state.zeta,
                                  net.sampled_nodes, net.n, (psi.a, psi.b), flags)
    return StarDegree(a, b)


def _nu_step(kind: str, net: ObservedNetwork, params: SbmParameters, psi: SamplingDesign,
             state: NmarState) -> np.ndarray:
    if kind == DoubleStandard.kind:
        return update_nu_double_standard(net, params, psi, state.tau)
    if kind == ClassSampling.kind:
        return update_nu_class(net, params, state.tau)
    return update_nu_star_degree(net, params, psi, state.tau, state.zeta, state.nu)


def fit_nmar(net: ObservedNetwork, q: int, design_family, init: np.ndarray,
             eps: float = 1e-6, max_iter: int = 500, psi_init: Optional[SamplingDesign] = None,
             verbose: bool = False, debug: bool = False) -> FitResult:
    """
    Variational EM for NMAR sampling. Each iteration runs the psi step,
    the zeta step (star-degree only), the tau step, the nu step and the
    theta step, recording the bound after each; it stops when the max-abs
    change of (alpha, pi) falls below eps.
    """
    kind = _family_kind(design_family)
    tau = _check_init(net, q, init)
    if net.n < 2:
        raise InputError("NMAR inference needs at least two nodes")
    if kind != DoubleStandard.kind and not net.is_node_centered:
        raise InputError(f"{kind} sampling hides whole rows: some observed dyad joins two unsampled nodes")
    flags: List[str] = []
    density = net.observed_density() if net.n_observed_dyads else EMPTY_PAIR_PI
    nu = np.full(net.n_missing_dyads, float(clip_probability(density)))
    state = NmarState(tau, nu)
    # theta from the observed dyads, then nu imputed from it
    if net.n_observed_dyads:
        params = m_step_mar(net, MarState(tau))
    else:
        params = m_step_theta(net, state, flags)
    psi = psi_init if psi_init is not None else initial_psi(kind, net, tau, flags)
    if kind == StarDegree.kind:
        state.zeta = update_zeta(psi, DegreeStats.from_state(net, state.nu))
    state.nu = _nu_step(kind, net, params, psi, state)
    if kind == StarDegree.kind:
        state.zeta = update_zeta(psi, DegreeStats.from_state(net, state.nu))

    def bound() -> float:
        return lower_bound_nmar(net, params, psi, state)

    trace = [bound()]
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        psi = _psi_step(kind, net, state, psi, flags)
        trace.append(bound())
        if kind == StarDegree.kind:
            state.zeta = update_zeta(psi, DegreeStats.from_state(net, state.nu))
            trace.append(bound())
        state.tau = ve_step_tau(net, params, state, design_lambda(net, psi, q))
        trace.append(bound())
        state.nu = _nu_step(kind, net, params, psi, state)
        trace.append(bound())
        new_params = m_step_theta(net, state, flags)
        change = new_params.max_abs_change(params)
        params = new_params
        trace.append(bound())
        if debug:
            print(f"[DEBUG] {kind} iteration {iteration}: sub-step bounds "
                  f"{', '.join(f'{b:.6f}' for b in trace[-5:])}")
        if verbose:
            print(f"[VERBOSE] {kind} iteration {iteration}: bound {trace[-1]:.6f}, "
                  f"theta change {change:.2e}, psi {np.round(psi.psi(), 4).tolist()}")
        if change < eps:
            converged = True
            break

    fit = FitResult(kind, q, params, state.tau, trace, psi_hat=psi, nu=state.nu,
                    zeta=state.zeta, n_iter=iteration, converged=converged,
                    flags=sorted(set(flags)))
    fit.icl = icl_nmar(net, fit, q, psi)
    return fit


# -- model selection -----------------------------------------------------------

def icl_penalty(q: int, k: int, n: int, centering: str) -> float:
    log_dyads = np.log(n * (n - 1) / 2)
    if centering == DYAD_CENTERED:
        return (k + q * (q + 1) / 2) * log_dyads + (q - 1) * np.log(n)
    if centering == NODE_CENTERED:
        return q * (q + 1) / 2 * log_dyads + (k + q - 1) * np.log(n)
    raise InputError(f"unknown centering '{centering}'")


def mar_comparator_design(net: ObservedNetwork) -> RandomDyad:
    """Random-dyad design at its maximum likelihood rate |D^o| / |D|"""
    return RandomDyad(net.sampling_rate)


def icl_nmar(net: ObservedNetwork, fit: FitResult, q: int,
             design: Optional[SamplingDesign] = None) -> float:
    """
    ICL(Q) = -2 E[log p(Y^o, Y^m, R, Z)] + pen, with the expectation taken at
    the MAP labels and the current nu. A MAR fit (no nu) is scored as a
    random-dyad model: nu is the fitted edge probability of each missing dyad.
    """
    if net.n < 2:
        raise InputError("ICL needs at least two nodes")
    if design is None:
        design = fit.psi_hat if fit.psi_hat is not None else mar_comparator_design(net)
    z = BlockAssignment.from_tau(fit.tau).one_hot()
    params = fit.theta_hat
    pi = clip_probability(params.pi)
    if fit.nu is not None:
        nu = fit.nu
    else:
        rows, cols = net.missing_dyads
        nu = np.einsum('iq,ql,il->i', z[rows], pi, z[cols])
    zeta = fit.zeta
    if isinstance(design, StarDegree) and zeta is None:
        zeta = update_zeta(design, DegreeStats.from_state(net, nu))
    present, absent = filled_weights(net, nu)
    expectation = (connection_term(present, absent, pi, z)
                   + float(xlogy(z, np.maximum(params.alpha, PROB_EPS)[None, :]).sum())
                   + design_term(net, design, z, nu, zeta))
    return float(-2 * expectation + icl_penalty(q, design.n_params, net.n, design.centering))
