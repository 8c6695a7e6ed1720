#!/usr/bin/env python3
"""
Model Selection
Best-of-restarts fitting for every inference method and ICL tables over
block counts and sampling designs.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from sbm_config import METHODS
from sbm_core import FitResult, ObservedNetwork, init_clustering
from sbm_errors import InputError
from vem_mar import fit_mar
from vem_nmar import fit_nmar, icl_nmar, mar_comparator_design

PERTURBATION = 0.2
METHOD_RANK = {m: k for k, m in enumerate(METHODS)}


def restart_inits(net: ObservedNetwork, q: int, restarts: int,
                  rng: np.random.Generator) -> List[np.ndarray]:
    """
    Half spectral (the first unperturbed, the others with uniform noise),
    half Dirichlet draws. The spectral start always comes first.
    """
    if restarts < 1:
        raise InputError(f"restarts must be >= 1, got {restarts}")
    n_random = restarts // 2
    spectral = init_clustering(net, q, 'spectral', rng)
    inits = [spectral]
    for _ in range(restarts - n_random - 1):
        noisy = spectral + rng.uniform(0, PERTURBATION, spectral.shape)
        inits.append(noisy / noisy.sum(axis=1, keepdims=True))
    inits.extend(init_clustering(net, q, 'random', rng) for _ in range(n_random))
    return inits


def init_rng(seed: int, q: int) -> np.random.Generator:
    """One stream per (seed, q), so every method sees the same starts"""
    return np.random.default_rng([seed, q])


def fit_once(net: ObservedNetwork, q: int, method: str, init: np.ndarray,
             eps: float = 1e-6, max_iter: int = 500, verbose: bool = False,
             debug: bool = False) -> FitResult:
    if method == 'mar':
        return fit_mar(net, q, init, eps=eps, max_iter=max_iter, verbose=verbose, debug=debug)
    if method in METHODS:
        return fit_nmar(net, q, method, init, eps=eps, max_iter=max_iter,
                        verbose=verbose, debug=debug)
    raise InputError(f"unknown method '{method}', expected one of {METHODS}")


def warm_start(net: ObservedNetwork, q: int, init: np.ndarray, eps: float = 1e-6,
               max_iter: int = 500) -> np.ndarray:
    """tau of the MAR fit from `init`, used as an extra start for NMAR methods"""
    return fit_mar(net, q, init, eps=eps, max_iter=max_iter).tau


def best_of(net: ObservedNetwork, q: int, method: str, inits: Sequence[np.ndarray],
            eps: float = 1e-6, max_iter: int = 500, verbose: bool = False,
            debug: bool = False) -> FitResult:
    """
    Highest final bound wins; ties keep the earlier start. NMAR methods also
    start from the MAR solution of the first init.
    """
    if method != 'mar' and inits and net.n_observed_dyads:
        inits = list(inits) + [warm_start(net, q, inits[0], eps, max_iter)]
    best: Optional[FitResult] = None
    for k, init in enumerate(inits, start=1):
        fit = fit_once(net, q, method, init, eps, max_iter, debug=debug)
        if verbose:
            print(f"[VERBOSE] {method} Q={q} restart {k}/{len(inits)}: bound {fit.final_bound:.6f}, "
                  f"{fit.n_iter} iterations{'' if fit.converged else ' (not converged)'}")
        if best is None or fit.final_bound > best.final_bound:
            best = fit
    return best


def fit_command(net: ObservedNetwork, q: int, method: str, restarts: int = 10, seed: int = 0,
                eps: float = 1e-6, max_iter: int = 500, verbose: bool = False,
                debug: bool = False) -> FitResult:
    """Best-of-restarts fit; output is a pure function of the arguments"""
    inits = restart_inits(net, q, restarts, init_rng(seed, q))
    return best_of(net, q, method, inits, eps, max_iter, verbose, debug)


@dataclass
class SelectionEntry:
    q: int
    method: str
    icl: float
    icl_joint: float
    fit: FitResult = field(repr=False)

    def to_record(self) -> Dict[str, Any]:
        def clean(x):
            return float(x) if np.isfinite(x) else None
        return {'q': self.q, 'method': self.method, 'icl': clean(self.icl),
                'icl_joint': clean(self.icl_joint), 'bound': clean(self.fit.final_bound)}


@dataclass
class SelectionTable:
    """
    ICL per (q, method). `icl` is each method's own criterion; `icl_joint`
    scores MAR fits as random-dyad sampling so they compare with NMAR designs.
    """
    entries: List[SelectionEntry]
    criterion: str

    def score(self, entry: SelectionEntry) -> float:
        return getattr(entry, self.criterion)

    def _key(self, entry: SelectionEntry) -> Tuple[float, int, int]:
        return (self.score(entry), entry.q, METHOD_RANK[entry.method])

    @property
    def best(self) -> SelectionEntry:
        return min(self.entries, key=self._key)

    def best_q(self) -> Dict[str, int]:
        """Selected Q per method, by the method's own criterion"""
        chosen: Dict[str, SelectionEntry] = {}
        for entry in self.entries:
            current = chosen.get(entry.method)
            if current is None or (entry.icl, entry.q) < (current.icl, current.q):
                chosen[entry.method] = entry
        return {method: entry.q for method, entry in chosen.items()}

    def to_record(self) -> Dict[str, Any]:
        best = self.best
        return {'criterion': self.criterion,
                'table': [e.to_record() for e in self.entries],
                'best': {'q': best.q, 'method': best.method},
                'best_q': self.best_q()}


def select_command(net: ObservedNetwork, q_grid: Sequence[int], methods: Sequence[str],
                   restarts: int = 10, seed: int = 0, eps: float = 1e-6, max_iter: int = 500,
                   verbose: bool = False, debug: bool = False) -> SelectionTable:
    """
    Fits every (q, method) with starts shared across methods for each q.
    The argmin uses the joint criterion as soon as MAR competes with an
    NMAR design; ties go to the smaller Q, then to MAR.
    """
    if not q_grid or not methods:
        raise InputError("q grid and method list must be non-empty")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise InputError(f"unknown methods {unknown}, expected one of {METHODS}")
    entries = []
    for q in sorted(set(int(q) for q in q_grid)):
        inits = restart_inits(net, q, restarts, init_rng(seed, q))
        for method in methods:
            fit = best_of(net, q, method, inits, eps, max_iter, verbose, debug)
            if method == 'mar':
                joint = icl_nmar(net, fit, q, mar_comparator_design(net)) if net.n >= 2 else np.inf
            else:
                joint = fit.icl
            entries.append(SelectionEntry(q, method, fit.icl, joint, fit))
            if verbose:
                print(f"[VERBOSE] Q={q} {method}: ICL {fit.icl:.3f} (joint {joint:.3f})")
    criterion = 'icl' if set(methods) == {'mar'} else 'icl_joint'
    return SelectionTable(entries, criterion)
