#!/usr/bin/env python3
"""
Experiment Runner
Simulation study driver: draws SBM networks, hides dyads with a sampling
design, fits every requested method over the block-count grid and streams
one CSV row per (replicate, psi, q, method).
"""

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from model_selection import METHOD_RANK, fit_command
from sampling_designs import RandomDyad, SamplingDesign, apply_design, design_from_values
from sbm_config import ExperimentConfig
from sbm_core import (FitResult, ObservedNetwork, SbmParameters, adjusted_rand_index,
                      best_block_permutation, frobenius_rel_error, sample_sbm_network)
from sbm_errors import InputError
from vem_nmar import icl_nmar, mar_comparator_design

CSV_COLUMNS = ['replicate', 'psi', 'q', 'method', 'sampling_rate', 'ari', 'frob_err',
               'rho_err', 'icl', 'q_selected', 'icl_correct', 'design_selected']
NA = 'NA'
PSI_SEPARATOR = ';'
FLOAT_COLUMNS = ('sampling_rate', 'ari', 'frob_err', 'rho_err', 'icl')
INT_COLUMNS = ('replicate', 'q', 'q_selected', 'icl_correct')


def format_psi(psi) -> str:
    return PSI_SEPARATOR.join(repr(float(v)) for v in psi)


def parse_psi(text: str) -> List[float]:
    return [float(v) for v in text.split(PSI_SEPARATOR)]


def _cell_value(value) -> str:
    if value is None:
        return NA
    if isinstance(value, float):
        return repr(float(value)) if np.isfinite(value) else NA
    return str(value)


def rho_error(fit: FitResult, design: SamplingDesign, net: ObservedNetwork,
              perm: Optional[np.ndarray]) -> Optional[float]:
    """Mean relative error over the design's parameters; None when not estimated"""
    truth = design.psi()
    if fit.method == 'mar' and isinstance(design, RandomDyad):
        estimate = np.array([net.sampling_rate])
    elif fit.psi_hat is not None and fit.psi_hat.kind == design.kind:
        estimate = fit.psi_hat.psi()
        if design.kind == 'class':
            if perm is None or estimate.size != truth.size:
                return None
            estimate = estimate[perm]
    else:
        return None
    defined = truth != 0
    if not defined.any():
        return None
    return float(np.mean(np.abs(estimate[defined] - truth[defined]) / np.abs(truth[defined])))


def _selected_q(icls: Dict[int, float]) -> int:
    return min(icls, key=lambda q: (icls[q], q))


def run_cell(config: ExperimentConfig, psi_index: int, replicate: int) -> List[Dict[str, Any]]:
    """One replicate of one psi value; its random stream depends on (seed, cell index) only"""
    truth: SbmParameters = config.true_parameters()
    psi = config.psi_grid[psi_index]
    cell_index = psi_index * config.replications + replicate
    rng = np.random.default_rng([config.seed, cell_index])
    net_full, z = sample_sbm_network(truth, config.n, rng)
    design = design_from_values(config.design, psi)
    net = apply_design(net_full, z, design, rng)
    fit_seed = int(rng.integers(2**31 - 1))

    results: List[Tuple[str, int, FitResult, float]] = []
    for method in config.methods:
        network = net_full if method == 'oracle' else net
        fit_method = 'mar' if method == 'oracle' else method
        for q in config.q_grid:
            fit = fit_command(network, q, fit_method, restarts=config.restarts, seed=fit_seed,
                              eps=config.tolerance, max_iter=config.max_iter)
            joint = fit.icl
            if method == 'mar':
                joint = icl_nmar(network, fit, q, mar_comparator_design(network))
            results.append((method, q, fit, joint))

    competing = [(joint, q, METHOD_RANK[m], m) for m, q, _, joint in results if m != 'oracle']
    design_selected = min(competing)[3] if competing else None

    rows = []
    for method in config.methods:
        own = [(q, fit) for m, q, fit, _ in results if m == method]
        q_selected = _selected_q({q: fit.icl for q, fit in own})
        for q, fit in own:
            perm = None
            frob = None
            if q == truth.q:
                perm = best_block_permutation(fit.theta_hat.pi, truth.pi)
                frob = frobenius_rel_error(fit.theta_hat.pi, truth.pi, perm)
            network = net_full if method == 'oracle' else net
            rows.append({
                'replicate': replicate,
                'psi': format_psi(psi),
                'q': q,
                'method': method,
                'sampling_rate': net.sampling_rate,
                'ari': adjusted_rand_index(fit.labels, z),
                'frob_err': frob,
                'rho_err': None if method == 'oracle' else rho_error(fit, design, network, perm),
                'icl': fit.icl,
                'q_selected': q_selected,
                'icl_correct': int(q_selected == truth.q),
                'design_selected': design_selected,
            })
    return rows


def _run_cell_args(args) -> List[Dict[str, Any]]:
    return run_cell(*args)


def _cells(config: ExperimentConfig) -> Iterator[Tuple[ExperimentConfig, int, int]]:
    for psi_index in range(len(config.psi_grid)):
        for replicate in range(config.replications):
            yield config, psi_index, replicate


def run_experiment(config: ExperimentConfig, output: Optional[str] = None,
                   verbose: bool = False) -> List[Dict[str, Any]]:
    """
    Runs every (psi, replicate) cell and writes the CSV in cell order,
    whatever the number of workers. Returns the rows.
    """
    path = output or config.output
    total = len(config.psi_grid) * config.replications
    print(f"🚀 Starting experiment: {config.topology} topology, {config.design} sampling, n={config.n}")
    print(f"📋 {len(config.psi_grid)} psi values x {config.replications} replicates, "
          f"methods {config.methods}, Q grid {config.q_grid}")
    start = time.time()
    rows: List[Dict[str, Any]] = []
    try:
        f = open(path, 'w', newline='')
    except OSError as e:
        raise InputError(f"cannot write results to {path}: {e}")
    with f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        if config.workers > 1:
            executor = ProcessPoolExecutor(max_workers=config.workers)
            cell_rows = executor.map(_run_cell_args, _cells(config))
        else:
            executor = None
            cell_rows = map(_run_cell_args, _cells(config))
        try:
            for done, rows_of_cell in enumerate(cell_rows, start=1):
                for row in rows_of_cell:
                    writer.writerow({k: _cell_value(row[k]) for k in CSV_COLUMNS})
                f.flush()
                rows.extend(rows_of_cell)
                if verbose:
                    first = rows_of_cell[0]
                    print(f"   ✅ Cell {done}/{total}: psi={first['psi']} replicate {first['replicate']}, "
                          f"sampling rate {first['sampling_rate']:.3f}")
        finally:
            if executor is not None:
                executor.shutdown()
    print(f"💾 {len(rows)} rows saved to {path}")
    print(f"⏱️  Experiment finished in {time.time() - start:.1f} seconds")
    return rows


def read_results(path: str) -> List[Dict[str, Any]]:
    """Parse a results CSV back into typed rows (NA becomes None)"""
    rows = []
    with open(path, 'r', newline='') as f:
        for raw in csv.DictReader(f):
            row: Dict[str, Any] = {}
            for key, value in raw.items():
                if value == NA:
                    row[key] = None
                elif key in FLOAT_COLUMNS:
                    row[key] = float(value)
                elif key in INT_COLUMNS:
                    row[key] = int(value)
                else:
                    row[key] = value
            rows.append(row)
    return rows
