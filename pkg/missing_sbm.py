#!/usr/bin/env python3
"""
Missing-Data SBM command line
Simulate networks, hide dyads with a sampling design, fit MAR or NMAR
stochastic block models, select the block count and the design by ICL,
run the identifiability oracle and the simulation study.
"""

import argparse
import json
import os
import sys
import time
from typing import Any, Dict, List, Optional

import numpy as np

from experiment_runner import run_experiment
from identifiability_oracle import exact_moments, recover_class, recover_mar
from model_selection import fit_command, select_command
from network_io import (FORMATS, TERNARY_CSV, load_network, load_weighted_csv, save_imputed, save_network,
                        threshold_weighted)
from sampling_designs import DESIGN_TYPES, ClassSampling, apply_design, design_from_values
from sbm_config import METHODS, TOPOLOGIES, ExperimentConfig, Settings, load_settings, topology_parameters
from sbm_core import BlockAssignment, ObservedNetwork, SbmParameters, connectivity, sample_sbm_network
from sbm_errors import EXIT_INPUT_ERROR, EXIT_OK, DegeneracyError, InputError, MissingSbmError


def _write_json(record: Dict[str, Any], path: Optional[str]):
    text = json.dumps(record, indent=2)
    if path is None:
        print(text)
        return
    try:
        with open(path, 'w') as f:
            f.write(text + '\n')
    except OSError as e:
        raise InputError(f"cannot write {path}: {e}")
    print(f"💾 Saved to {path}")


def _read_json(path: str) -> Any:
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except FileNotFoundError:
        raise InputError(f"file not found: {path}")
    except json.JSONDecodeError as e:
        raise InputError(f"{path} is not valid JSON: {e}")


def _load_input_network(args) -> ObservedNetwork:
    if not args.network:
        raise InputError("--network is required")
    print(f"⚙️  Loading network from {args.network}...")
    if args.gamma is not None:
        net = threshold_weighted(load_weighted_csv(args.network), args.gamma)
    else:
        net = load_network(args.network, args.format, default=args.default)
    print(f"✅ {net.n} nodes, {net.n_observed_dyads} observed and {net.n_missing_dyads} missing dyads "
          f"(sampling rate {net.sampling_rate:.3f})")
    return net


def _parameters(args) -> SbmParameters:
    if getattr(args, 'params', None):
        data = _read_json(args.params)
        return SbmParameters(data['alpha'], data['pi'])
    return topology_parameters(args.topology, args.epsilon)


def cmd_simulate(args, settings: Settings) -> int:
    params = _parameters(args)
    rng = np.random.default_rng(args.seed if args.seed is not None else settings.seed)
    net, z = sample_sbm_network(params, args.n, rng)
    print(f"✅ Simulated {args.n} nodes, Q={params.q}, connectivity {connectivity(params):.3f}")
    if args.out:
        save_network(net, args.out, args.format)
        print(f"💾 Network saved to {args.out}")
    if args.labels:
        _write_json({'labels': z.labels.tolist(), 'q': z.q}, args.labels)
    return EXIT_OK


def cmd_sample(args, settings: Settings) -> int:
    net_full = _load_input_network(args)
    design = design_from_values(args.design, args.psi or [])
    if args.labels:
        data = _read_json(args.labels)
        z = BlockAssignment(data['labels'], data['q'])
    elif isinstance(design, ClassSampling):
        raise InputError("class sampling needs --labels with the block of every node")
    else:
        z = BlockAssignment(np.zeros(net_full.n, dtype=int), 1)
    rng = np.random.default_rng(args.seed if args.seed is not None else settings.seed)
    net = apply_design(net_full, z, design, rng)
    print(f"✅ {design.kind} sampling kept {net.n_observed_dyads}/{net.n_dyads} dyads "
          f"(rate {net.sampling_rate:.3f})")
    if args.out:
        save_network(net, args.out, args.format)
        print(f"💾 Sampled network saved to {args.out}")
    return EXIT_OK


def cmd_fit(args, settings: Settings) -> int:
    net = _load_input_network(args)
    if len(args.q) != 1:
        raise InputError(f"fit takes a single --q value, got {args.q}; use select to scan block counts")
    q = args.q[0]
    restarts = args.restarts or settings.restarts
    print(f"🔧 Fitting {args.method} SBM with Q={q} ({restarts} restarts)...")
    start = time.time()
    fit = fit_command(net, q, args.method, restarts=restarts,
                      seed=args.seed if args.seed is not None else settings.seed,
                      eps=settings.tolerance, max_iter=settings.max_iter,
                      verbose=settings.verbose or args.verbose, debug=args.debug)
    print(f"✅ Best bound {fit.final_bound:.4f}, ICL {fit.icl:.4f} in {time.time() - start:.2f} seconds")
    for flag in fit.flags:
        print(f"   ⚠️  {flag}")
    if args.imputed:
        save_imputed(fit.imputed_adjacency(net), args.imputed)
        print(f"💾 Imputed adjacency saved to {args.imputed}")
    _write_json(fit.to_record(), args.out)
    return EXIT_OK


def cmd_select(args, settings: Settings) -> int:
    net = _load_input_network(args)
    methods = args.method_list or ['mar']
    restarts = args.restarts or settings.restarts
    print(f"🔧 Scanning Q in {args.q} for methods {methods}...")
    table = select_command(net, args.q, methods, restarts=restarts,
                           seed=args.seed if args.seed is not None else settings.seed,
                           eps=settings.tolerance, max_iter=settings.max_iter,
                           verbose=settings.verbose or args.verbose, debug=args.debug)
    for entry in table.entries:
        print(f"   Q={entry.q:<3d} {entry.method:<16s} ICL {entry.icl:12.3f}  joint {entry.icl_joint:12.3f}")
    best = table.best
    print(f"✅ Selected Q={best.q} with {best.method}")
    _write_json(table.to_record(), args.out)
    return EXIT_OK


def cmd_oracle(args, settings: Settings) -> int:
    params = _parameters(args)
    design = design_from_values(args.design, args.psi or [])
    moments = exact_moments(params, design)
    print(f"🔧 Recovering Q={params.q} parameters from exact {design.kind} moments...")
    record: Dict[str, Any] = {'moments': moments.to_record()}
    if isinstance(design, ClassSampling):
        recovered, rho = recover_class(moments, params.q)
        record['rho'] = rho.tolist()
    else:
        recovered = recover_mar(moments, design.rho, params.q)
    record['recovered'] = recovered.to_record()
    print(f"✅ alpha {np.round(recovered.alpha, 6).tolist()}")
    _write_json(record, args.out)
    return EXIT_OK


def cmd_experiment(args, settings: Settings) -> int:
    if not args.config:
        raise InputError("--config is required")
    print(f"⚙️  Loading experiment configuration from {args.config}...")
    config = ExperimentConfig.from_json(args.config)
    config.workers = max(config.workers, settings.workers)
    output = args.out or os.path.join(settings.output_dir, config.output)
    run_experiment(config, output, verbose=settings.verbose or args.verbose)
    return EXIT_OK


COMMANDS = {
    'simulate': cmd_simulate,
    'sample': cmd_sample,
    'fit': cmd_fit,
    'select': cmd_select,
    'oracle': cmd_oracle,
    'experiment': cmd_experiment,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='SBM inference for partially observed networks')
    parser.add_argument('command', choices=sorted(COMMANDS), help='Subcommand to run')
    parser.add_argument('--network', type=str, help='Input network file')
    parser.add_argument('--format', choices=FORMATS, default=TERNARY_CSV, help='Network file format')
    parser.add_argument('--default', choices=['NA', '0'], default='NA',
                        help='State of pairs missing from an edge list')
    parser.add_argument('--gamma', type=float, help='Threshold a weighted CSV with this gamma')
    parser.add_argument('--q', type=int, nargs='+', default=[3], help='Block count(s)')
    parser.add_argument('--method', choices=METHODS, default='mar', help='Inference method (fit)')
    parser.add_argument('--methods', dest='method_list', choices=METHODS, nargs='+',
                        help='Candidate methods (select)')
    parser.add_argument('--design', choices=sorted(DESIGN_TYPES), default='random-dyad',
                        help='Sampling design (sample, oracle)')
    parser.add_argument('--psi', type=float, nargs='+', help='Sampling design parameters')
    parser.add_argument('--restarts', type=int, help='Number of initializations')
    parser.add_argument('--seed', type=int, help='Random seed')
    parser.add_argument('--out', type=str, help='Output file')
    parser.add_argument('--imputed', type=str, help='Write observed entries and imputed missing dyads as CSV (fit)')
    parser.add_argument('--config', type=str, help='Experiment configuration (JSON)')
    parser.add_argument('--topology', choices=TOPOLOGIES, default='affiliation', help='Connectivity preset')
    parser.add_argument('--epsilon', type=float, default=0.05, help='Preset contrast parameter')
    parser.add_argument('--params', type=str, help='JSON file with alpha and pi (overrides the preset)')
    parser.add_argument('--n', type=int, default=100, help='Node count (simulate)')
    parser.add_argument('--labels', type=str, help='Block labels JSON (written by simulate, read by sample)')
    parser.add_argument('--verbose', action='store_true', help='Print per-iteration progress')
    parser.add_argument('--debug', action='store_true', help='Print per-step bounds')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings()
        return COMMANDS[args.command](args, settings)
    except DegeneracyError as e:
        print(f"❌ Numerical degeneracy: {e}")
        return e.exit_code
    except MissingSbmError as e:
        print(f"❌ Error: {e}")
        return e.exit_code
    except KeyError as e:
        print(f"❌ Invalid input: {e}")
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
