#!/usr/bin/env python3
"""
Network Input/Output
Reads and writes partially observed networks as ternary CSV matrices
({0, 1, NA}) or edge lists ("i j s"), and turns confidence-weighted
networks into ternary ones with the gamma threshold rule.
"""

import csv
import re
from typing import Dict, List, Optional, Tuple

import numpy as np

from sbm_core import ABSENT, MISSING, PRESENT, ObservedNetwork
from sbm_errors import InputError

TERNARY_CSV = 'ternary-csv'
EDGE_LIST = 'edge-list'
FORMATS = (TERNARY_CSV, EDGE_LIST)

NA_TOKEN = 'NA'
TOKEN_STATES = {'0': ABSENT, '1': PRESENT, NA_TOKEN: MISSING}
STATE_TOKENS = {ABSENT: '0', PRESENT: '1', MISSING: NA_TOKEN}


def parse_state(token: str) -> int:
    """'0', '1' or 'NA' (any case) to a dyad state"""
    key = token.strip().upper()
    if key in ('0.0', '1.0'):
        key = key[0]
    try:
        return TOKEN_STATES[key]
    except KeyError:
        raise InputError(f"invalid dyad state '{token}', expected 0, 1 or NA")


def _read_rows(path: str) -> List[List[str]]:
    try:
        with open(path, 'r', newline='') as f:
            return [row for row in csv.reader(f) if row and any(cell.strip() for cell in row)]
    except FileNotFoundError:
        raise InputError(f"network file not found: {path}")


def load_ternary_csv(path: str) -> ObservedNetwork:
    rows = _read_rows(path)
    n = len(rows)
    if n == 0:
        raise InputError(f"{path} holds no rows")
    states = np.zeros((n, n), dtype=np.int8)
    for i, row in enumerate(rows):
        if len(row) != n:
            raise InputError(f"ragged matrix: row {i} has {len(row)} entries, expected {n}")
        for j, token in enumerate(row):
            if i != j:
                states[i, j] = parse_state(token)
    conflicts = np.argwhere(np.triu(states != states.T, k=1))
    if conflicts.size:
        i, j = conflicts[0]
        raise InputError(f"conflicting entries at ({i}, {j}) and ({j}, {i})")
    return ObservedNetwork(states)


def load_edge_list(path: str, n: Optional[int] = None, default: str = NA_TOKEN) -> ObservedNetwork:
    """
    Lines "i j s" (0-based nodes, whitespace or comma separated, '#' comments).
    Pairs not listed take the `default` state; n defaults to the largest index + 1.
    """
    default_state = parse_state(default)
    dyads: Dict[Tuple[int, int], int] = {}
    try:
        with open(path, 'r') as f:
            lines = f.readlines()
    except FileNotFoundError:
        raise InputError(f"network file not found: {path}")

    largest = -1
    for line_no, line in enumerate(lines, start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        parts = [p for p in re.split(r'[,\s]+', line) if p]
        if len(parts) != 3:
            raise InputError(f"line {line_no}: expected 'i j s', got {line!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise InputError(f"line {line_no}: node indices must be integers")
        if i < 0 or j < 0 or (n is not None and max(i, j) >= n):
            raise InputError(f"line {line_no}: node index out of range")
        if i == j:
            raise InputError(f"line {line_no}: self-dyad ({i}, {j})")
        key = (min(i, j), max(i, j))
        state = parse_state(parts[2])
        if dyads.get(key, state) != state:
            raise InputError(f"line {line_no}: conflicting states for dyad {key}")
        dyads[key] = state
        largest = max(largest, i, j)

    size = n if n is not None else largest + 1
    if size < 1:
        raise InputError(f"{path} lists no dyad and no node count was given")
    return ObservedNetwork.from_dyads(size, dyads, default=default_state)


def load_network(path: str, format: str = TERNARY_CSV, default: str = NA_TOKEN,
                 n: Optional[int] = None) -> ObservedNetwork:
    if format == TERNARY_CSV:
        return load_ternary_csv(path)
    if format == EDGE_LIST:
        return load_edge_list(path, n=n, default=default)
    raise InputError(f"unknown network format '{format}', expected one of {FORMATS}")


def save_network(net: ObservedNetwork, path: str, format: str = TERNARY_CSV):
    """Write every dyad explicitly, so loading back needs no default or node count"""
    if format == TERNARY_CSV:
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            for i in range(net.n):
                writer.writerow(['0' if i == j else STATE_TOKENS[int(s)]
                                 for j, s in enumerate(net.states[i])])
    elif format == EDGE_LIST:
        with open(path, 'w') as f:
            for i, j, state in net.iter_dyads():
                f.write(f"{i} {j} {STATE_TOKENS[state]}\n")
    else:
        raise InputError(f"unknown network format '{format}', expected one of {FORMATS}")


def save_imputed(matrix: np.ndarray, path: str):
    """Write a filled n x n matrix (observed entries and imputed probabilities) as plain CSV"""
    matrix = np.asarray(matrix, dtype=float)
    try:
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            for row in matrix:
                writer.writerow([repr(float(v)) for v in row])
    except OSError as e:
        raise InputError(f"cannot write {path}: {e}")


def load_weighted_csv(path: str) -> np.ndarray:
    """Confidence matrix; empty cells and NA are returned as NaN (absent weights)"""
    rows = _read_rows(path)
    n = len(rows)
    weights = np.full((n, n), np.nan)
    for i, row in enumerate(rows):
        if len(row) != n:
            raise InputError(f"ragged matrix: row {i} has {len(row)} entries, expected {n}")
        for j, token in enumerate(row):
            token = token.strip()
            if token and token.upper() != NA_TOKEN:
                try:
                    weights[i, j] = float(token)
                except ValueError:
                    raise InputError(f"invalid weight '{token}' at ({i}, {j})")
    return weights


def threshold_weighted(weights, gamma: float) -> ObservedNetwork:
    """
    Present if w > 1 - gamma, Missing if gamma <= w <= 1 - gamma, Absent if w < gamma.
    Absent (NaN) weights count as 0.
    """
    if not 0 < gamma < 0.5:
        raise InputError(f"gamma must lie in (0, 0.5), got {gamma}")
    weights = np.nan_to_num(np.asarray(weights, dtype=float), nan=0.0)
    if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
        raise InputError("weight matrix must be square")
    if not np.allclose(weights, weights.T):
        raise InputError("weight matrix must be symmetric")
    if np.any(weights < 0) or np.any(weights > 1):
        raise InputError("weights must lie in [0, 1]")
    states = np.where(weights > 1 - gamma, PRESENT,
                      np.where(weights < gamma, ABSENT, MISSING)).astype(np.int8)
    return ObservedNetwork(states)
