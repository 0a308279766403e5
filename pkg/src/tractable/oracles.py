"""Brute-force reference implementations.

Everything here enumerates complete assignments directly and uses no circuit
properties, so it serves as ground truth for the linear-time algorithms.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ac import DiscreteVar, Factor
from .bn import BayesNet, joint_factor
from .core import CnfFormula, NnfCircuit, assignment_rows, row_assignment, truth_table

CAP = 20


def cnf_table(f: CnfFormula, cap: int = CAP) -> np.ndarray:
    """Truth value of ``f`` under every complete assignment, lexicographic order."""
    n = f.var_count
    if n > cap:
        raise ValueError(f"{n} variables exceed enumeration cap {cap}")
    rows = assignment_rows(n)
    out = np.ones(rows.shape[0], dtype=bool)
    for clause in f.clauses:
        sat = np.zeros(rows.shape[0], dtype=bool)
        for lit in clause:
            col = rows[:, abs(lit) - 1]
            sat |= col if lit > 0 else ~col
        out &= sat
    return out


def _evidence_mask(n: int, evidence: Mapping[int, bool]) -> np.ndarray:
    rows = assignment_rows(n)
    mask = np.ones(rows.shape[0], dtype=bool)
    for v, val in evidence.items():
        mask &= rows[:, v - 1] == val
    return mask


def _weights_vector(n: int, weights: Mapping[int, object], exact: bool) -> np.ndarray:
    rows = assignment_rows(n)
    dtype = object if exact else np.float64
    out = np.ones(rows.shape[0], dtype=dtype)
    for v in range(1, n + 1):
        pos = Fraction(weights[v]) if exact else float(weights[v])
        neg = Fraction(weights[-v]) if exact else float(weights[-v])
        out = out * np.where(rows[:, v - 1], pos, neg).astype(dtype)
    return out


def _table(source: CnfFormula | NnfCircuit, cap: int) -> np.ndarray:
    return cnf_table(source, cap) if isinstance(source, CnfFormula) else truth_table(source, cap)


def count(source: CnfFormula | NnfCircuit, evidence: Mapping[int, bool] | None = None, cap: int = CAP) -> int:
    table = _table(source, cap)
    return int(np.count_nonzero(table & _evidence_mask(source.var_count, evidence or {})))


def weighted_count(source: CnfFormula | NnfCircuit, weights: Mapping[int, object],
                   evidence: Mapping[int, bool] | None = None, exact: bool = False, cap: int = CAP):
    table = _table(source, cap) & _evidence_mask(source.var_count, evidence or {})
    w = _weights_vector(source.var_count, weights, exact)
    picked = w[table]
    return sum(picked.tolist(), Fraction(0) if exact else 0.0)


def models(source: CnfFormula | NnfCircuit, cap: int = CAP) -> list[dict[int, bool]]:
    table = _table(source, cap)
    return [row_assignment(source.var_count, int(i)) for i in np.flatnonzero(table)]


def e_majsat(source: CnfFormula | NnfCircuit, x: Iterable[int], weights: Mapping[int, object] | None = None,
             exact: bool = False, cap: int = CAP) -> tuple[object, list[dict[int, bool]]]:
    """Outer loop over the ``2**|x|`` instantiations of ``x``, inner weighted count.

    Returns the maximum and every maximizing instantiation of ``x``.
    """
    x = sorted(set(x))
    n = source.var_count
    if weights is None:
        weights = {lit: 1 for v in range(1, n + 1) for lit in (v, -v)}
    table = _table(source, cap)
    w = _weights_vector(n, weights, exact)
    rows = assignment_rows(n)
    best = None
    argmax: list[dict[int, bool]] = []
    for bits in itertools.product((False, True), repeat=len(x)):
        mask = table.copy()
        for v, b in zip(x, bits):
            mask &= rows[:, v - 1] == b
        # the X part of the weight is a constant factor of the inner sum
        value = sum(w[mask].tolist(), Fraction(0) if exact else 0.0)
        inst = dict(zip(x, bits))
        if best is None or value > best:
            best, argmax = value, [inst]
        elif value == best:
            argmax.append(inst)
    return best, argmax


def x_instantiation_value(source: CnfFormula | NnfCircuit, inst: Mapping[int, bool],
                          weights: Mapping[int, object] | None = None, exact: bool = False, cap: int = CAP):
    n = source.var_count
    if weights is None:
        weights = {lit: 1 for v in range(1, n + 1) for lit in (v, -v)}
    return weighted_count(source, weights, inst, exact, cap)


# ---------------------------------------------------------------------------
# Factors and networks
# ---------------------------------------------------------------------------


def compatible(variables: Sequence[DiscreteVar], row: Sequence[int], evidence: Mapping[str, int]) -> bool:
    return all(evidence.get(v.name, x) == x for v, x in zip(variables, row))


def factor_marginal(f: Factor, evidence: Mapping[str, int] | None = None):
    return f.sum_compatible(evidence or {})


def factor_argmax(f: Factor, evidence: Mapping[str, int] | None = None) -> tuple[object, list[dict[str, int]]]:
    """Maximum compatible value and every row attaining it."""
    evidence = evidence or {}
    best = None
    rows: list[dict[str, int]] = []
    for row, val in f.rows():
        if not compatible(f.vars, row, evidence):
            continue
        inst = {v.name: x for v, x in zip(f.vars, row)}
        if best is None or val > best:
            best, rows = val, [inst]
        elif val == best:
            rows.append(inst)
    return best, rows


def bn_evidence_prob(bn: BayesNet, evidence: Mapping[str, int], exact: bool = False):
    return joint_factor(bn, exact).sum_compatible(evidence)


def bn_marginals(bn: BayesNet, evidence: Mapping[str, int] | None = None,
                 exact: bool = False) -> dict[tuple[str, int], object]:
    """``P(evidence, X=x)`` for every variable and value; zero when ``x`` contradicts evidence."""
    evidence = evidence or {}
    joint = joint_factor(bn, exact)
    out = {}
    for v in bn.vars:
        for x in range(v.k):
            if evidence.get(v.name, x) != x:
                out[(v.name, x)] = joint.values[0] * 0
            else:
                out[(v.name, x)] = joint.sum_compatible({**evidence, v.name: x})
    return out


def bn_mpe(bn: BayesNet, evidence: Mapping[str, int] | None = None, exact: bool = False):
    return factor_argmax(joint_factor(bn, exact), evidence)


def bn_soft(bn: BayesNet, likelihoods: Mapping[str, Sequence], evidence: Mapping[str, int] | None = None,
            exact: bool = False):
    """``sum_x P(x) L(x) [x ~ e] / sum_x P(x) L(x)`` by enumeration."""
    evidence = evidence or {}
    joint = joint_factor(bn, exact)
    num = den = joint.values[0] * 0
    for row, val in joint.rows():
        w = val
        for v, x in zip(joint.vars, row):
            if v.name in likelihoods:
                w = w * likelihoods[v.name][x]
        den = den + w
        if compatible(joint.vars, row, evidence):
            num = num + w
    return num / den


# ---------------------------------------------------------------------------
# PSDDs
# ---------------------------------------------------------------------------


def psdd_table(p, cap: int = CAP) -> list:
    """``psdd_evaluate`` at every complete assignment, lexicographic order."""
    from .psdd import psdd_evaluate

    n = p.manager.var_count
    if n > cap:
        raise ValueError(f"{n} variables exceed enumeration cap {cap}")
    return [psdd_evaluate(p, row_assignment(n, i)) for i in range(1 << n)]


def psdd_routed_counts(p, data) -> tuple[dict[int, list], dict[int, list]]:
    """Rows passing through each element and each free-variable leaf, found by probing.

    A row passes through an element exactly when its probability is linear in that
    element's parameter, so doubling the parameter changes the value. ``p`` must
    have strictly positive parameters on feasible elements and Bernoullis in (0, 1).
    """
    from .psdd import Psdd, psdd_evaluate

    rows = list(data.assignments())
    base = [psdd_evaluate(p, row) for row, _ in rows]
    nodes: dict[int, list] = {}
    for nid, ps in p.theta.items():
        out = []
        for i in range(len(ps)):
            bumped = dict(p.theta)
            bumped[nid] = ps[:i] + (ps[i] * 2,) + ps[i + 1:]
            q = Psdd(p.manager, p.root, bumped, p.bernoulli)
            out.append(sum(c for (row, c), b in zip(rows, base) if b != 0 and psdd_evaluate(q, row) != b))
        nodes[nid] = out
    leaves: dict[int, list] = {}
    for var, th in p.bernoulli.items():
        q = Psdd(p.manager, p.root, p.theta, {**p.bernoulli, var: th / 2})
        counts = [0, 0]
        for (row, c), b in zip(rows, base):
            if b != 0 and psdd_evaluate(q, row) != b:
                counts[int(row[var])] += c
        leaves[var] = counts
    return nodes, leaves
