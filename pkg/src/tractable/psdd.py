"""Probabilistic SDDs: local distributions on the or-gate inputs of an SDD.

Parameters live on the *normalized* view of the SDD, where every node is read
relative to a vtree node: a decision at its own vtree node carries one
parameter per element, and a ``True`` node over a vtree leaf carries a
Bernoulli parameter for that leaf's variable. All other normalized nodes are
deterministic (their single feasible element has parameter 1).
"""

from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .ac import AcBuilder, ArithmeticCircuit, DiscreteVar, parse_number
from .core import FormatError
from .sdd import SddManager, SddNode, parse_sdd_nodes, serialize_sdd


def _truth(m: SddManager, f: SddNode, row: Mapping[int, bool], memo: dict[int, bool]) -> bool:
    if f.id in memo:
        return memo[f.id]
    if f.is_true or f.is_false:
        val = f.is_true
    elif not f.is_decision:
        val = row[abs(f.literal)] == (f.literal > 0)
    else:
        val = False
        for p, s in f.elements:
            if _truth(m, p, row, memo):
                val = _truth(m, s, row, memo)
                break
    memo[f.id] = val
    return val


def _split(m: SddManager, f: SddNode, w: int) -> tuple[str, int, int]:
    """How ``f`` reads at internal vtree node ``w``: own decision, or passed to one side."""
    l, r = m.vtree.internals[w]
    if f.is_true:
        return "top", l, r
    if f.vtree == w:
        return "decision", l, r
    if m.vtree.is_ancestor(l, f.vtree):
        return "left", l, r
    return "right", l, r


@dataclass(frozen=True)
class ParameterSlots:
    decisions: tuple[int, ...]
    bernoulli_vars: tuple[int, ...]


def parameter_slots(m: SddManager, root: SddNode) -> ParameterSlots:
    """Decision nodes and leaf variables that carry free parameters under ``root``."""
    decisions: set[int] = set()
    tops: set[int] = set()
    seen: set[tuple[int, int]] = set()
    stack = [(root, m.vtree.root)]
    while stack:
        f, w = stack.pop()
        if (f.id, w) in seen or f.is_false:
            continue
        seen.add((f.id, w))
        if w in m.vtree.leaves:
            if f.is_true:
                tops.add(m.vtree.leaves[w])
            continue
        how, l, r = _split(m, f, w)
        if how == "decision":
            decisions.add(f.id)
            for p, s in f.elements:
                if not s.is_false:
                    stack += [(p, l), (s, r)]
        elif how == "top":
            stack += [(f, l), (f, r)]
        elif how == "left":
            stack += [(f, l), (m.true, r)]
        else:
            stack += [(m.true, l), (f, r)]
    return ParameterSlots(tuple(sorted(decisions)), tuple(sorted(tops)))


@dataclass(frozen=True)
class Psdd:
    manager: SddManager
    root: SddNode
    theta: Mapping[int, tuple]
    bernoulli: Mapping[int, object]

    @property
    def var_count(self) -> int:
        return self.manager.var_count


def attach_params(m: SddManager, root: SddNode, theta: Mapping[int, Sequence], bernoulli: Mapping[int, object],
                  tol: float = 1e-9) -> Psdd:
    """Validate a parameterization of ``root`` and wrap it as a PSDD.

    ``theta`` maps SDD decision node ids to one parameter per element (in the
    node's element order); ``bernoulli`` maps variables to ``P(var = 1)``.
    """
    if root.is_false:
        raise ValueError("a PSDD needs a satisfiable base SDD")
    slots = parameter_slots(m, root)
    extra = set(theta) - set(slots.decisions)
    if extra:
        raise ValueError(f"parameters given for nodes {sorted(extra)} that carry none")
    extra = set(bernoulli) - set(slots.bernoulli_vars)
    if extra:
        raise ValueError(f"Bernoulli parameters given for variables {sorted(extra)} that carry none")
    fixed: dict[int, tuple] = {}
    for nid in slots.decisions:
        node = m.nodes[nid]
        if nid not in theta:
            raise ValueError(f"decision node {nid} has no parameters")
        ps = tuple(theta[nid])
        if len(ps) != len(node.elements):
            raise ValueError(f"decision node {nid} has {len(node.elements)} elements, got {len(ps)} parameters")
        if any(x < 0 for x in ps):
            raise ValueError(f"negative parameter at decision node {nid}")
        for (_, s), x in zip(node.elements, ps):
            if s.is_false and x != 0:
                raise ValueError(f"element with false sub at node {nid} must have parameter 0")
        total = sum(ps)
        ok = total == 1 if all(isinstance(x, (int, Fraction)) for x in ps) else abs(total - 1) <= tol
        if not ok:
            raise ValueError(f"parameters at decision node {nid} sum to {total}, not 1")
        fixed[nid] = ps
    bern: dict[int, object] = {}
    for var in slots.bernoulli_vars:
        if var not in bernoulli:
            raise ValueError(f"variable {var} needs a Bernoulli parameter")
        if not 0 <= bernoulli[var] <= 1:
            raise ValueError(f"Bernoulli parameter of variable {var} is outside [0, 1]")
        bern[var] = bernoulli[var]
    return Psdd(m, root, fixed, bern)


def random_params(m: SddManager, root: SddNode, rng: random.Random) -> tuple[dict[int, tuple], dict[int, float]]:
    """Dirichlet(1) parameters on feasible elements and uniform Bernoulli parameters."""
    slots = parameter_slots(m, root)
    theta = {}
    for nid in slots.decisions:
        draws = [0.0 if s.is_false else rng.gammavariate(1.0, 1.0) + 1e-12 for _, s in m.nodes[nid].elements]
        total = sum(draws)
        theta[nid] = tuple(x / total for x in draws)
    bern = {v: rng.random() for v in slots.bernoulli_vars}
    return theta, bern


def psdd_evaluate(p: Psdd, row: Mapping[int, bool]):
    """Probability of a complete instantiation (variable -> bool)."""
    m = p.manager
    missing = [v for v in m.vtree.variables if v not in row]
    if missing:
        raise ValueError(f"incomplete instantiation, unbound variables {sorted(missing)}")
    truth: dict[int, bool] = {}
    if not _truth(m, p.root, row, truth):
        return 0
    memo: dict[tuple[int, int], object] = {}

    def val(f: SddNode, w: int):
        key = (f.id, w)
        if key in memo:
            return memo[key]
        if f.is_false:
            out = 0
        elif w in m.vtree.leaves:
            var = m.vtree.leaves[w]
            if f.is_true:
                out = p.bernoulli[var] if row[var] else 1 - p.bernoulli[var]
            else:
                out = 1 if row[var] == (f.literal > 0) else 0
        else:
            how, l, r = _split(m, f, w)
            if how == "decision":
                out = 0
                for (prime, sub), th in zip(f.elements, p.theta[f.id]):
                    if _truth(m, prime, row, truth):
                        out = th * val(prime, l) * val(sub, r)
                        break
            elif how == "top":
                out = val(f, l) * val(f, r)
            elif how == "left":
                out = val(f, l) * val(m.true, r)
            else:
                out = val(m.true, l) * val(f, r)
        memo[key] = out
        return out

    return val(p.root, m.vtree.root)


def psdd_variables(m: SddManager, names: Mapping[int, str] | None = None) -> list[DiscreteVar]:
    names = names or {}
    return [DiscreteVar(names.get(v, str(v)), ("0", "1")) for v in range(1, m.var_count + 1)]


def psdd_to_ac(p: Psdd, names: Mapping[int, str] | None = None) -> ArithmeticCircuit:
    """Arithmetic circuit over binary variables (value labels ``0``/``1``)."""
    m = p.manager
    variables = psdd_variables(m, names)
    b = AcBuilder(variables)
    vname = {v: variables[v - 1].name for v in range(1, m.var_count + 1)}
    memo: dict[tuple[int, int], int] = {}

    # iterative post-order over (node, vtree) pairs
    stack = [((p.root, m.vtree.root), False)]
    while stack:
        (f, w), ready = stack.pop()
        key = (f.id, w)
        if key in memo:
            continue
        if f.is_false:
            memo[key] = b.const(0)
            continue
        if w in m.vtree.leaves:
            var = m.vtree.leaves[w]
            if f.is_true:
                th = p.bernoulli[var]
                memo[key] = b.add([
                    b.mul([b.const(th), b.indicator(vname[var], 1)]),
                    b.mul([b.const(1 - th), b.indicator(vname[var], 0)]),
                ])
            else:
                memo[key] = b.indicator(vname[var], 1 if f.literal > 0 else 0)
            continue
        how, l, r = _split(m, f, w)
        if how == "decision":
            kids = [(pr, l) for pr, s in f.elements if not s.is_false] + [(s, r) for _, s in f.elements if not s.is_false]
        elif how == "top":
            kids = [(f, l), (f, r)]
        elif how == "left":
            kids = [(f, l), (m.true, r)]
        else:
            kids = [(m.true, l), (f, r)]
        if not ready:
            stack.append(((f, w), True))
            stack += [(k, False) for k in kids if (k[0].id, k[1]) not in memo]
            continue
        if how == "decision":
            terms = []
            for (pr, s), th in zip(f.elements, p.theta[f.id]):
                if s.is_false:
                    continue
                terms.append(b.mul([b.const(th), memo[(pr.id, l)], memo[(s.id, r)]]))
            memo[key] = b.add(terms)
        else:
            memo[key] = b.mul([memo[(k.id, u)] for k, u in kids])
    return b.build(memo[(p.root.id, m.vtree.root)])


# ---------------------------------------------------------------------------
# Data and learning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    var_count: int
    rows: tuple[tuple[int, ...], ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.rows) != len(self.counts):
            raise ValueError("one count per row")
        for row in self.rows:
            if len(row) != self.var_count or any(x not in (0, 1) for x in row):
                raise ValueError(f"row {row} is not a 0/1 vector of length {self.var_count}")
        if any(c < 0 for c in self.counts):
            raise ValueError("counts must be non-negative")

    def assignments(self):
        for row, c in zip(self.rows, self.counts):
            yield {v + 1: bool(x) for v, x in enumerate(row)}, c


def parse_dataset(text: str, var_count: int, names: Mapping[int, str] | None = None) -> Dataset:
    """CSV of 0/1 columns, one per variable, with an optional trailing ``count`` column.

    A header row is optional; when present its columns may be variable names
    (or indices) in any order plus ``count``.
    """
    reader = [row for row in csv.reader(io.StringIO(text)) if row and any(c.strip() for c in row)]
    if not reader:
        raise FormatError("empty dataset")
    lookup = {str(v): v for v in range(1, var_count + 1)}
    lookup.update({name: v for v, name in (names or {}).items()})
    header = [c.strip() for c in reader[0]]
    if all(c in ("0", "1") or c.isdigit() for c in header) and "count" not in header and not names:
        columns = list(range(1, var_count + 1)) + (["count"] if len(header) == var_count + 1 else [])
        body = reader
    elif all(c.lstrip("-").isdigit() for c in header):
        columns = list(range(1, var_count + 1)) + (["count"] if len(header) == var_count + 1 else [])
        body = reader
    else:
        columns = []
        for c in header:
            if c == "count":
                columns.append("count")
            elif c in lookup:
                columns.append(lookup[c])
            else:
                raise FormatError(f"unknown column {c!r}")
        body = reader[1:]
    if sorted(c for c in columns if c != "count") != list(range(1, var_count + 1)):
        raise FormatError("dataset columns must cover every variable exactly once")
    rows, counts = [], []
    for lineno, rec in enumerate(body, 2 if body is not reader else 1):
        if len(rec) != len(columns):
            raise FormatError(f"row {lineno}: expected {len(columns)} fields")
        vals = [0] * var_count
        count = 1
        for col, cell in zip(columns, rec):
            cell = cell.strip()
            if col == "count":
                if not cell.isdigit():
                    raise FormatError(f"row {lineno}: bad count {cell!r}")
                count = int(cell)
            else:
                if cell not in ("0", "1"):
                    raise FormatError(f"row {lineno}: value {cell!r} is not 0/1")
                vals[col - 1] = int(cell)
        rows.append(tuple(vals))
        counts.append(count)
    return Dataset(var_count, tuple(rows), tuple(counts))


@dataclass(frozen=True)
class LearnResult:
    psdd: Psdd
    rejected: int
    node_counts: Mapping[int, tuple[int, ...]]
    bernoulli_counts: Mapping[int, tuple[int, int]]


def learn_ml_complete(m: SddManager, root: SddNode, data: Dataset, alpha=0, exact: bool = False) -> LearnResult:
    """Closed-form maximum-likelihood parameters from complete data.

    Each parameter is the number of rows routed through its element divided by
    the rows routed through its node; nodes that no row reaches get the uniform
    distribution over their feasible elements. ``alpha`` adds pseudo-counts.
    Rows the base SDD rejects are counted and skipped.
    """
    if data.var_count != m.var_count:
        raise ValueError(f"dataset has {data.var_count} variables, SDD has {m.var_count}")
    if root.is_false:
        raise ValueError("a PSDD needs a satisfiable base SDD")
    slots = parameter_slots(m, root)
    counts = {nid: [0] * len(m.nodes[nid].elements) for nid in slots.decisions}
    bern = {v: [0, 0] for v in slots.bernoulli_vars}
    rejected = used = 0
    for row, c in data.assignments():
        truth: dict[int, bool] = {}
        if not _truth(m, root, row, truth):
            rejected += c
            continue
        used += c
        stack = [(root, m.vtree.root)]
        while stack:
            f, w = stack.pop()
            if w in m.vtree.leaves:
                if f.is_true:
                    bern[m.vtree.leaves[w]][int(row[m.vtree.leaves[w]])] += c
                continue
            how, l, r = _split(m, f, w)
            if how == "decision":
                for i, (prime, sub) in enumerate(f.elements):
                    if _truth(m, prime, row, truth):
                        counts[f.id][i] += c
                        stack += [(prime, l), (sub, r)]
                        break
            elif how == "top":
                stack += [(f, l), (f, r)]
            elif how == "left":
                stack += [(f, l), (m.true, r)]
            else:
                stack += [(m.true, l), (f, r)]
    if used == 0:
        raise ValueError("no usable rows: dataset is empty or every row violates the SDD")

    def ratio(a, b):
        return Fraction(a) / Fraction(b) if exact else a / b

    theta = {}
    for nid, ns in counts.items():
        feasible = [not s.is_false for _, s in m.nodes[nid].elements]
        k = sum(feasible)
        total = sum(ns) + alpha * k
        if total == 0:
            theta[nid] = tuple(ratio(1, k) if ok else ratio(0, 1) for ok in feasible)
        else:
            theta[nid] = tuple(ratio(n + alpha, total) if ok else ratio(0, 1) for n, ok in zip(ns, feasible))
    bernoulli = {}
    for v, (n0, n1) in bern.items():
        total = n0 + n1 + 2 * alpha
        bernoulli[v] = ratio(1, 2) if total == 0 else ratio(n1 + alpha, total)
    psdd = attach_params(m, root, theta, bernoulli)
    return LearnResult(psdd, rejected, {k: tuple(v) for k, v in counts.items()}, {k: tuple(v) for k, v in bern.items()})


def log_likelihood(p: Psdd, data: Dataset) -> float:
    total = 0.0
    for row, c in data.assignments():
        if c == 0:
            continue
        prob = psdd_evaluate(p, row)
        if prob == 0:
            return -math.inf
        total += c * math.log(prob)
    return total


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------


def _num(x) -> str:
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return repr(x)


def serialize_psdd(p: Psdd) -> str:
    m = p.manager
    text = serialize_sdd(m, p.root)
    ids = {n.id: i for i, n in enumerate(m.descendants(p.root))}
    lines = [text.rstrip("\n")]
    for nid in sorted(p.theta, key=ids.__getitem__):
        lines.append(" ".join(["P", str(ids[nid]), *map(_num, p.theta[nid])]))
    for var in sorted(p.bernoulli):
        lines.append(f"B {m.vtree.leaf_of(var)} {_num(p.bernoulli[var])}")
    return "\n".join(lines) + "\n"


def parse_psdd(text: str, m: SddManager, exact: bool = False) -> Psdd:
    root, built, orders, extra = parse_sdd_nodes(text, m, extra=("P", "B"))
    theta: dict[int, tuple] = {}
    bern: dict[int, object] = {}
    for lineno, toks in extra:
        try:
            ident = int(toks[1])
        except (IndexError, ValueError):
            raise FormatError(f"line {lineno}: bad parameter line") from None
        values = [parse_number(t, exact) for t in toks[2:]]
        if toks[0] == "P":
            if ident not in orders:
                raise FormatError(f"line {lineno}: node {ident} is not a decision node")
            node = built[ident]
            if not node.is_decision or len(values) != len(orders[ident]):
                raise FormatError(f"line {lineno}: parameter count does not match node {ident}")
            by_pair = dict(zip(orders[ident], values))
            try:
                theta[node.id] = tuple(by_pair[(pr.id, s.id)] for pr, s in node.elements)
            except KeyError:
                raise FormatError(f"line {lineno}: node {ident} is not in canonical form") from None
        else:
            if ident not in m.vtree.leaves or len(values) != 1:
                raise FormatError(f"line {lineno}: bad Bernoulli line")
            bern[m.vtree.leaves[ident]] = values[0]
    try:
        return attach_params(m, root, theta, bern)
    except ValueError as exc:
        raise FormatError(str(exc)) from None
