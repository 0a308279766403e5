"""Factors, arithmetic circuits and maximizer circuits.

An arithmetic circuit has indicator leaves ``λ[X=x]``, constant leaves (numbers or
named symbols awaiting a value) and add/multiply/max gates. Its reference point
is the factor obtained by evaluating it at every complete instantiation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .analysis import PropertyReport
from .core import FormatError, PropertyError

ROW_CAP = 1 << 20


# ---------------------------------------------------------------------------
# Variables, instantiations, factors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteVar:
    name: str
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) < 2:
            raise ValueError(f"variable {self.name} needs at least two values")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"variable {self.name} has repeated value labels")
        if not self.name or any(ch.isspace() for ch in self.name + "".join(self.labels)):
            raise ValueError("names and labels must be non-empty and free of whitespace")

    @property
    def k(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"{self.name} has no value {label!r}") from None


def binary(name: str, labels: Sequence[str] | None = None) -> DiscreteVar:
    return DiscreteVar(name, tuple(labels or ("0", "1")))


Instantiation = Mapping[str, int]


def parse_instantiation(text: str, variables: Sequence[DiscreteVar]) -> dict[str, int]:
    """Parse ``"A=a,B=~b"`` into variable name -> value index."""
    by_name = {v.name: v for v in variables}
    out: dict[str, int] = {}
    for part in filter(None, (p.strip() for p in (text or "").split(","))):
        name, sep, label = part.partition("=")
        name, label = name.strip(), label.strip()
        if not sep or name not in by_name:
            raise ValueError(f"bad instantiation item {part!r}")
        if name in out:
            raise ValueError(f"variable {name} bound twice")
        out[name] = by_name[name].index(label)
    return out


def format_instantiation(inst: Instantiation, variables: Sequence[DiscreteVar]) -> str:
    return ",".join(f"{v.name}={v.labels[inst[v.name]]}" for v in variables if v.name in inst)


def _rows(variables: Sequence[DiscreteVar]) -> Iterable[tuple[int, ...]]:
    return itertools.product(*(range(v.k) for v in variables))


def _row_count(variables: Sequence[DiscreteVar]) -> int:
    return math.prod(v.k for v in variables)


def _check_cap(variables: Sequence[DiscreteVar], cap: int) -> None:
    n = _row_count(variables)
    if n > cap:
        raise ValueError(f"{n} instantiations exceed row cap {cap}")


@dataclass(frozen=True)
class Factor:
    """Values listed in lexicographic row order, first variable slowest."""

    vars: tuple[DiscreteVar, ...]
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(self.vars))
        object.__setattr__(self, "values", tuple(self.values))
        if len({v.name for v in self.vars}) != len(self.vars):
            raise ValueError("factor variables must be distinct")
        if len(self.values) != _row_count(self.vars):
            raise ValueError(f"factor needs {_row_count(self.vars)} values, got {len(self.values)}")
        if any(x < 0 for x in self.values):
            raise ValueError("factor values must be non-negative")

    @classmethod
    def from_function(cls, variables: Sequence[DiscreteVar], fn) -> "Factor":
        return cls(tuple(variables), tuple(fn(row) for row in _rows(variables)))

    def rows(self) -> Iterable[tuple[tuple[int, ...], object]]:
        return zip(_rows(self.vars), self.values)

    def _offset(self, row: Sequence[int]) -> int:
        idx = 0
        for v, x in zip(self.vars, row):
            idx = idx * v.k + x
        return idx

    def __getitem__(self, row: Sequence[int]):
        return self.values[self._offset(row)]

    def value_of(self, inst: Instantiation):
        return self[[inst[v.name] for v in self.vars]]

    def sum_compatible(self, evidence: Instantiation):
        total = self.values[0] * 0
        for row, val in self.rows():
            if all(evidence.get(v.name, x) == x for v, x in zip(self.vars, row)):
                total = total + val
        return total

    def max_compatible(self, evidence: Instantiation) -> tuple[object, tuple[int, ...]]:
        best = None
        for row, val in self.rows():
            if all(evidence.get(v.name, x) == x for v, x in zip(self.vars, row)):
                if best is None or val > best[0]:
                    best = (val, row)
        if best is None:
            raise ValueError("no row is compatible with the evidence")
        return best

    def product(self, other: "Factor") -> "Factor":
        merged = list(self.vars)
        for v in other.vars:
            same = [u for u in merged if u.name == v.name]
            if same and same[0] != v:
                raise ValueError(f"variable {v.name} declared with different values")
            if not same:
                merged.append(v)
        pos = {v.name: i for i, v in enumerate(merged)}

        def value(row):
            a = self[[row[pos[v.name]] for v in self.vars]]
            b = other[[row[pos[v.name]] for v in other.vars]]
            return a * b

        return Factor.from_function(merged, value)


# ---------------------------------------------------------------------------
# Circuits
# ---------------------------------------------------------------------------

IND, CONST, ADD, MUL, MAX = "l", "c", "+", "*", "m"
SUMLIKE = (ADD, MAX)


@dataclass(frozen=True)
class AcNode:
    kind: str
    var: str = ""
    value: int = 0
    const: object = None
    symbol: str = ""
    children: tuple[int, ...] = ()


@dataclass(frozen=True)
class ArithmeticCircuit:
    """Node arena in topological order, root last. Max gates make it a maximizer circuit."""

    vars: tuple[DiscreteVar, ...]
    nodes: tuple[AcNode, ...]

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("circuit needs at least one node")
        by_name = {v.name: v for v in self.vars}
        if len(by_name) != len(self.vars):
            raise ValueError("duplicate variable names")
        for i, n in enumerate(self.nodes):
            if n.kind == IND:
                if n.var not in by_name or not 0 <= n.value < by_name[n.var].k:
                    raise ValueError(f"node {i}: invalid indicator {n.var}={n.value}")
            elif n.kind == CONST:
                if not n.symbol and (n.const is None or n.const < 0):
                    raise ValueError(f"node {i}: constants must be non-negative numbers")
            elif n.kind in (ADD, MUL, MAX):
                if any(not 0 <= ch < i for ch in n.children):
                    raise ValueError(f"node {i}: child is not an earlier node")
            else:
                raise ValueError(f"node {i}: unknown kind {n.kind!r}")

    @property
    def root(self) -> int:
        return len(self.nodes) - 1

    @property
    def edge_count(self) -> int:
        return sum(len(n.children) for n in self.nodes)

    @property
    def is_maximizer(self) -> bool:
        return any(n.kind == MAX for n in self.nodes)

    @cached_property
    def var_map(self) -> dict[str, DiscreteVar]:
        return {v.name: v for v in self.vars}

    @cached_property
    def node_vars(self) -> tuple[frozenset[str], ...]:
        out: list[frozenset[str]] = []
        for n in self.nodes:
            if n.kind == IND:
                out.append(frozenset((n.var,)))
            else:
                out.append(frozenset().union(*(out[c] for c in n.children)))
        return tuple(out)

    @cached_property
    def symbols(self) -> frozenset[str]:
        return frozenset(n.symbol for n in self.nodes if n.kind == CONST and n.symbol)


class AcBuilder:
    def __init__(self, variables: Sequence[DiscreteVar]):
        self.vars = tuple(variables)
        self.var_map = {v.name: v for v in self.vars}
        self.nodes: list[AcNode] = []
        self._index: dict[tuple, int] = {}

    def add_node(self, node: AcNode) -> int:
        # constants are keyed by type too so 1 and 1.0 stay distinct
        key = (node.kind, node.var, node.value, type(node.const).__name__, node.const, node.symbol, node.children)
        found = self._index.get(key)
        if found is not None:
            return found
        self.nodes.append(node)
        self._index[key] = len(self.nodes) - 1
        return len(self.nodes) - 1

    def indicator(self, var: str, value) -> int:
        if isinstance(value, str):
            value = self.var_map[var].index(value)
        return self.add_node(AcNode(IND, var=var, value=value))

    def const(self, x) -> int:
        return self.add_node(AcNode(CONST, const=x))

    def symbol(self, name: str) -> int:
        return self.add_node(AcNode(CONST, symbol=name))

    def add(self, children: Sequence[int]) -> int:
        return self.add_node(AcNode(ADD, children=tuple(children)))

    def mul(self, children: Sequence[int]) -> int:
        return self.add_node(AcNode(MUL, children=tuple(children)))

    def max(self, children: Sequence[int]) -> int:
        return self.add_node(AcNode(MAX, children=tuple(children)))

    def copy(self, ac: ArithmeticCircuit, kind_map: Mapping[str, str] | None = None) -> int:
        """Import all nodes of ``ac``; returns the id of its root here."""
        kind_map = kind_map or {}
        new: list[int] = []
        for n in ac.nodes:
            kids = tuple(new[c] for c in n.children)
            new.append(self.add_node(AcNode(kind_map.get(n.kind, n.kind), n.var, n.value, n.const, n.symbol, kids)))
        return new[-1]

    def build(self, root: int | None = None) -> ArithmeticCircuit:
        if root is None:
            root = len(self.nodes) - 1
        keep = {root}
        for i in range(root, -1, -1):
            if i in keep:
                keep.update(self.nodes[i].children)
        order = sorted(keep)
        remap = {old: new for new, old in enumerate(order)}
        nodes = []
        for old in order:
            n = self.nodes[old]
            nodes.append(AcNode(n.kind, n.var, n.value, n.const, n.symbol, tuple(remap[c] for c in n.children)))
        return ArithmeticCircuit(self.vars, tuple(nodes))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

IndicatorSetting = Mapping[tuple[str, int], object]


def indicator_setting(ac: ArithmeticCircuit, inst: Instantiation | None = None,
                      likelihoods: Mapping[str, Sequence] | None = None) -> dict[tuple[str, int], object]:
    """Indicator values: the likelihood (default 1) if compatible with ``inst``, else 0."""
    inst = inst or {}
    likelihoods = likelihoods or {}
    for name in list(inst) + list(likelihoods):
        if name not in ac.var_map:
            raise ValueError(f"unknown variable {name!r}")
    out = {}
    for v in ac.vars:
        lik = likelihoods.get(v.name)
        if lik is not None and len(lik) != v.k:
            raise ValueError(f"{v.name} needs {v.k} likelihoods")
        for x in range(v.k):
            base = lik[x] if lik is not None else 1
            out[(v.name, x)] = base if inst.get(v.name, x) == x else base * 0
    return out


def _const_value(n: AcNode, symbols: Mapping[str, object] | None):
    if n.symbol:
        if symbols is None or n.symbol not in symbols:
            raise ValueError(f"symbolic parameter {n.symbol!r} has no value")
        return symbols[n.symbol]
    return n.const


def node_values(ac: ArithmeticCircuit, setting: IndicatorSetting, symbols: Mapping[str, object] | None = None) -> list:
    vals: list = []
    for n in ac.nodes:
        if n.kind == IND:
            vals.append(setting[(n.var, n.value)])
        elif n.kind == CONST:
            vals.append(_const_value(n, symbols))
        elif n.kind == MUL:
            acc = 1
            for c in n.children:
                acc = acc * vals[c]
            vals.append(acc)
        elif n.kind == ADD:
            acc = 0
            for c in n.children:
                acc = acc + vals[c]
            vals.append(acc)
        else:
            vals.append(max((vals[c] for c in n.children), default=0))
    return vals


def evaluate(ac: ArithmeticCircuit, inst: Instantiation | None = None, symbols: Mapping[str, object] | None = None):
    """Circuit value with indicators set by compatibility with ``inst``."""
    return node_values(ac, indicator_setting(ac, inst), symbols)[-1]


def _row_matrix(variables: Sequence[DiscreteVar]) -> np.ndarray:
    n = _row_count(variables)
    cols = []
    stride = n
    for v in variables:
        stride //= v.k
        cols.append((np.arange(n) // stride) % v.k)
    return np.stack(cols, axis=1) if cols else np.zeros((1, 0), dtype=np.int64)


def _vector_values(ac: ArithmeticCircuit, rows: np.ndarray, exact: bool,
                   symbols: Mapping[str, object] | None = None) -> list[np.ndarray]:
    m = rows.shape[0]
    dtype = object if exact else np.float64
    col = {v.name: i for i, v in enumerate(ac.vars)}
    vals: list[np.ndarray] = []
    for n in ac.nodes:
        if n.kind == IND:
            hit = rows[:, col[n.var]] == n.value
            vals.append(np.where(hit, 1, 0).astype(dtype))
        elif n.kind == CONST:
            c = _const_value(n, symbols)
            vals.append(np.full(m, Fraction(c) if exact else float(c), dtype=dtype))
        elif n.kind == MUL:
            acc = np.ones(m, dtype=dtype)
            for c in n.children:
                acc = acc * vals[c]
            vals.append(acc)
        elif n.kind == ADD:
            acc = np.zeros(m, dtype=dtype)
            for c in n.children:
                acc = acc + vals[c]
            vals.append(acc)
        else:
            acc = np.zeros(m, dtype=dtype)
            for c in n.children:
                acc = np.maximum(acc, vals[c])
            vals.append(acc)
    return vals


def circuit_factor(ac: ArithmeticCircuit, cap: int = ROW_CAP, exact: bool = False,
                   symbols: Mapping[str, object] | None = None) -> Factor:
    """The factor the circuit computes: its value at every complete instantiation."""
    _check_cap(ac.vars, cap)
    root = _vector_values(ac, _row_matrix(ac.vars), exact, symbols)[-1]
    values = tuple(root.tolist()) if not exact else tuple(root)
    return Factor(ac.vars, values)


# ---------------------------------------------------------------------------
# Properties
# ---------------------------------------------------------------------------


def _fmt(names: Iterable[str]) -> str:
    return "{" + ",".join(sorted(names)) + "}"


def check_ac_decomposability(ac: ArithmeticCircuit) -> PropertyReport:
    report = PropertyReport("decomposable")
    vs = ac.node_vars
    for i, n in enumerate(ac.nodes):
        if n.kind != MUL:
            continue
        seen: set[str] = set()
        shared: set[str] = set()
        for c in n.children:
            shared |= seen & vs[c]
            seen |= vs[c]
        if shared:
            report.witnesses.append((i, f"children share variables {_fmt(shared)}"))
    return report


def check_ac_smoothness(ac: ArithmeticCircuit) -> PropertyReport:
    report = PropertyReport("smooth")
    vs = ac.node_vars
    for i, n in enumerate(ac.nodes):
        if n.kind not in SUMLIKE:
            continue
        for c in n.children:
            if vs[c] != vs[i]:
                report.witnesses.append((i, f"child {c} misses variables {_fmt(vs[i] - vs[c])}"))
    return report


def check_ac_determinism(ac: ArithmeticCircuit, cap: int = ROW_CAP, symbols=None) -> PropertyReport:
    """At most one non-zero input per adder under every complete instantiation."""
    _check_cap(ac.vars, cap)
    report = PropertyReport("deterministic", method="exhaustive")
    rows = _row_matrix(ac.vars)
    sym = symbols
    if ac.symbols and symbols is None:
        # symbolic parameters stand for positive numbers; any positive stand-in decides the pattern
        sym = {s: 1.0 for s in ac.symbols}
    vals = _vector_values(ac, rows, False, sym)
    for i, n in enumerate(ac.nodes):
        if n.kind not in SUMLIKE or len(n.children) < 2:
            continue
        nonzero = np.zeros(rows.shape[0], dtype=np.int64)
        for c in n.children:
            nonzero += vals[c] != 0
        bad = np.flatnonzero(nonzero > 1)
        if bad.size:
            row = rows[bad[0]]
            text = ",".join(f"{v.name}={v.labels[x]}" for v, x in zip(ac.vars, row))
            report.witnesses.append((i, f"instantiation {text} gives {int(nonzero[bad[0]])} non-zero inputs"))
    return report


def check_ac_properties(ac: ArithmeticCircuit, cap: int = ROW_CAP, symbols=None) -> tuple[PropertyReport, PropertyReport, PropertyReport]:
    return check_ac_decomposability(ac), check_ac_smoothness(ac), check_ac_determinism(ac, cap, symbols)


def _require(report: PropertyReport) -> None:
    if not report.holds:
        raise PropertyError(report.render())


# ---------------------------------------------------------------------------
# Reasoning
# ---------------------------------------------------------------------------


def _free_multiplier(ac: ArithmeticCircuit, evidence: Instantiation) -> int:
    """Number of completions of the variables the root never mentions."""
    return math.prod(v.k for v in ac.vars if v.name not in ac.node_vars[-1] and v.name not in evidence)


def marginal(ac: ArithmeticCircuit, evidence: Instantiation | None = None, symbols=None):
    """Sum of factor values over instantiations compatible with ``evidence``."""
    evidence = evidence or {}
    if ac.is_maximizer:
        raise PropertyError("marginals need an adder circuit, not a maximizer circuit")
    _require(check_ac_decomposability(ac))
    _require(check_ac_smoothness(ac))
    return evaluate(ac, evidence, symbols) * _free_multiplier(ac, evidence)


def depth_two_circuit(f: Factor, cap: int = ROW_CAP) -> ArithmeticCircuit:
    """Sum over rows of ``f(x)`` times the indicators of ``x``."""
    _check_cap(f.vars, cap)
    b = AcBuilder(f.vars)
    terms = []
    for row, val in f.rows():
        terms.append(b.mul([b.const(val)] + [b.indicator(v.name, x) for v, x in zip(f.vars, row)]))
    return b.build(b.add(terms))


def _merge_vars(*groups: Sequence[DiscreteVar]) -> list[DiscreteVar]:
    merged: dict[str, DiscreteVar] = {}
    for group in groups:
        for v in group:
            if v.name in merged and merged[v.name] != v:
                raise ValueError(f"variable {v.name} declared with different values")
            merged.setdefault(v.name, v)
    return list(merged.values())


def multiply_circuits(a: ArithmeticCircuit, b: ArithmeticCircuit) -> ArithmeticCircuit:
    bld = AcBuilder(_merge_vars(a.vars, b.vars))
    ra = bld.copy(a)
    rb = bld.copy(b)
    return bld.build(bld.mul([ra, rb]))


def maximizer_of(ac: ArithmeticCircuit) -> ArithmeticCircuit:
    bld = AcBuilder(ac.vars)
    return bld.build(bld.copy(ac, {ADD: MAX}))


def _reachable(ac: ArithmeticCircuit, setting: Mapping[tuple[str, int], object]) -> list[bool]:
    """Whether a node has a complete subcircuit using only indicators that are switched on."""
    out: list[bool] = []
    for n in ac.nodes:
        if n.kind == IND:
            out.append(setting[(n.var, n.value)] != 0)
        elif n.kind == MUL:
            out.append(all(out[c] for c in n.children))
        elif n.kind in SUMLIKE:
            out.append(any(out[c] for c in n.children))
        else:
            out.append(True)
    return out


def _select(ac: ArithmeticCircuit, vals: list,
            ok: list[bool] | None = None) -> tuple[list[int], set[tuple[int, int]]]:
    """Top-down selection: the lowest-id child matching the value at max gates, all children at products.

    With ``ok`` given, ties prefer children that stay consistent with the evidence,
    which matters when the maximum is zero.
    """
    chosen: list[int] = []
    edges: set[tuple[int, int]] = set()
    stack = [ac.root]
    seen: set[int] = set()
    while stack:
        i = stack.pop()
        if i in seen:
            continue
        seen.add(i)
        chosen.append(i)
        n = ac.nodes[i]
        if n.kind in SUMLIKE:
            if not n.children:
                continue
            tied = [c for c in n.children if vals[c] == vals[i]]
            if ok is not None and any(ok[c] for c in tied):
                tied = [c for c in tied if ok[c]]
            best = min(tied)
            edges.add((i, best))
            stack.append(best)
        elif n.kind == MUL:
            for c in n.children:
                edges.add((i, c))
                stack.append(c)
    return chosen, edges


def mpe(mc: ArithmeticCircuit, evidence: Instantiation | None = None, check: bool = True,
        cap: int = ROW_CAP, symbols=None) -> tuple[object, dict[str, int]]:
    """Most likely complete instantiation compatible with ``evidence`` and its value.

    ``check`` verifies decomposability, smoothness and determinism first; without
    determinism the answer can be wrong, which is kept reachable for demonstration.
    """
    evidence = evidence or {}
    if any(n.kind == ADD for n in mc.nodes):
        mc = maximizer_of(mc)
    if check:
        for report in check_ac_properties(mc, cap, symbols):
            _require(report)
    setting = indicator_setting(mc, evidence)
    vals = node_values(mc, setting, symbols)
    chosen, _ = _select(mc, vals, _reachable(mc, setting))
    inst: dict[str, int] = {}
    for i in chosen:
        n = mc.nodes[i]
        if n.kind == IND:
            inst.setdefault(n.var, n.value)
    for v in mc.vars:
        if v.name not in inst:
            inst[v.name] = evidence.get(v.name, 0)
    return vals[-1], {v.name: inst[v.name] for v in mc.vars}


@dataclass(frozen=True)
class CompleteSubcircuit:
    term: tuple[tuple[str, int], ...]
    coefficient: object
    edges: frozenset[tuple[int, int]]

    def instantiation(self) -> dict[str, int] | None:
        """The term as an instantiation, or None if it binds a variable twice."""
        out: dict[str, int] = {}
        for name, x in self.term:
            if out.setdefault(name, x) != x:
                return None
        return out


def count_complete_subcircuits(ac: ArithmeticCircuit) -> int:
    counts: list[int] = []
    for n in ac.nodes:
        if n.kind in SUMLIKE:
            counts.append(sum(counts[c] for c in n.children))
        elif n.kind == MUL:
            counts.append(math.prod(counts[c] for c in n.children))
        else:
            counts.append(1)
    return counts[-1]


def enumerate_complete_subcircuits(ac: ArithmeticCircuit, cap: int = 10_000, symbols=None) -> list[CompleteSubcircuit]:
    total = count_complete_subcircuits(ac)
    if total > cap:
        raise ValueError(f"{total} complete subcircuits exceed cap {cap}")
    order = {v.name: i for i, v in enumerate(ac.vars)}
    # each partial selection: (term set, coefficient, edges)
    memo: list[list[tuple[frozenset, object, frozenset]]] = []
    for i, n in enumerate(ac.nodes):
        if n.kind == IND:
            memo.append([(frozenset({(n.var, n.value)}), 1, frozenset())])
        elif n.kind == CONST:
            memo.append([(frozenset(), _const_value(n, symbols), frozenset())])
        elif n.kind in SUMLIKE:
            memo.append([(t, c, e | {(i, ch)}) for ch in n.children for t, c, e in memo[ch]])
        else:
            acc = [(frozenset(), 1, frozenset((i, ch) for ch in n.children))]
            for ch in n.children:
                acc = [(t1 | t2, c1 * c2, e1 | e2) for t1, c1, e1 in acc for t2, c2, e2 in memo[ch]]
            memo.append(acc)
    out = []
    for term, coef, edges in memo[-1]:
        out.append(CompleteSubcircuit(tuple(sorted(term, key=lambda p: (order[p[0]], p[1]))), coef, edges))
    return out


# ---------------------------------------------------------------------------
# Derivatives and soft evidence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Derivatives:
    value: object
    values: tuple
    partials: tuple

    def indicator_partials(self, ac: ArithmeticCircuit) -> dict[tuple[str, int], object]:
        """Partial derivative per indicator (summed over leaves carrying it)."""
        out = {(v.name, x): 0 * self.value for v in ac.vars for x in range(v.k)}
        for i, n in enumerate(ac.nodes):
            if n.kind == IND:
                out[(n.var, n.value)] = out[(n.var, n.value)] + self.partials[i]
        return out

    def constant_partials(self, ac: ArithmeticCircuit) -> dict[int, object]:
        return {i: self.partials[i] for i, n in enumerate(ac.nodes) if n.kind == CONST}


def backprop(ac: ArithmeticCircuit, setting: IndicatorSetting, symbols=None) -> Derivatives:
    """Reverse-mode derivatives of the root value with respect to every node."""
    if ac.is_maximizer:
        raise PropertyError("derivatives are defined for adder circuits only")
    vals = node_values(ac, setting, symbols)
    zero = vals[-1] * 0
    deriv = [zero] * len(ac.nodes)
    deriv[-1] = zero + 1
    for i in range(len(ac.nodes) - 1, -1, -1):
        n = ac.nodes[i]
        d = deriv[i]
        if n.kind == ADD:
            for c in n.children:
                deriv[c] = deriv[c] + d
        elif n.kind == MUL and n.children:
            kids = n.children
            prefix = [zero + 1]
            for c in kids[:-1]:
                prefix.append(prefix[-1] * vals[c])
            suffix = zero + 1
            for k in range(len(kids) - 1, -1, -1):
                deriv[kids[k]] = deriv[kids[k]] + d * prefix[k] * suffix
                suffix = suffix * vals[kids[k]]
    return Derivatives(vals[-1], tuple(vals), tuple(deriv))


def marginals_by_backprop(ac: ArithmeticCircuit, evidence: Instantiation | None = None,
                          symbols=None) -> dict[tuple[str, int], object]:
    """For every ``X=x``: the marginal of ``evidence`` extended by ``X=x`` (``X`` unbound),
    or of ``evidence`` itself when compatible (``X`` bound), from one backward pass."""
    evidence = evidence or {}
    _require(check_ac_decomposability(ac))
    _require(check_ac_smoothness(ac))
    d = backprop(ac, indicator_setting(ac, evidence), symbols)
    per = d.indicator_partials(ac)
    out = {}
    for v in ac.vars:
        mult = _free_multiplier(ac, {**evidence, v.name: 0})
        for x in range(v.k):
            if v.name not in ac.node_vars[-1]:
                val = d.value * _free_multiplier(ac, {**evidence, v.name: x}) if evidence.get(v.name, x) == x else d.value * 0
                out[(v.name, x)] = val
            elif v.name in evidence:
                out[(v.name, x)] = per[(v.name, x)] * mult if evidence[v.name] == x else per[(v.name, x)] * 0
            else:
                out[(v.name, x)] = per[(v.name, x)] * mult
    return out


def soft_evidence(ac: ArithmeticCircuit, likelihoods: Mapping[str, Sequence], evidence: Instantiation | None = None,
                  symbols=None, check: bool = True, tol: float = 1e-9):
    """Probability of ``evidence`` given uncertain evidence expressed as per-value likelihoods.

    ``a`` is the circuit value with indicators set to the likelihoods and ``b`` the
    same with ``evidence`` also applied; the answer is ``b / a``.
    """
    evidence = evidence or {}
    if check:
        for report in check_ac_properties(ac, symbols=symbols):
            _require(report)
        total = marginal(ac, {}, symbols)
        if abs(total - 1) > tol:
            raise PropertyError(f"circuit does not compute a distribution (total {total})")
    a = node_values(ac, indicator_setting(ac, None, likelihoods), symbols)[-1]
    b = node_values(ac, indicator_setting(ac, evidence, likelihoods), symbols)[-1]
    if a == 0:
        raise ValueError("likelihoods give the circuit value 0")
    for v in ac.vars:
        if v.name in ac.node_vars[-1]:
            continue
        lik = likelihoods.get(v.name) or [1] * v.k
        a *= sum(lik)
        b *= lik[evidence[v.name]] if v.name in evidence else sum(lik)
    return b / a


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------


def _fmt_number(x) -> str:
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return repr(x)


def parse_number(tok: str, exact: bool = False):
    try:
        if exact or "/" in tok:
            return Fraction(tok)
        if any(ch in tok for ch in ".eE") or tok.lower() in ("inf", "nan"):
            return float(tok)
        return int(tok)
    except (ValueError, ZeroDivisionError):
        raise FormatError(f"bad number {tok!r}") from None


def serialize_ac(ac: ArithmeticCircuit) -> str:
    lines = [f"ac {len(ac.nodes)} {ac.edge_count}"]
    for v in ac.vars:
        lines.append(" ".join(["v", v.name, str(v.k), *v.labels]))
    for n in ac.nodes:
        if n.kind == IND:
            lines.append(f"l {n.var} {ac.var_map[n.var].labels[n.value]}")
        elif n.kind == CONST:
            lines.append(f"s {n.symbol}" if n.symbol else f"c {_fmt_number(n.const)}")
        else:
            lines.append(" ".join([n.kind, str(len(n.children)), *map(str, n.children)]))
    return "\n".join(lines) + "\n"


def parse_ac(text: str, exact: bool = False) -> ArithmeticCircuit:
    header = None
    variables: list[DiscreteVar] = []
    by_name: dict[str, DiscreteVar] = {}
    nodes: list[AcNode] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        toks = line.split()
        if not toks or toks[0] == "#":
            continue
        op = toks[0]
        if op == "ac":
            if header is not None or len(toks) != 3:
                raise FormatError(f"line {lineno}: bad or duplicate header")
            try:
                header = (int(toks[1]), int(toks[2]))
            except ValueError:
                raise FormatError(f"line {lineno}: non-integer header field") from None
            continue
        if header is None:
            raise FormatError(f"line {lineno}: content before header")
        if op == "v":
            if len(toks) < 3:
                raise FormatError(f"line {lineno}: variable needs name and size")
            try:
                k = int(toks[2])
            except ValueError:
                raise FormatError(f"line {lineno}: non-integer domain size") from None
            labels = toks[3:] or [str(x) for x in range(k)]
            if len(labels) != k or toks[1] in by_name:
                raise FormatError(f"line {lineno}: bad variable declaration")
            try:
                var = DiscreteVar(toks[1], tuple(labels))
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}") from None
            variables.append(var)
            by_name[var.name] = var
        elif op == "l":
            if len(toks) != 3 or toks[1] not in by_name or toks[2] not in by_name[toks[1]].labels:
                raise FormatError(f"line {lineno}: bad indicator")
            nodes.append(AcNode(IND, var=toks[1], value=by_name[toks[1]].index(toks[2])))
        elif op == "c":
            if len(toks) != 2:
                raise FormatError(f"line {lineno}: bad constant")
            val = parse_number(toks[1], exact)
            if val < 0:
                raise FormatError(f"line {lineno}: negative constant")
            nodes.append(AcNode(CONST, const=val))
        elif op == "s":
            if len(toks) != 2:
                raise FormatError(f"line {lineno}: bad symbol")
            nodes.append(AcNode(CONST, symbol=toks[1]))
        elif op in (ADD, MUL, MAX):
            try:
                nums = [int(t) for t in toks[1:]]
            except ValueError:
                raise FormatError(f"line {lineno}: non-integer field") from None
            if not nums or nums[0] != len(nums) - 1:
                raise FormatError(f"line {lineno}: child count disagrees with children listed")
            if any(not 0 <= c < len(nodes) for c in nums[1:]):
                raise FormatError(f"line {lineno}: forward or invalid child reference")
            nodes.append(AcNode(op, children=tuple(nums[1:])))
        else:
            raise FormatError(f"line {lineno}: bad opcode {op!r}")
    if header is None:
        raise FormatError("missing 'ac' header")
    if len(nodes) != header[0]:
        raise FormatError(f"header declares {header[0]} nodes, found {len(nodes)}")
    edges = sum(len(n.children) for n in nodes)
    if edges != header[1]:
        raise FormatError(f"header declares {header[1]} edges, found {edges}")
    return ArithmeticCircuit(tuple(variables), tuple(nodes))
