"""CNF to Decision-DNNF compilation by recording the trace of exhaustive DPLL.

Each search node becomes a gate: branching on ``X`` yields the decision
``(X and hi) or (not X and lo)``, variable-disjoint components yield a
decomposable and-gate, and literals forced by unit propagation are conjoined
as leaves. Components are cached by their syntactic normal form so repeated
sub-problems share one subcircuit.
"""

from __future__ import annotations

import sys
from collections import Counter, OrderedDict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .core import CnfFormula, NnfBuilder, NnfCircuit

Clause = tuple[int, ...]


class Conflict:
    """Result of unit propagation deriving the empty clause."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "CONFLICT"


CONFLICT = Conflict()


@dataclass(frozen=True)
class CompileOptions:
    heuristic: str = "most-occurring"
    cache_capacity: int = 100_000
    x_first: frozenset[int] | None = None

    def __post_init__(self):
        if self.heuristic not in ("most-occurring", "lowest-index"):
            raise ValueError(f"unknown heuristic {self.heuristic!r}")
        if self.cache_capacity < 0:
            raise ValueError("cache capacity must be non-negative")
        if self.x_first is not None:
            object.__setattr__(self, "x_first", frozenset(self.x_first))


def unit_propagate(clauses: Iterable[Sequence[int]], assignment: Mapping[int, bool] | None = None):
    """Apply the unit rule to a fixpoint.

    Returns ``(assignment, residual)`` where the residual clauses are neither
    satisfied nor unit, or :data:`CONFLICT` when some clause is falsified.
    """
    assign = dict(assignment or {})
    current = [tuple(cl) for cl in clauses]
    while True:
        residual: list[Clause] = []
        units: list[int] = []
        for cl in current:
            live = []
            for lit in cl:
                val = assign.get(abs(lit))
                if val is None:
                    live.append(lit)
                elif val == (lit > 0):
                    break
            else:
                if not live:
                    return CONFLICT
                if len(live) == 1:
                    units.append(live[0])
                else:
                    residual.append(tuple(live))
        if not units:
            return assign, sorted(set(tuple(sorted(set(cl), key=abs)) for cl in residual))
        for lit in units:
            val = assign.get(abs(lit))
            if val is not None and val != (lit > 0):
                return CONFLICT
            assign[abs(lit)] = lit > 0
        current = residual


def components(clauses: Iterable[Sequence[int]]) -> list[list[Clause]]:
    """Partition clauses into groups that share no variables (union-find)."""
    clauses = [tuple(cl) for cl in clauses]
    parent: dict[int, int] = {}

    def find(v: int) -> int:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for cl in clauses:
        for lit in cl:
            parent.setdefault(abs(lit), abs(lit))
        for lit in cl[1:]:
            a, b = find(abs(cl[0])), find(abs(lit))
            if a != b:
                parent[max(a, b)] = min(a, b)
    groups: dict[int, list[Clause]] = {}
    for cl in clauses:
        if not cl:
            groups.setdefault(-len(groups) - 1, []).append(cl)
            continue
        groups.setdefault(find(abs(cl[0])), []).append(cl)
    return [groups[k] for k in sorted(groups)]


def component_key(clauses: Iterable[Sequence[int]]) -> tuple[Clause, ...]:
    return tuple(sorted({tuple(sorted(set(cl))) for cl in clauses}))


class _Tracer:
    def __init__(self, var_count: int, opts: CompileOptions):
        self.opts = opts
        self.b = NnfBuilder(var_count)
        self.true = self.b.true()
        self.false = self.b.false()
        self.cache: OrderedDict[tuple[Clause, ...], int] = OrderedDict()
        self.hits = 0

    def trace(self, clauses: Sequence[Clause], assignment: Mapping[int, bool]) -> int:
        res = unit_propagate(clauses, assignment)
        if res is CONFLICT:
            return self.false
        assign, residual = res
        parts = [self.b.literal(v if val else -v) for v, val in sorted(assign.items())]
        for comp in components(residual):
            node = self.component(comp)
            if node == self.false:
                return self.false
            if node != self.true:
                parts.append(node)
        if not parts:
            return self.true
        if len(parts) == 1:
            return parts[0]
        return self.b.conj(parts)

    def choose(self, comp: Sequence[Clause]) -> int:
        counts = Counter(abs(l) for cl in comp for l in cl)
        pool = list(counts)
        x = self.opts.x_first
        if x:
            preferred = [v for v in pool if v in x]
            if preferred:
                pool = preferred
        if self.opts.heuristic == "lowest-index":
            return min(pool)
        return min(pool, key=lambda v: (-counts[v], v))

    def component(self, comp: Sequence[Clause]) -> int:
        key = component_key(comp)
        cap = self.opts.cache_capacity
        if cap and key in self.cache:
            self.cache.move_to_end(key)
            self.hits += 1
            return self.cache[key]
        var = self.choose(comp)
        hi = self.trace(comp, {var: True})
        lo = self.trace(comp, {var: False})
        if hi == self.false:
            node = lo
        elif lo == self.false:
            node = hi
        else:
            node = self.b.disj([hi, lo], decision=var)
        if cap:
            self.cache[key] = node
            if len(self.cache) > cap:
                self.cache.popitem(last=False)
        return node


def compile_cnf(f: CnfFormula, opts: CompileOptions | None = None) -> NnfCircuit:
    """Compile ``f`` into a Decision-DNNF circuit over ``f.var_count`` variables.

    The result is decomposable and has the decision property but is not smoothed;
    an unsatisfiable formula yields the constant-false circuit.
    """
    opts = opts or CompileOptions()
    clauses = [tuple(cl) for cl in f.clauses if not any(-l in cl for l in cl)]
    tracer = _Tracer(f.var_count, opts)
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * f.var_count + 1000))
    try:
        root = tracer.trace(clauses, {})
    finally:
        sys.setrecursionlimit(limit)
    return tracer.b.build(root)
