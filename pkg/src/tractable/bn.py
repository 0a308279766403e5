"""Bayesian networks: parsing, weighted-model-counting encoding and compilation to arithmetic circuits."""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import ac as acm
from .ac import AcBuilder, ArithmeticCircuit, AcNode, DiscreteVar, Factor
from .analysis import smooth
from .compiler import CompileOptions, compile_cnf
from .core import AND, LIT, CnfFormula, FormatError, PropertyError

NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True)
class BayesNet:
    """Variables in declaration order, parent lists, and one CPT per variable.

    A CPT is stored row-major: parent instantiations in lexicographic order
    (first listed parent slowest), child value fastest.
    """

    vars: tuple[DiscreteVar, ...]
    parents: Mapping[str, tuple[str, ...]]
    cpts: Mapping[str, tuple]
    _order: tuple[str, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        names = [v.name for v in self.vars]
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable name")
        by_name = {v.name: v for v in self.vars}
        for child, ps in self.parents.items():
            if child not in by_name:
                raise ValueError(f"parents given for unknown variable {child!r}")
            for p in ps:
                if p not in by_name:
                    raise ValueError(f"unknown parent {p!r} of {child!r}")
            if len(set(ps)) != len(ps):
                raise ValueError(f"repeated parent of {child!r}")
        object.__setattr__(self, "_order", tuple(self._topological(names)))
        for v in self.vars:
            if v.name not in self.cpts:
                raise ValueError(f"variable {v.name!r} has no CPT")
            table = self.cpts[v.name]
            width = math.prod(by_name[p].k for p in self.parents_of(v.name))
            if len(table) != width * v.k:
                raise ValueError(f"CPT of {v.name!r} needs {width * v.k} entries, got {len(table)}")
            for r in range(width):
                col = table[r * v.k:(r + 1) * v.k]
                if any(x < 0 for x in col):
                    raise ValueError(f"negative entry in CPT of {v.name!r}")
                total = sum(col)
                exact = all(isinstance(x, (int, Fraction)) for x in col)
                if (total != 1) if exact else abs(total - 1) > NORMALIZATION_TOL:
                    raise ValueError(f"CPT of {v.name!r} row {r} sums to {total}, not 1")
        extra = set(self.cpts) - set(names)
        if extra:
            raise ValueError(f"CPT given for unknown variables {sorted(extra)}")

    def _topological(self, names: Sequence[str]) -> list[str]:
        state: dict[str, int] = {}
        out: list[str] = []
        for start in names:
            if start in state:
                continue
            stack = [(start, iter(self.parents_of(start)))]
            state[start] = 1
            while stack:
                node, it = stack[-1]
                nxt = next(it, None)
                if nxt is None:
                    stack.pop()
                    state[node] = 2
                    out.append(node)
                elif state.get(nxt) == 1:
                    raise ValueError(f"network has a cycle through {nxt!r}")
                elif nxt not in state:
                    state[nxt] = 1
                    stack.append((nxt, iter(self.parents_of(nxt))))
        return out

    @property
    def var_map(self) -> dict[str, DiscreteVar]:
        return {v.name: v for v in self.vars}

    @property
    def topological_order(self) -> tuple[str, ...]:
        return self._order

    def parents_of(self, name: str) -> tuple[str, ...]:
        return tuple(self.parents.get(name, ()))

    def family(self, name: str) -> tuple[DiscreteVar, ...]:
        vm = self.var_map
        return tuple(vm[p] for p in self.parents_of(name)) + (vm[name],)

    def cpt_rows(self, name: str):
        """Yield ``(parent values, child value, entry)`` in storage order."""
        fam = self.family(name)
        table = self.cpts[name]
        for i, row in enumerate(itertools.product(*(range(v.k) for v in fam))):
            yield row[:-1], row[-1], table[i]

    def cpt_index(self, name: str, inst: Mapping[str, int]) -> int:
        idx = 0
        for v in self.family(name):
            idx = idx * v.k + inst[v.name]
        return idx


def parse_bn(text: str, exact: bool = False) -> BayesNet:
    """Read the line format: ``net``, ``var NAME K [labels]``, ``parents NAME P…``, ``cpt NAME v…``."""
    seen_header = False
    variables: list[DiscreteVar] = []
    parents: dict[str, tuple[str, ...]] = {}
    cpts: dict[str, tuple] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        toks = line.split()
        if not toks or toks[0].startswith("#"):
            continue
        op = toks[0]
        if op == "net":
            if seen_header:
                raise FormatError(f"line {lineno}: duplicate header")
            seen_header = True
            continue
        if not seen_header:
            raise FormatError(f"line {lineno}: expected 'net' header")
        if op == "var":
            if len(toks) < 3:
                raise FormatError(f"line {lineno}: var needs a name and a domain size")
            try:
                k = int(toks[2])
            except ValueError:
                raise FormatError(f"line {lineno}: bad domain size {toks[2]!r}") from None
            labels = tuple(toks[3:]) or tuple(str(x) for x in range(k))
            if k < 1 or len(labels) != k:
                raise FormatError(f"line {lineno}: expected {k} labels")
            try:
                variables.append(DiscreteVar(toks[1], labels))
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}") from None
        elif op == "parents":
            if len(toks) < 2 or toks[1] in parents:
                raise FormatError(f"line {lineno}: bad or repeated parents line")
            parents[toks[1]] = tuple(toks[2:])
        elif op == "cpt":
            if len(toks) < 3 or toks[1] in cpts:
                raise FormatError(f"line {lineno}: bad or repeated cpt line")
            cpts[toks[1]] = tuple(acm.parse_number(t, exact) for t in toks[2:])
        else:
            raise FormatError(f"line {lineno}: unknown directive {op!r}")
    if not seen_header:
        raise FormatError("missing 'net' header")
    try:
        return BayesNet(tuple(variables), parents, cpts)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def serialize_bn(bn: BayesNet) -> str:
    lines = ["net"]
    for v in bn.vars:
        lines.append(" ".join(["var", v.name, str(v.k), *v.labels]))
    for v in bn.vars:
        if bn.parents_of(v.name):
            lines.append(" ".join(["parents", v.name, *bn.parents_of(v.name)]))
    for v in bn.vars:
        lines.append(" ".join(["cpt", v.name, *map(acm._fmt_number, bn.cpts[v.name])]))
    return "\n".join(lines) + "\n"


def joint_factor(bn: BayesNet, exact: bool = False, cap: int = acm.ROW_CAP) -> Factor:
    """Product of all CPTs as a factor over the variables in declaration order."""
    acm._check_cap(bn.vars, cap)
    rows = acm._row_matrix(bn.vars)
    col = {v.name: i for i, v in enumerate(bn.vars)}
    dtype = object if exact else np.float64
    out = np.ones(rows.shape[0], dtype=dtype)
    for v in bn.vars:
        idx = np.zeros(rows.shape[0], dtype=np.int64)
        for u in bn.family(v.name):
            idx = idx * u.k + rows[:, col[u.name]]
        table = np.array([Fraction(x) if exact else float(x) for x in bn.cpts[v.name]], dtype=dtype)
        out = out * table[idx]
    return Factor(bn.vars, tuple(out.tolist()))


def random_bn(rng: random.Random, n: int, max_k: int = 3, max_parents: int = 2, exact: bool = False) -> BayesNet:
    """Random network over ``n`` variables; parents are drawn among earlier variables."""
    variables = []
    for i in range(n):
        k = rng.randint(2, max_k)
        variables.append(DiscreteVar(f"X{i}", tuple(f"x{i}_{j}" for j in range(k))))
    parents = {}
    cpts = {}
    for i, v in enumerate(variables):
        ps = rng.sample(range(i), min(i, rng.randint(0, max_parents)))
        parents[v.name] = tuple(variables[p].name for p in sorted(ps))
        width = math.prod(variables[p].k for p in ps)
        table = []
        for _ in range(width):
            draws = [rng.randint(1, 20) for _ in range(v.k)]
            total = sum(draws)
            table += [Fraction(d, total) if exact else d / total for d in draws]
        if not exact:
            # keep float rows normalized to the last bit
            for r in range(width):
                row = table[r * v.k:(r + 1) * v.k]
                row[-1] = 1 - sum(row[:-1])
                table[r * v.k:(r + 1) * v.k] = row
        cpts[v.name] = tuple(table)
    return BayesNet(tuple(variables), parents, cpts)


# ---------------------------------------------------------------------------
# Weighted model counting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Indicator:
    var: str
    value: int


@dataclass(frozen=True)
class Parameter:
    var: str
    parent_values: tuple[tuple[str, int], ...]
    value: int
    weight: object
    symbol: str


@dataclass(frozen=True)
class WmcEncoding:
    cnf: CnfFormula
    weights: Mapping[int, object]
    legend: Mapping[int, Indicator | Parameter]

    def indicator_var(self, var: str, value: int) -> int:
        for v, entry in self.legend.items():
            if isinstance(entry, Indicator) and entry.var == var and entry.value == value:
                return v
        raise KeyError((var, value))

    def evidence(self, inst: Mapping[str, int], bn: BayesNet) -> dict[int, bool]:
        """CNF evidence setting the indicators of each instantiated variable."""
        out = {}
        vm = bn.var_map
        for name, x in inst.items():
            for y in range(vm[name].k):
                out[self.indicator_var(name, y)] = y == x
        return out


def parameter_symbol(bn: BayesNet, var: str, parent_values: Sequence[tuple[str, int]], value: int) -> str:
    vm = bn.var_map
    head = f"{var}={vm[var].labels[value]}"
    if not parent_values:
        return head
    return head + "|" + ",".join(f"{p}={vm[p].labels[x]}" for p, x in parent_values)


def encode_wmc(bn: BayesNet) -> WmcEncoding:
    """One indicator per variable value with exactly-one clauses, one parameter
    variable per CPT entry equivalent to the conjunction of its row's indicators."""
    legend: dict[int, Indicator | Parameter] = {}
    ind: dict[tuple[str, int], int] = {}
    nxt = 1
    for v in bn.vars:
        for x in range(v.k):
            ind[(v.name, x)] = nxt
            legend[nxt] = Indicator(v.name, x)
            nxt += 1
    clauses: list[tuple[int, ...]] = []
    for v in bn.vars:
        lits = [ind[(v.name, x)] for x in range(v.k)]
        clauses.append(tuple(lits))
        for i, j in itertools.combinations(lits, 2):
            clauses.append((-i, -j))
    weights: dict[int, object] = {}
    for v in bn.vars:
        ps = bn.parents_of(v.name)
        for pvals, x, entry in bn.cpt_rows(v.name):
            pv = tuple(zip(ps, pvals))
            legend[nxt] = Parameter(v.name, pv, x, entry, parameter_symbol(bn, v.name, pv, x))
            row = [ind[(p, y)] for p, y in pv] + [ind[(v.name, x)]]
            for lit in row:
                clauses.append((-nxt, lit))
            clauses.append(tuple([nxt] + [-lit for lit in row]))
            weights[nxt] = entry
            weights[-nxt] = 1
            nxt += 1
    for v, entry in legend.items():
        if isinstance(entry, Indicator):
            weights[v] = weights[-v] = 1
    return WmcEncoding(CnfFormula(nxt - 1, tuple(clauses)), weights, legend)


# ---------------------------------------------------------------------------
# Compilation to arithmetic circuits
# ---------------------------------------------------------------------------


def compile_to_ac(bn: BayesNet, symbolic: bool = False, exact: bool = False,
                  opts: CompileOptions | None = None, verify: bool = True) -> ArithmeticCircuit:
    """Encode, compile to Decision-DNNF, smooth, then read the circuit off arithmetically.

    Positive indicator literals become indicators, positive parameter literals
    become constants (or named symbols), negative literals weigh 1, and-gates
    become products and or-gates sums.
    """
    enc = encode_wmc(bn)
    nnf = smooth(compile_cnf(enc.cnf, opts), cover_root=True)
    b = AcBuilder(bn.vars)
    one = b.mul([])
    new: list[int | None] = []
    for node in nnf.nodes:
        if node.kind == LIT:
            entry = enc.legend[abs(node.literal)]
            if node.literal < 0:
                new.append(None)
            elif isinstance(entry, Indicator):
                new.append(b.indicator(entry.var, entry.value))
            elif symbolic:
                new.append(b.symbol(entry.symbol))
            else:
                w = entry.weight
                new.append(b.const(Fraction(w) if exact else float(w)))
        elif node.kind == AND:
            kids = [new[c] for c in node.children if new[c] is not None]
            if not kids:
                new.append(None)
            elif len(kids) == 1:
                new.append(kids[0])
            else:
                new.append(b.mul(kids))
        else:
            kids = [one if new[c] is None else new[c] for c in node.children]
            new.append(b.add(kids))
    root = new[-1]
    ac = b.build(one if root is None else root)
    if verify:
        probe = None
        if symbolic:
            probe = {e.symbol: e.weight for e in enc.legend.values() if isinstance(e, Parameter)}
        for report in acm.check_ac_properties(ac, symbols=probe):
            if not report.holds:
                raise PropertyError("compiled circuit failed a property check:\n" + report.render())
    return ac


def parameter_values(bn: BayesNet, exact: bool = False) -> dict[str, object]:
    """Symbol name to CPT entry, for binding symbolic circuits."""
    out = {}
    for v in bn.vars:
        ps = bn.parents_of(v.name)
        for pvals, x, entry in bn.cpt_rows(v.name):
            out[parameter_symbol(bn, v.name, tuple(zip(ps, pvals)), x)] = Fraction(entry) if exact else float(entry)
    return out


def bind(ac: ArithmeticCircuit, values: Mapping[str, object]) -> ArithmeticCircuit:
    """Replace every symbolic parameter by its value; the structure is unchanged."""
    missing = sorted(ac.symbols - set(values))
    if missing:
        raise ValueError("unbound symbolic parameters: " + ", ".join(missing))
    nodes = tuple(
        AcNode(acm.CONST, const=values[n.symbol]) if n.kind == acm.CONST and n.symbol else n
        for n in ac.nodes
    )
    return ArithmeticCircuit(ac.vars, nodes)


QUERY_KINDS = ("evidence_prob", "marginals", "mpe", "soft")


def bn_query(ac: ArithmeticCircuit, kind: str, evidence: Mapping[str, int] | None = None,
             likelihoods: Mapping[str, Sequence] | None = None, symbols=None):
    """Dispatch a probabilistic query to the arithmetic-circuit routines."""
    evidence = dict(evidence or {})
    if kind == "evidence_prob":
        return acm.marginal(ac, evidence, symbols)
    if kind == "marginals":
        return acm.marginals_by_backprop(ac, evidence, symbols)
    if kind == "mpe":
        return acm.mpe(ac, evidence, symbols=symbols)
    if kind == "soft":
        return acm.soft_evidence(ac, likelihoods or {}, evidence, symbols)
    raise ValueError(f"unknown query kind {kind!r}; expected one of {', '.join(QUERY_KINDS)}")
