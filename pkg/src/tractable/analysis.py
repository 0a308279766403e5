"""Property checks and structural transforms on NNF circuits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .core import (
    AND,
    CHUNK,
    LIT,
    OR,
    NnfBuilder,
    NnfCircuit,
    NnfNode,
    PropertyError,
    Vtree,
    assignment_rows,
    evaluate_rows,
    row_assignment,
)

ENUMERATION_CAP = 20


@dataclass
class PropertyReport:
    name: str
    witnesses: list[tuple[int, str]] = field(default_factory=list)
    method: str = "structural"
    details: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return not self.witnesses

    def __bool__(self) -> bool:
        return self.holds

    def render(self) -> str:
        lines = [f"PROPERTY {self.name} {'HOLDS' if self.holds else 'FAILS'}"]
        lines += [f"WITNESS node={node} {why}" for node, why in self.witnesses]
        return "\n".join(lines)


def _fmt(vs: Iterable[int]) -> str:
    return "{" + ",".join(map(str, sorted(vs))) + "}"


def check_decomposability(c: NnfCircuit) -> PropertyReport:
    report = PropertyReport("decomposable")
    vs = c.node_vars
    for i, node in enumerate(c.nodes):
        if node.kind != AND or len(node.children) < 2:
            continue
        seen: set[int] = set()
        shared: set[int] = set()
        for ch in node.children:
            shared |= seen & vs[ch]
            seen |= vs[ch]
        if shared:
            report.witnesses.append((i, f"children share variables {_fmt(shared)}"))
    return report


def sat_flags(c: NnfCircuit) -> list[bool]:
    """Per-node satisfiability; exact when the circuit is decomposable."""
    flags: list[bool] = []
    for node in c.nodes:
        if node.kind == LIT:
            flags.append(True)
        elif node.kind == AND:
            flags.append(all(flags[ch] for ch in node.children))
        else:
            flags.append(any(flags[ch] for ch in node.children))
    return flags


def effective_vars(c: NnfCircuit, sat: list[bool]) -> list[frozenset[int]]:
    """Variables mentioned below each node, ignoring unsatisfiable or-gate inputs."""
    out: list[frozenset[int]] = []
    for i, node in enumerate(c.nodes):
        if node.kind == LIT:
            out.append(frozenset((abs(node.literal),)))
        elif node.kind == OR:
            out.append(frozenset().union(*(out[ch] for ch in node.children if sat[ch])))
        else:
            out.append(frozenset().union(*(out[ch] for ch in node.children)))
    return out


def _sat_by_enumeration(c: NnfCircuit, cap: int) -> list[bool]:
    if c.var_count > cap:
        raise PropertyError(
            f"circuit is not decomposable and has {c.var_count} variables (> cap {cap}); "
            "cannot decide satisfiability of subcircuits"
        )
    n = c.var_count
    flags = np.zeros(len(c.nodes), dtype=bool)
    for start in range(0, 1 << n, CHUNK):
        vals = evaluate_rows(c, assignment_rows(n, start, min(1 << n, start + CHUNK)))
        flags |= np.array([v.any() for v in vals])
    return flags.tolist()


def check_smoothness(c: NnfCircuit, exclude_unsat: bool = False, cap: int = ENUMERATION_CAP) -> PropertyReport:
    report = PropertyReport("smooth")
    vs = c.node_vars
    sat = None
    if exclude_unsat:
        if check_decomposability(c).holds:
            sat = sat_flags(c)
        else:
            sat = _sat_by_enumeration(c, cap)
            report.method = "exhaustive"
        vs = effective_vars(c, sat)
    for i, node in enumerate(c.nodes):
        if node.kind != OR:
            continue
        kids = [ch for ch in node.children if sat is None or sat[ch]]
        if len(kids) < 2:
            continue
        target = vs[i]
        for ch in kids:
            if vs[ch] != target:
                report.witnesses.append((i, f"child {ch} misses variables {_fmt(target - vs[ch])}"))
    return report


def _literal_children(c: NnfCircuit, idx: int) -> set[int]:
    node = c.nodes[idx]
    if node.kind == LIT:
        return {node.literal}
    if node.kind == AND:
        return {c.nodes[ch].literal for ch in node.children if c.nodes[ch].kind == LIT}
    return set()


def check_decision(c: NnfCircuit) -> PropertyReport:
    """Every non-constant or-gate must read ``(X and a) or (not X and b)``."""
    report = PropertyReport("decision")
    decisions: dict[int, int] = {}
    for i, node in enumerate(c.nodes):
        if node.kind != OR or not node.children:
            continue
        if len(node.children) != 2:
            report.witnesses.append((i, f"or-gate has {len(node.children)} inputs, expected 2"))
            continue
        left = _literal_children(c, node.children[0])
        right = _literal_children(c, node.children[1])
        candidates = sorted(abs(l) for l in left if -l in right)
        if node.decision:
            candidates = [v for v in candidates if v == node.decision]
        if not candidates:
            why = "no opposing literal pair on the two inputs"
            if node.decision:
                why += f" for declared decision variable {node.decision}"
            report.witnesses.append((i, why))
            continue
        decisions[i] = candidates[0]
    report.details["decisions"] = decisions
    return report


def check_x_constrained(c: NnfCircuit, x: Iterable[int]) -> bool:
    """No or-gate deciding a variable in ``x`` sits below one deciding a variable outside ``x``."""
    report = check_decision(c)
    if not report.holds:
        raise PropertyError("X-constrainedness is defined for circuits with the decision property")
    x = frozenset(x)
    decisions = report.details["decisions"]
    below_y = [False] * len(c.nodes)
    for i in range(len(c.nodes) - 1, -1, -1):
        var = decisions.get(i)
        if var is not None and var in x and below_y[i]:
            return False
        if below_y[i] or (var is not None and var not in x):
            for ch in c.nodes[i].children:
                below_y[ch] = True
    return True


def check_structured(c: NnfCircuit, v: Vtree) -> PropertyReport:
    """Every and-gate is binary and splits its variables across some vtree node."""
    report = PropertyReport("structured")
    vs = c.node_vars
    unknown = vs[-1] - v.variables if c.nodes else frozenset()
    if unknown:
        report.witnesses.append((c.root, f"variables {_fmt(unknown)} are not in the vtree"))
        return report
    conform: dict[int, int] = {}
    for i, node in enumerate(c.nodes):
        if node.kind != AND or not node.children:
            continue
        if len(node.children) != 2:
            report.witnesses.append((i, f"and-gate has {len(node.children)} inputs, expected 2"))
            continue
        u = _conforming_node(v, vs[node.children[0]], vs[node.children[1]])
        if u is None:
            report.witnesses.append(
                (i, f"no vtree node separates {_fmt(vs[node.children[0]])} | {_fmt(vs[node.children[1]])}")
            )
        else:
            conform[i] = u
    report.details["conforming"] = conform
    return report


def _conforming_node(v: Vtree, left: frozenset[int], right: frozenset[int]) -> int | None:
    if left & right:
        return None
    if left and right:
        u = v.lca_of_vars(left | right)
        if u in v.internals and left <= v.vars_of(v.left(u)) and right <= v.vars_of(v.right(u)):
            return u
        return None
    if not left and not right:
        return v.root if v.internals else None
    # one side is empty: climb from the non-empty side until it sits on the required side
    side_vars = left or right
    u = v.lca_of_vars(side_vars)
    while True:
        p = v.parent(u)
        if p is None:
            return None
        if (left and v.left(p) == u) or (right and v.right(p) == u):
            return p
        u = p


def check_determinism_exhaustive(c: NnfCircuit, cap: int = ENUMERATION_CAP) -> PropertyReport:
    if c.var_count > cap:
        raise PropertyError(f"{c.var_count} variables exceed determinism enumeration cap {cap}")
    report = PropertyReport("deterministic", method="exhaustive")
    ors = [i for i, node in enumerate(c.nodes) if node.kind == OR and len(node.children) > 1]
    n = c.var_count
    flagged: set[int] = set()
    for start in range(0, 1 << n, CHUNK):
        vals = evaluate_rows(c, assignment_rows(n, start, min(1 << n, start + CHUNK)))
        for i in ors:
            if i in flagged:
                continue
            high = np.zeros(len(vals[i]), dtype=np.int64)
            for ch in c.nodes[i].children:
                high += vals[ch]
            bad = np.flatnonzero(high > 1)
            if bad.size:
                flagged.add(i)
                a = row_assignment(n, start + int(bad[0]))
                text = " ".join(f"{k}={int(b)}" for k, b in a.items())
                report.witnesses.append((i, f"assignment {text} sets {int(high[bad[0]])} inputs high"))
    report.witnesses.sort()
    return report


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------


def smooth(c: NnfCircuit, cover_root: bool = False) -> NnfCircuit:
    """Make every or-gate smooth by conjoining ``X or not X`` gadgets onto its inputs.

    Gadgets are shared per variable, and an input that is already an and-gate has
    the gadgets appended to its own inputs so decision structure stays visible.
    With ``cover_root`` the root is also extended to mention every variable.
    """
    b = NnfBuilder(c.var_count)
    vs = c.node_vars
    gadgets: dict[int, int] = {}

    def gadget(var: int) -> int:
        if var not in gadgets:
            gadgets[var] = b.disj([b.literal(var), b.literal(-var)], decision=var)
        return gadgets[var]

    new: list[int] = []
    new_nodes: list[NnfNode] = []

    def pad(old: int, missing: frozenset[int]) -> int:
        if not missing:
            return new[old]
        extra = [gadget(v) for v in sorted(missing)]
        node = new_nodes[old]
        if node.kind == AND and node.children:
            return b.conj(list(node.children) + extra)
        return b.conj([new[old]] + extra)

    for i, node in enumerate(c.nodes):
        if node.kind == LIT:
            idx = b.literal(node.literal)
        elif node.kind == AND:
            idx = b.conj([new[ch] for ch in node.children])
        else:
            idx = b.disj([pad(ch, vs[i] - vs[ch]) for ch in node.children], decision=node.decision)
        new.append(idx)
        new_nodes.append(b.nodes[idx])
    root = new[-1]
    if cover_root:
        root = pad(c.root, frozenset(range(1, c.var_count + 1)) - vs[-1])
    return b.build(root, c.name_map)


def condition_all(c: NnfCircuit, evidence: Mapping[int, bool]) -> NnfCircuit:
    """Restrict the circuit to ``evidence``, propagating constants."""
    b = NnfBuilder(c.var_count)
    t, f = b.true(), b.false()
    new: list[int] = []
    for node in c.nodes:
        if node.kind == LIT:
            var = abs(node.literal)
            if var in evidence:
                new.append(t if evidence[var] == (node.literal > 0) else f)
            else:
                new.append(b.literal(node.literal))
        elif node.kind == AND:
            kids = [new[ch] for ch in node.children]
            if f in kids:
                new.append(f)
                continue
            kids = [k for k in kids if k != t]
            new.append(kids[0] if len(kids) == 1 else b.conj(kids) if kids else t)
        else:
            kids = [new[ch] for ch in node.children]
            if t in kids:
                new.append(t)
                continue
            kids = [k for k in kids if k != f]
            if not kids:
                new.append(f)
            elif len(kids) == 1:
                new.append(kids[0])
            else:
                keep = node.decision if len(kids) == len(node.children) else 0
                new.append(b.disj(kids, decision=keep))
    return b.build(new[-1], c.name_map)


def condition(c: NnfCircuit, literal: int) -> NnfCircuit:
    return condition_all(c, {abs(literal): literal > 0})
