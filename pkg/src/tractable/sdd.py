"""Sentential decision diagrams: canonical construction under a fixed vtree.

Decision nodes hold ``(prime, sub)`` elements whose primes partition the
left-subtree variables' space. Nodes are kept compressed (distinct subs) and
trimmed, and are interned in a unique table, so two nodes of one manager are
the same object exactly when they denote the same function.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .core import CnfFormula, FormatError, NnfBuilder, NnfCircuit, Vtree

TRUE, FALSE, LITERAL, DECISION = "T", "F", "L", "D"


class SddNode:
    __slots__ = ("id", "kind", "vtree", "literal", "elements")

    def __init__(self, id, kind, vtree=None, literal=0, elements=()):
        self.id = id
        self.kind = kind
        self.vtree = vtree
        self.literal = literal
        self.elements = elements

    @property
    def is_true(self) -> bool:
        return self.kind == TRUE

    @property
    def is_false(self) -> bool:
        return self.kind == FALSE

    @property
    def is_decision(self) -> bool:
        return self.kind == DECISION

    def __repr__(self):
        if self.kind == LITERAL:
            return f"SddNode({self.id}, lit={self.literal})"
        if self.kind == DECISION:
            return f"SddNode({self.id}, vtree={self.vtree}, size={len(self.elements)})"
        return f"SddNode({self.id}, {self.kind})"


class SddManager:
    def __init__(self, vtree: Vtree):
        self.vtree = vtree
        self.nodes: list[SddNode] = []
        self._unique: dict[tuple, SddNode] = {}
        self._apply_cache: dict[tuple[str, int, int], SddNode] = {}
        self._negations: dict[int, SddNode] = {}
        self.true = self._new(TRUE)
        self.false = self._new(FALSE)
        self._negations[self.true.id] = self.false
        self._negations[self.false.id] = self.true

    def _new(self, kind, vtree=None, literal=0, elements=()) -> SddNode:
        node = SddNode(len(self.nodes), kind, vtree, literal, elements)
        self.nodes.append(node)
        return node

    @property
    def var_count(self) -> int:
        return max(self.vtree.variables)

    # -- terminals ---------------------------------------------------------

    def literal(self, lit: int) -> SddNode:
        if lit == 0 or abs(lit) not in self.vtree.variables:
            raise KeyError(f"variable {abs(lit)} is not in the vtree")
        key = ("L", lit)
        node = self._unique.get(key)
        if node is None:
            node = self._new(LITERAL, self.vtree.leaf_of(abs(lit)), lit)
            self._unique[key] = node
        return node

    def constant(self, value: bool) -> SddNode:
        return self.true if value else self.false

    # -- canonical decision construction -----------------------------------

    def _decision(self, u: int, elements: list[tuple[SddNode, SddNode]]) -> SddNode:
        by_sub: dict[int, list] = {}
        order: list[int] = []
        for p, s in elements:
            if p.is_false:
                continue
            if s.id not in by_sub:
                by_sub[s.id] = [p, s]
                order.append(s.id)
            else:
                by_sub[s.id][0] = self.disjoin(by_sub[s.id][0], p)
        compressed = [tuple(by_sub[k]) for k in order]
        if len(compressed) == 1:
            return compressed[0][1]
        if len(compressed) == 2:
            (p1, s1), (p2, s2) = compressed
            if s1.is_true and s2.is_false:
                return p1
            if s2.is_true and s1.is_false:
                return p2
        compressed.sort(key=lambda e: (e[0].id, e[1].id))
        key = ("D", u, tuple((p.id, s.id) for p, s in compressed))
        node = self._unique.get(key)
        if node is None:
            node = self._new(DECISION, u, elements=tuple(compressed))
            self._unique[key] = node
        return node

    def _elements_at(self, node: SddNode, u: int) -> list[tuple[SddNode, SddNode]]:
        if node.vtree == u:
            return list(node.elements)
        if self.vtree.is_ancestor(self.vtree.left(u), node.vtree):
            return [(node, self.true), (self.negate(node), self.false)]
        return [(self.true, node)]

    # -- operations --------------------------------------------------------

    def negate(self, a: SddNode) -> SddNode:
        found = self._negations.get(a.id)
        if found is not None:
            return found
        if a.kind == LITERAL:
            result = self.literal(-a.literal)
        else:
            result = self._decision(a.vtree, [(p, self.negate(s)) for p, s in a.elements])
        self._negations[a.id] = result
        self._negations[result.id] = a
        return result

    def apply(self, a: SddNode, b: SddNode, op: str) -> SddNode:
        if op not in ("and", "or"):
            raise ValueError(f"unknown operator {op!r}")
        absorbing, identity = (self.false, self.true) if op == "and" else (self.true, self.false)
        if a is absorbing or b is absorbing:
            return absorbing
        if a is identity:
            return b
        if b is identity or a is b:
            return a
        if self._negations.get(a.id) is b or (a.kind == b.kind == LITERAL and a.vtree == b.vtree):
            return absorbing
        key = (op, min(a.id, b.id), max(a.id, b.id))
        found = self._apply_cache.get(key)
        if found is not None:
            return found
        u = self.vtree.lca(a.vtree, b.vtree)
        ea = self._elements_at(a, u)
        eb = self._elements_at(b, u)
        elements = []
        for p, s in ea:
            for q, r in eb:
                prime = self.apply(p, q, "and")
                if prime.is_false:
                    continue
                elements.append((prime, self.apply(s, r, op)))
        result = self._decision(u, elements)
        self._apply_cache[key] = result
        return result

    def conjoin(self, a: SddNode, b: SddNode) -> SddNode:
        return self.apply(a, b, "and")

    def disjoin(self, a: SddNode, b: SddNode) -> SddNode:
        return self.apply(a, b, "or")

    # -- inspection --------------------------------------------------------

    def evaluate(self, a: SddNode, assignment: Mapping[int, bool]) -> bool:
        memo: dict[int, bool] = {}

        def ev(n: SddNode) -> bool:
            if n.id in memo:
                return memo[n.id]
            if n.kind in (TRUE, FALSE):
                val = n.is_true
            elif n.kind == LITERAL:
                val = bool(assignment[abs(n.literal)]) == (n.literal > 0)
            else:
                val = False
                for p, s in n.elements:
                    if ev(p):
                        val = ev(s)
                        break
            memo[n.id] = val
            return val

        return ev(a)

    def descendants(self, a: SddNode) -> list[SddNode]:
        """Nodes reachable from ``a``, children before parents."""
        seen: dict[int, SddNode] = {}
        order: list[SddNode] = []
        stack = [(a, False)]
        while stack:
            n, expanded = stack.pop()
            if expanded:
                order.append(n)
                continue
            if n.id in seen:
                continue
            seen[n.id] = n
            stack.append((n, True))
            for p, s in reversed(n.elements):
                stack.append((s, False))
                stack.append((p, False))
        return order

    def size(self, a: SddNode) -> int:
        return sum(len(n.elements) for n in self.descendants(a))


def compile_cnf_bottom_up(m: SddManager, f: CnfFormula) -> SddNode:
    """Conjoin clause SDDs, each the disjunction of its literal SDDs."""
    acc = m.true
    for clause in f.clauses:
        c = m.false
        for lit in clause:
            c = m.disjoin(c, m.literal(lit))
        acc = m.conjoin(acc, c)
        if acc.is_false:
            break
    return acc


def sdd_to_nnf(m: SddManager, a: SddNode) -> NnfCircuit:
    """Expand decisions into or-gates over binary ``prime and sub`` and-gates."""
    b = NnfBuilder(m.var_count)
    out: dict[int, int] = {}
    for n in m.descendants(a):
        if n.is_true:
            out[n.id] = b.true()
        elif n.is_false:
            out[n.id] = b.false()
        elif n.kind == LITERAL:
            out[n.id] = b.literal(n.literal)
        else:
            decision = 0
            if len(n.elements) == 2 and all(p.kind == LITERAL for p, _ in n.elements):
                decision = abs(n.elements[0][0].literal)
            out[n.id] = b.disj([b.conj([out[p.id], out[s.id]]) for p, s in n.elements], decision=decision)
    return b.build(out[a.id])


# ---------------------------------------------------------------------------
# OBDD view
# ---------------------------------------------------------------------------

OBDD_FALSE, OBDD_TRUE = 0, 1


@dataclass(frozen=True)
class Obdd:
    """Nodes map id -> (var, low, high); ids 0 and 1 are the terminals."""

    root: int
    nodes: Mapping[int, tuple[int, int, int]]
    order: tuple[int, ...]

    def evaluate(self, assignment: Mapping[int, bool]) -> bool:
        u = self.root
        while u not in (OBDD_FALSE, OBDD_TRUE):
            var, low, high = self.nodes[u]
            u = high if assignment[var] else low
        return u == OBDD_TRUE

    def to_nnf(self, var_count: int) -> NnfCircuit:
        """Replace each node by ``(not X and low) or (X and high)``."""
        b = NnfBuilder(var_count)
        out = {OBDD_FALSE: b.false(), OBDD_TRUE: b.true()}
        for u in sorted(self.nodes):
            var, low, high = self.nodes[u]
            lo = b.conj([b.literal(-var), out[low]])
            hi = b.conj([b.literal(var), out[high]])
            out[u] = b.disj([lo, hi], decision=var)
        return b.build(out[self.root])


def obdd_export(m: SddManager, a: SddNode) -> Obdd:
    if not m.vtree.is_right_linear():
        raise ValueError("OBDD export needs a right-linear vtree")
    nodes: dict[int, tuple[int, int, int]] = {}
    out: dict[int, int] = {m.true.id: OBDD_TRUE, m.false.id: OBDD_FALSE}
    for n in m.descendants(a):
        if n.id in out:
            continue
        if n.kind == LITERAL:
            var = abs(n.literal)
            entry = (var, OBDD_FALSE, OBDD_TRUE) if n.literal > 0 else (var, OBDD_TRUE, OBDD_FALSE)
        else:
            primes = [p for p, _ in n.elements]
            if len(primes) != 2 or any(p.kind != LITERAL for p in primes) or primes[0].literal != -primes[1].literal:
                raise ValueError(f"decision node {n.id} does not have a literal pair as primes")
            subs = {p.literal > 0: out[s.id] for p, s in n.elements}
            entry = (abs(primes[0].literal), subs[False], subs[True])
        out[n.id] = len(nodes) + 2
        nodes[out[n.id]] = entry
    return Obdd(out[a.id], nodes, tuple(m.vtree.leaf_order()))


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------


def serialize_sdd(m: SddManager, a: SddNode) -> str:
    nodes = m.descendants(a)
    ids = {n.id: i for i, n in enumerate(nodes)}
    lines = [f"sdd {len(nodes)}"]
    for n in nodes:
        i = ids[n.id]
        if n.is_true:
            lines.append(f"T {i}")
        elif n.is_false:
            lines.append(f"F {i}")
        elif n.kind == LITERAL:
            lines.append(f"L {i} {n.vtree} {n.literal}")
        else:
            flat = " ".join(f"{ids[p.id]} {ids[s.id]}" for p, s in n.elements)
            lines.append(f"D {i} {n.vtree} {len(n.elements)} {flat}")
    return "\n".join(lines) + "\n"


def parse_sdd(text: str, m: SddManager) -> SddNode:
    """Rebuild an SDD file under ``m``; returns the node of the last line."""
    return parse_sdd_nodes(text, m)[0]


def parse_sdd_nodes(text: str, m: SddManager, extra: tuple[str, ...] = ()):
    """Parse SDD lines, returning ``(root, file id -> node, file id -> element order, extra lines)``.

    The element order lists ``(prime id, sub id)`` pairs as written in the file so
    per-element data can be matched to the canonical node. Lines whose opcode is
    in ``extra`` are returned untouched as ``(lineno, tokens)``.
    """
    count = None
    built: dict[int, SddNode] = {}
    orders: dict[int, list[tuple[int, int]]] = {}
    others: list[tuple[int, list[str]]] = []
    last = None
    for lineno, line in enumerate(text.splitlines(), 1):
        toks = line.split()
        if not toks or toks[0] == "c":
            continue
        op = toks[0]
        if op in extra:
            others.append((lineno, toks))
            continue
        try:
            nums = [int(t) for t in toks[1:]]
        except ValueError:
            raise FormatError(f"line {lineno}: non-integer field") from None
        if op == "sdd":
            if count is not None or len(nums) != 1:
                raise FormatError(f"line {lineno}: bad or duplicate header")
            count = nums[0]
            continue
        if count is None:
            raise FormatError(f"line {lineno}: node before header")
        if not nums or nums[0] in built:
            raise FormatError(f"line {lineno}: missing or duplicate node id")
        nid = nums[0]
        if op == "T" and len(nums) == 1:
            node = m.true
        elif op == "F" and len(nums) == 1:
            node = m.false
        elif op == "L" and len(nums) == 3:
            try:
                node = m.literal(nums[2])
            except KeyError as exc:
                raise FormatError(f"line {lineno}: {exc}") from None
            if node.vtree != nums[1]:
                raise FormatError(f"line {lineno}: literal {nums[2]} does not sit on vtree node {nums[1]}")
        elif op == "D" and len(nums) >= 3:
            u, size, flat = nums[1], nums[2], nums[3:]
            if u not in m.vtree.internals or len(flat) != 2 * size:
                raise FormatError(f"line {lineno}: bad decision node")
            try:
                elements = [(built[flat[2 * k]], built[flat[2 * k + 1]]) for k in range(size)]
            except KeyError:
                raise FormatError(f"line {lineno}: reference to undefined node") from None
            node = m._decision(u, elements)
            orders[nid] = [(p.id, s.id) for p, s in elements]
        else:
            raise FormatError(f"line {lineno}: bad opcode or arity")
        built[nid] = node
        last = node
    if count is None or last is None:
        raise FormatError("missing 'sdd' header or nodes")
    if len(built) != count:
        raise FormatError(f"header declares {count} nodes, found {len(built)}")
    return last, built, orders, others
