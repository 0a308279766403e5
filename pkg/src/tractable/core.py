"""Boolean-side data model: CNF formulas, NNF circuits, vtrees and their text codecs.

Variables are positive integers starting at 1 and literals are signed integers,
following the DIMACS convention used by c2d and the SDD library.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np


class FormatError(ValueError):
    """Raised when a text file does not follow its declared format."""


class PropertyError(ValueError):
    """Raised when a circuit lacks a property an operation relies on."""


# ---------------------------------------------------------------------------
# CNF
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CnfFormula:
    var_count: int
    clauses: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if self.var_count < 0:
            raise ValueError("negative variable count")
        for clause in self.clauses:
            for lit in clause:
                if lit == 0 or abs(lit) > self.var_count:
                    raise ValueError(f"literal {lit} out of range 1..{self.var_count}")

    def is_satisfied(self, assignment: Mapping[int, bool]) -> bool:
        return all(any(assignment[abs(l)] == (l > 0) for l in clause) for clause in self.clauses)


def _tokens(text: str) -> Iterable[tuple[int, list[str]]]:
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if stripped and not stripped.startswith("c") and not stripped.startswith("%"):
            yield lineno, stripped.split()


def parse_cnf(text: str) -> CnfFormula:
    """Parse DIMACS CNF text. Clauses may span lines; each ends with ``0``."""
    header = None
    clauses: list[tuple[int, ...]] = []
    current: list[int] = []
    for lineno, toks in _tokens(text):
        if toks[0] == "p":
            if header is not None:
                raise FormatError(f"line {lineno}: duplicate header")
            if len(toks) != 4 or toks[1] != "cnf":
                raise FormatError(f"line {lineno}: bad header {' '.join(toks)!r}")
            try:
                header = (int(toks[2]), int(toks[3]))
            except ValueError:
                raise FormatError(f"line {lineno}: non-integer header field") from None
            continue
        if header is None:
            raise FormatError(f"line {lineno}: clause before header")
        for tok in toks:
            try:
                lit = int(tok)
            except ValueError:
                raise FormatError(f"line {lineno}: non-integer token {tok!r}") from None
            if lit == 0:
                clauses.append(tuple(current))
                current = []
            elif abs(lit) > header[0]:
                raise FormatError(f"line {lineno}: literal {lit} out of range 1..{header[0]}")
            else:
                current.append(lit)
    if header is None:
        raise FormatError("missing 'p cnf' header")
    if current:
        clauses.append(tuple(current))
    if len(clauses) != header[1]:
        raise FormatError(f"header declares {header[1]} clauses, found {len(clauses)}")
    return CnfFormula(header[0], tuple(clauses))


def serialize_cnf(f: CnfFormula) -> str:
    lines = [f"p cnf {f.var_count} {len(f.clauses)}"]
    lines += [" ".join(map(str, clause + (0,))) for clause in f.clauses]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# NNF circuits
# ---------------------------------------------------------------------------

LIT, AND, OR = "L", "A", "O"


@dataclass(frozen=True)
class NnfNode:
    """One gate. ``And()`` is the constant true and ``Or()`` the constant false."""

    kind: str
    literal: int = 0
    children: tuple[int, ...] = ()
    decision: int = 0

    @property
    def is_true(self) -> bool:
        return self.kind == AND and not self.children

    @property
    def is_false(self) -> bool:
        return self.kind == OR and not self.children


@dataclass(frozen=True)
class NnfCircuit:
    """An NNF circuit stored as a node arena in topological order; the root is last.

    ``names`` optionally maps variable indices to display names; it only affects
    parsing of evidence strings and the ``c var`` comment lines of the codec.
    """

    var_count: int
    nodes: tuple[NnfNode, ...]
    names: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("circuit needs at least one node")
        for i, node in enumerate(self.nodes):
            if node.kind == LIT:
                if node.literal == 0 or abs(node.literal) > self.var_count:
                    raise ValueError(f"node {i}: literal {node.literal} out of range")
            elif node.kind in (AND, OR):
                if any(not 0 <= ch < i for ch in node.children):
                    raise ValueError(f"node {i}: child is not an earlier node")
                if node.decision and not 0 < node.decision <= self.var_count:
                    raise ValueError(f"node {i}: decision variable out of range")
            else:
                raise ValueError(f"node {i}: unknown kind {node.kind!r}")

    @property
    def root(self) -> int:
        return len(self.nodes) - 1

    @property
    def edge_count(self) -> int:
        return sum(len(n.children) for n in self.nodes)

    @property
    def name_map(self) -> dict[int, str]:
        return dict(self.names)

    @cached_property
    def node_vars(self) -> tuple[frozenset[int], ...]:
        """Variables mentioned below each node."""
        out: list[frozenset[int]] = []
        for node in self.nodes:
            if node.kind == LIT:
                out.append(frozenset((abs(node.literal),)))
            elif not node.children:
                out.append(frozenset())
            else:
                out.append(frozenset().union(*(out[c] for c in node.children)))
        return tuple(out)

    @cached_property
    def parents(self) -> tuple[tuple[int, ...], ...]:
        acc: list[list[int]] = [[] for _ in self.nodes]
        for i, node in enumerate(self.nodes):
            for ch in node.children:
                acc[ch].append(i)
        return tuple(tuple(p) for p in acc)


def node_vars(c: NnfCircuit) -> tuple[frozenset[int], ...]:
    return c.node_vars


class NnfBuilder:
    """Incremental constructor for :class:`NnfCircuit` with optional hash-consing."""

    def __init__(self, var_count: int, share: bool = True):
        self.var_count = var_count
        self.share = share
        self.nodes: list[NnfNode] = []
        self._index: dict[NnfNode, int] = {}

    def add(self, node: NnfNode) -> int:
        if self.share:
            found = self._index.get(node)
            if found is not None:
                return found
        self.nodes.append(node)
        self._index.setdefault(node, len(self.nodes) - 1)
        return len(self.nodes) - 1

    def literal(self, lit: int) -> int:
        return self.add(NnfNode(LIT, literal=lit))

    def true(self) -> int:
        return self.add(NnfNode(AND))

    def false(self) -> int:
        return self.add(NnfNode(OR))

    def conj(self, children: Sequence[int]) -> int:
        return self.add(NnfNode(AND, children=tuple(children)))

    def disj(self, children: Sequence[int], decision: int = 0) -> int:
        return self.add(NnfNode(OR, children=tuple(children), decision=decision))

    def build(self, root: int | None = None, names: Mapping[int, str] | None = None) -> NnfCircuit:
        """Keep the nodes reachable from ``root`` (default: last node), renumbered."""
        if root is None:
            root = len(self.nodes) - 1
        reachable = {root}
        for i in range(root, -1, -1):
            if i in reachable:
                reachable.update(self.nodes[i].children)
        order = sorted(reachable)
        remap = {old: new for new, old in enumerate(order)}
        nodes = []
        for old in order:
            n = self.nodes[old]
            nodes.append(NnfNode(n.kind, n.literal, tuple(remap[c] for c in n.children), n.decision))
        return NnfCircuit(self.var_count, tuple(nodes), tuple(sorted((names or {}).items())))


def parse_nnf(text: str) -> NnfCircuit:
    """Parse c2d NNF text. ``c var <index> <name>`` comment lines declare names."""
    header = None
    nodes: list[NnfNode] = []
    names: dict[int, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        toks = line.split()
        if not toks:
            continue
        if toks[0] == "c":
            if len(toks) == 4 and toks[1] == "var":
                names[int(toks[2])] = toks[3]
            continue
        try:
            nums = [int(t) for t in toks[1:]]
        except ValueError:
            raise FormatError(f"line {lineno}: non-integer field") from None
        op = toks[0]
        if op == "nnf":
            if header is not None or len(nums) != 3:
                raise FormatError(f"line {lineno}: bad or duplicate header")
            header = nums
            continue
        if header is None:
            raise FormatError(f"line {lineno}: node before header")
        i = len(nodes)
        if op == "L":
            if len(nums) != 1 or nums[0] == 0 or abs(nums[0]) > header[2]:
                raise FormatError(f"line {lineno}: bad literal")
            nodes.append(NnfNode(LIT, literal=nums[0]))
            continue
        if op == "A":
            decision, rest = 0, nums
        elif op == "O":
            if not nums:
                raise FormatError(f"line {lineno}: bad or-node")
            decision, rest = nums[0], nums[1:]
            if not 0 <= decision <= header[2]:
                raise FormatError(f"line {lineno}: decision variable out of range")
        else:
            raise FormatError(f"line {lineno}: bad opcode {op!r}")
        if not rest or rest[0] != len(rest) - 1:
            raise FormatError(f"line {lineno}: child count disagrees with children listed")
        children = tuple(rest[1:])
        if any(not 0 <= ch < i for ch in children):
            raise FormatError(f"line {lineno}: forward or invalid child reference")
        nodes.append(NnfNode(op, children=children, decision=decision))
    if header is None:
        raise FormatError("missing 'nnf' header")
    if len(nodes) != header[0]:
        raise FormatError(f"header declares {header[0]} nodes, found {len(nodes)}")
    edges = sum(len(n.children) for n in nodes)
    if edges != header[1]:
        raise FormatError(f"header declares {header[1]} edges, found {edges}")
    return NnfCircuit(header[2], tuple(nodes), tuple(sorted(names.items())))


def serialize_nnf(c: NnfCircuit) -> str:
    lines = [f"nnf {len(c.nodes)} {c.edge_count} {c.var_count}"]
    lines += [f"c var {v} {name}" for v, name in c.names]
    for node in c.nodes:
        if node.kind == LIT:
            lines.append(f"L {node.literal}")
        elif node.kind == AND:
            lines.append(" ".join(map(str, ["A", len(node.children), *node.children])))
        else:
            lines.append(" ".join(map(str, ["O", node.decision, len(node.children), *node.children])))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate(c: NnfCircuit, assignment: Mapping[int, bool]) -> bool:
    missing = [v for v in range(1, c.var_count + 1) if v not in assignment]
    if missing:
        raise ValueError(f"incomplete assignment, unbound variables {missing}")
    vals: list[bool] = []
    for node in c.nodes:
        if node.kind == LIT:
            vals.append(bool(assignment[abs(node.literal)]) == (node.literal > 0))
        elif node.kind == AND:
            vals.append(all(vals[ch] for ch in node.children))
        else:
            vals.append(any(vals[ch] for ch in node.children))
    return vals[-1]


def assignment_rows(n: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Boolean matrix of complete assignments in lexicographic order.

    Column ``i`` holds variable ``i + 1``; variable 1 is the most significant bit.
    """
    if stop is None:
        stop = 1 << n
    idx = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts[None, :]) & 1).astype(bool)


def evaluate_rows(c: NnfCircuit, rows: np.ndarray) -> list[np.ndarray]:
    """Per-node truth values over a batch of complete assignments."""
    m = rows.shape[0]
    vals: list[np.ndarray] = []
    for node in c.nodes:
        if node.kind == LIT:
            col = rows[:, abs(node.literal) - 1]
            vals.append(col if node.literal > 0 else ~col)
        elif node.kind == AND:
            acc = np.ones(m, dtype=bool)
            for ch in node.children:
                acc = acc & vals[ch]
            vals.append(acc)
        else:
            acc = np.zeros(m, dtype=bool)
            for ch in node.children:
                acc = acc | vals[ch]
            vals.append(acc)
    return vals


CHUNK = 1 << 14


def truth_table(c: NnfCircuit, cap: int = 20) -> np.ndarray:
    """Root value under all ``2**n`` assignments, lexicographic order."""
    n = c.var_count
    if n > cap:
        raise ValueError(f"{n} variables exceed enumeration cap {cap}")
    total = 1 << n
    out = np.empty(total, dtype=bool)
    for start in range(0, total, CHUNK):
        stop = min(total, start + CHUNK)
        out[start:stop] = evaluate_rows(c, assignment_rows(n, start, stop))[-1]
    return out


def row_assignment(n: int, index: int) -> dict[int, bool]:
    return {v: bool((index >> (n - v)) & 1) for v in range(1, n + 1)}


def parse_assignment(text: str, names: Mapping[int, str] | None = None) -> dict[int, bool]:
    """Parse ``"A=1,K=0"``; keys are variable names or indices, values 0/1."""
    lookup = {name: v for v, name in (names or {}).items()}
    out: dict[int, bool] = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        key, sep, value = part.partition("=")
        if not sep:
            raise ValueError(f"bad evidence item {part!r}")
        key, value = key.strip(), value.strip().lower()
        var = lookup[key] if key in lookup else int(key)
        if value not in ("0", "1", "true", "false"):
            raise ValueError(f"bad value {value!r} for {key}")
        if var in out:
            raise ValueError(f"variable {key} bound twice")
        out[var] = value in ("1", "true")
    return out


# ---------------------------------------------------------------------------
# Vtrees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Vtree:
    """Full binary tree over variables. Leaves map node id -> var; internals map id -> (left, right)."""

    leaves: Mapping[int, int]
    internals: Mapping[int, tuple[int, int]]
    root: int
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        seen_vars = list(self.leaves.values())
        if len(set(seen_vars)) != len(seen_vars):
            raise ValueError("duplicate variable on vtree leaves")
        if set(self.leaves) & set(self.internals):
            raise ValueError("node id used twice")
        # full binary tree reachable from root, each node visited once
        visited = set()
        stack = [self.root]
        while stack:
            u = stack.pop()
            if u in visited:
                raise ValueError(f"vtree node {u} reached twice (cycle or sharing)")
            visited.add(u)
            if u in self.internals:
                stack.extend(self.internals[u])
            elif u not in self.leaves:
                raise ValueError(f"unknown vtree node {u}")
        if visited != set(self.leaves) | set(self.internals):
            raise ValueError("vtree has nodes unreachable from its root")

    # construction helpers
    @classmethod
    def from_nested(cls, nested) -> "Vtree":
        """Build from nested pairs, e.g. ``((3, 2), (4, 1))``; ids assigned in post-order."""
        leaves: dict[int, int] = {}
        internals: dict[int, tuple[int, int]] = {}

        def walk(s) -> int:
            if isinstance(s, int):
                leaves[len(leaves) + len(internals)] = s
                return len(leaves) + len(internals) - 1
            left, right = walk(s[0]), walk(s[1])
            nid = len(leaves) + len(internals)
            internals[nid] = (left, right)
            return nid

        root = walk(nested)
        return cls(leaves, internals, root)

    @classmethod
    def balanced(cls, variables: Sequence[int]) -> "Vtree":
        def nest(vs):
            if len(vs) == 1:
                return vs[0]
            mid = len(vs) // 2
            return (nest(vs[:mid]), nest(vs[mid:]))

        return cls.from_nested(nest(list(variables)))

    @classmethod
    def right_linear(cls, variables: Sequence[int]) -> "Vtree":
        vs = list(variables)
        nested = vs[-1]
        for v in reversed(vs[:-1]):
            nested = (v, nested)
        return cls.from_nested(nested)

    # queries
    def is_leaf(self, u: int) -> bool:
        return u in self.leaves

    def left(self, u: int) -> int:
        return self.internals[u][0]

    def right(self, u: int) -> int:
        return self.internals[u][1]

    @property
    def variables(self) -> frozenset[int]:
        return frozenset(self.leaves.values())

    def _post_order(self) -> list[int]:
        if "post" not in self._cache:
            out: list[int] = []
            stack = [(self.root, False)]
            while stack:
                u, done = stack.pop()
                if done or u in self.leaves:
                    out.append(u)
                else:
                    stack.append((u, True))
                    l, r = self.internals[u]
                    stack.append((r, False))
                    stack.append((l, False))
            self._cache["post"] = out
        return self._cache["post"]

    def post_order(self) -> list[int]:
        return list(self._post_order())

    def vars_of(self, u: int) -> frozenset[int]:
        table = self._cache.get("vars")
        if table is None:
            table = {}
            for w in self._post_order():
                if w in self.leaves:
                    table[w] = frozenset((self.leaves[w],))
                else:
                    l, r = self.internals[w]
                    table[w] = table[l] | table[r]
            self._cache["vars"] = table
        return table[u]

    def _parent_depth(self):
        if "parent" not in self._cache:
            parent = {self.root: None}
            depth = {self.root: 0}
            for u in reversed(self._post_order()):
                if u in self.internals:
                    for ch in self.internals[u]:
                        parent[ch] = u
                        depth[ch] = depth[u] + 1
            self._cache["parent"] = parent
            self._cache["depth"] = depth
            self._cache["leaf_of"] = {v: u for u, v in self.leaves.items()}
            order = [u for u in self._in_order()]
            self._cache["pos"] = {u: i for i, u in enumerate(order)}
        return self._cache["parent"], self._cache["depth"]

    def _in_order(self) -> list[int]:
        out: list[int] = []
        stack: list[tuple[int, bool]] = [(self.root, False)]
        while stack:
            u, expanded = stack.pop()
            if u in self.leaves or expanded:
                out.append(u)
                continue
            l, r = self.internals[u]
            stack.append((r, False))
            stack.append((u, True))
            stack.append((l, False))
        return out

    def parent(self, u: int) -> int | None:
        return self._parent_depth()[0][u]

    def depth(self, u: int) -> int:
        return self._parent_depth()[1][u]

    def leaf_of(self, var: int) -> int:
        self._parent_depth()
        try:
            return self._cache["leaf_of"][var]
        except KeyError:
            raise KeyError(f"variable {var} not in vtree") from None

    def leaf_order(self) -> list[int]:
        """Variables in left-to-right leaf order."""
        return [self.leaves[u] for u in self._in_order() if u in self.leaves]

    def position(self, u: int) -> int:
        """In-order position; descendants of ``u`` on its left have smaller positions."""
        self._parent_depth()
        return self._cache["pos"][u]

    def is_ancestor(self, u: int, w: int) -> bool:
        """True iff ``u`` is a (non-strict) ancestor of ``w``."""
        parent, depth = self._parent_depth()
        while depth[w] > depth[u]:
            w = parent[w]
        return w == u

    def lca(self, u: int, w: int) -> int:
        parent, depth = self._parent_depth()
        while depth[u] > depth[w]:
            u = parent[u]
        while depth[w] > depth[u]:
            w = parent[w]
        while u != w:
            u, w = parent[u], parent[w]
        return u

    def lca_of_vars(self, variables: Iterable[int]) -> int:
        nodes = [self.leaf_of(v) for v in variables]
        if not nodes:
            raise ValueError("empty variable set has no lca")
        acc = nodes[0]
        for u in nodes[1:]:
            acc = self.lca(acc, u)
        return acc

    def is_right_linear(self) -> bool:
        return all(l in self.leaves for l, _ in self.internals.values())

    def constrained_node(self, x: Iterable[int]) -> int | None:
        """Node on the right spine whose outside variables are exactly ``x``, if any."""
        x = frozenset(x)
        if not x <= self.variables:
            raise ValueError("X is not a subset of the vtree variables")
        u = self.root
        while True:
            if self.variables - self.vars_of(u) == x:
                return u
            if u in self.leaves:
                return None
            u = self.right(u)


@dataclass(frozen=True)
class VtreeClass:
    right_linear: bool
    constrained_for_X: bool
    constrained_node: int | None = None


def vtree_classify(v: Vtree, x: Iterable[int] = ()) -> VtreeClass:
    u = v.constrained_node(x)
    return VtreeClass(v.is_right_linear(), u is not None, u)


def parse_vtree(text: str) -> Vtree:
    """Parse SDD-library vtree text (``vtree N``, ``L id var``, ``I id left right``).

    The root is the one node no other node references.
    """
    count = None
    leaves: dict[int, int] = {}
    internals: dict[int, tuple[int, int]] = {}
    for lineno, toks in _tokens(text):
        op = toks[0]
        try:
            nums = [int(t) for t in toks[1:]]
        except ValueError:
            raise FormatError(f"line {lineno}: non-integer field") from None
        if op == "vtree":
            if count is not None or len(nums) != 1:
                raise FormatError(f"line {lineno}: bad or duplicate header")
            count = nums[0]
        elif op == "L":
            if len(nums) != 2:
                raise FormatError(f"line {lineno}: leaf needs id and variable")
            if nums[0] in leaves or nums[0] in internals:
                raise FormatError(f"line {lineno}: duplicate node id {nums[0]}")
            leaves[nums[0]] = nums[1]
        elif op == "I":
            if len(nums) != 3:
                raise FormatError(f"line {lineno}: internal node needs exactly two children")
            if nums[0] in leaves or nums[0] in internals:
                raise FormatError(f"line {lineno}: duplicate node id {nums[0]}")
            internals[nums[0]] = (nums[1], nums[2])
        else:
            raise FormatError(f"line {lineno}: bad opcode {op!r}")
    if count is None:
        raise FormatError("missing 'vtree' header")
    if len(leaves) + len(internals) != count:
        raise FormatError(f"header declares {count} nodes, found {len(leaves) + len(internals)}")
    referenced = [ch for pair in internals.values() for ch in pair]
    for ch in referenced:
        if ch not in leaves and ch not in internals:
            raise FormatError(f"reference to undeclared node {ch}")
    roots = set(leaves) | set(internals)
    roots -= set(referenced)
    if len(roots) != 1:
        raise FormatError("vtree must have exactly one root (cycle or forest)")
    try:
        v = Vtree(leaves, internals, roots.pop())
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    if sorted(v.variables) != list(range(1, len(v.variables) + 1)):
        raise FormatError("leaf variables must be exactly 1..n")
    return v


def serialize_vtree(v: Vtree) -> str:
    lines = [f"vtree {len(v.leaves) + len(v.internals)}"]
    for u in v.post_order():
        if u in v.leaves:
            lines.append(f"L {u} {v.leaves[u]}")
        else:
            lines.append(f"I {u} {v.internals[u][0]} {v.internals[u][1]}")
    return "\n".join(lines) + "\n"
