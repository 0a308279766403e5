"""Linear-time counting and optimisation passes over decomposable circuits."""

from __future__ import annotations

import logging
from fractions import Fraction
from typing import Iterable, Mapping

from .analysis import (
    effective_vars,
    check_decision,
    check_decomposability,
    check_determinism_exhaustive,
    check_smoothness,
    check_x_constrained,
    sat_flags,
)
from .core import AND, LIT, OR, FormatError, NnfCircuit, PropertyError, row_assignment, truth_table

log = logging.getLogger(__name__)

# Above this many variables, determinism must be certified by the decision
# property or acknowledged by the caller.
DETERMINISM_ORACLE_CAP = 16


def _require_decomposable(c: NnfCircuit) -> None:
    report = check_decomposability(c)
    if not report.holds:
        raise PropertyError("circuit is not decomposable:\n" + report.render())


def _require_smooth(c: NnfCircuit) -> None:
    # unsatisfiable inputs always count 0, so they are exempt
    report = check_smoothness(c, exclude_unsat=True)
    if not report.holds:
        raise PropertyError("circuit is not smooth (run smooth first):\n" + report.render())


def _require_deterministic(c: NnfCircuit, assume: bool) -> None:
    if assume or check_decision(c).holds:
        return
    if c.var_count <= DETERMINISM_ORACLE_CAP:
        report = check_determinism_exhaustive(c, cap=DETERMINISM_ORACLE_CAP)
        if report.holds:
            return
        raise PropertyError("circuit is not deterministic:\n" + report.render())
    raise PropertyError(
        "determinism cannot be certified (no decision property, too many variables "
        "for enumeration); pass assume_deterministic=True to proceed"
    )


def _counting_preconditions(c: NnfCircuit, assume_deterministic: bool) -> None:
    _require_decomposable(c)
    _require_smooth(c)
    _require_deterministic(c, assume_deterministic)


def _mentioned(c: NnfCircuit) -> frozenset[int]:
    return effective_vars(c, sat_flags(c))[-1]


def _forward(c: NnfCircuit, leaf, one, zero) -> list:
    vals: list = []
    for node in c.nodes:
        if node.kind == LIT:
            vals.append(leaf(node.literal))
        elif node.kind == AND:
            acc = one
            for ch in node.children:
                acc = acc * vals[ch]
            vals.append(acc)
        else:
            acc = zero
            for ch in node.children:
                acc = acc + vals[ch]
            vals.append(acc)
    return vals


def parse_weights(text: str, var_count: int, exact: bool = False) -> dict[int, object]:
    """Read ``<signed literal> <weight>`` lines; unlisted literals weigh 1 (with a warning)."""
    weights: dict[int, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        toks = line.split()
        if not toks or toks[0] in ("c", "#"):
            continue
        if len(toks) != 2:
            raise FormatError(f"line {lineno}: expected '<literal> <weight>'")
        try:
            lit = int(toks[0])
            w = Fraction(toks[1]) if exact else float(Fraction(toks[1]))
        except (ValueError, ZeroDivisionError):
            raise FormatError(f"line {lineno}: bad literal or weight") from None
        if lit == 0 or abs(lit) > var_count:
            raise FormatError(f"line {lineno}: literal {lit} out of range")
        if w < 0:
            raise FormatError(f"line {lineno}: negative weight")
        weights[lit] = w
    missing = [lit for v in range(1, var_count + 1) for lit in (v, -v) if lit not in weights]
    if missing:
        log.warning("literals without a weight default to 1: %s", " ".join(map(str, missing)))
        for lit in missing:
            weights[lit] = Fraction(1) if exact else 1.0
    return weights


def _check_evidence(c: NnfCircuit, evidence: Mapping[int, bool]) -> None:
    bad = [v for v in evidence if not 1 <= v <= c.var_count]
    if bad:
        raise ValueError(f"evidence mentions unknown variables {bad}")


def sat(c: NnfCircuit) -> bool:
    _require_decomposable(c)
    return sat_flags(c)[-1]


def model_count(c: NnfCircuit, evidence: Mapping[int, bool] | None = None,
                assume_deterministic: bool = False) -> int:
    """Number of complete assignments over all ``var_count`` variables that satisfy ``c``
    and agree with ``evidence``."""
    evidence = evidence or {}
    _check_evidence(c, evidence)
    _counting_preconditions(c, assume_deterministic)

    def leaf(lit: int) -> int:
        var = abs(lit)
        return int(var not in evidence or evidence[var] == (lit > 0))

    root = _forward(c, leaf, 1, 0)[-1]
    free = set(range(1, c.var_count + 1)) - _mentioned(c) - set(evidence)
    return root * (1 << len(free))


def conditioned_count(c: NnfCircuit, evidence: Mapping[int, bool], assume_deterministic: bool = False) -> int:
    return model_count(c, evidence, assume_deterministic)


def _literal_weights(c: NnfCircuit, weights: Mapping[int, object], evidence: Mapping[int, bool], exact: bool) -> dict:
    out = {}
    for var in range(1, c.var_count + 1):
        for lit in (var, -var):
            if lit not in weights:
                raise ValueError(f"missing weight for literal {lit}")
            w = weights[lit]
            if w < 0:
                raise ValueError(f"negative weight {w} for literal {lit}")
            w = Fraction(w) if exact else float(w)
            if var in evidence and evidence[var] != (lit > 0):
                w = w * 0
            out[lit] = w
    return out


def weighted_count(c: NnfCircuit, weights: Mapping[int, object], evidence: Mapping[int, bool] | None = None,
                   exact: bool = False, assume_deterministic: bool = False):
    """Sum over satisfying completions of ``evidence`` of the product of literal weights."""
    evidence = evidence or {}
    _check_evidence(c, evidence)
    _counting_preconditions(c, assume_deterministic)
    w = _literal_weights(c, weights, evidence, exact)
    zero = Fraction(0) if exact else 0.0
    one = zero + 1
    value = _forward(c, w.__getitem__, one, zero)[-1]
    for var in sorted(set(range(1, c.var_count + 1)) - _mentioned(c)):
        value = value * (w[var] + w[-var])
    return value


def literal_marginal_counts(c: NnfCircuit, weights: Mapping[int, object], evidence: Mapping[int, bool] | None = None,
                            exact: bool = False, assume_deterministic: bool = False) -> dict[int, object]:
    """Weighted count with each literal additionally asserted, for every literal at once.

    One forward pass computes node values; one backward pass computes the partial
    derivative of the root with respect to every node.
    """
    evidence = evidence or {}
    _check_evidence(c, evidence)
    _counting_preconditions(c, assume_deterministic)
    w = _literal_weights(c, weights, evidence, exact)
    zero = Fraction(0) if exact else 0.0
    one = zero + 1
    vals = _forward(c, w.__getitem__, one, zero)

    deriv = [zero] * len(c.nodes)
    deriv[-1] = one
    for i in range(len(c.nodes) - 1, -1, -1):
        node = c.nodes[i]
        d = deriv[i]
        if node.kind == OR:
            for ch in node.children:
                deriv[ch] = deriv[ch] + d
        elif node.kind == AND and node.children:
            kids = node.children
            # prefix/suffix products avoid dividing by zero-valued siblings
            prefix = [one]
            for ch in kids[:-1]:
                prefix.append(prefix[-1] * vals[ch])
            suffix = one
            for k in range(len(kids) - 1, -1, -1):
                deriv[kids[k]] = deriv[kids[k]] + d * prefix[k] * suffix
                suffix = suffix * vals[kids[k]]

    mentioned = _mentioned(c)
    free = [v for v in range(1, c.var_count + 1) if v not in mentioned]
    factors = [w[v] + w[-v] for v in free]
    # product of all free factors except position k
    excl = [one] * len(free)
    acc = one
    for k, f in enumerate(factors):
        excl[k] = acc
        acc = acc * f
    acc = one
    for k in range(len(factors) - 1, -1, -1):
        excl[k] = excl[k] * acc
        acc = acc * factors[k]
    all_free = excl[0] * factors[0] if factors else one

    result = {lit: zero for v in range(1, c.var_count + 1) for lit in (v, -v)}
    for i, node in enumerate(c.nodes):
        if node.kind == LIT:
            result[node.literal] = result[node.literal] + deriv[i] * vals[i]
    for lit in list(result):
        if abs(lit) in mentioned:
            result[lit] = result[lit] * all_free
    for k, v in enumerate(free):
        for lit in (v, -v):
            result[lit] = vals[-1] * excl[k] * w[lit]
    return result


def _x_below_y(c: NnfCircuit, decisions: Mapping[int, int], x: frozenset[int]) -> list[int]:
    """Literal nodes over ``x`` that sit below an or-gate deciding a variable outside ``x``."""
    below_y = [False] * len(c.nodes)
    bad = []
    for i in range(len(c.nodes) - 1, -1, -1):
        node = c.nodes[i]
        if node.kind == LIT and below_y[i] and abs(node.literal) in x:
            bad.append(i)
        var = decisions.get(i)
        if below_y[i] or (var is not None and var not in x):
            for ch in node.children:
                below_y[ch] = True
    return bad


def e_majsat(c: NnfCircuit, x: Iterable[int], weights: Mapping[int, object] | None = None,
             exact: bool = False) -> tuple[object, dict[int, bool]]:
    """Maximise over ``x`` the weighted count summed over the remaining variables.

    Sums at or-gates deciding other variables, maximises at or-gates deciding
    ``x`` and multiplies at and-gates. Ties go to the lowest node id.
    """
    x = frozenset(x)
    if weights is None:
        weights = {lit: 1 for v in range(1, c.var_count + 1) for lit in (v, -v)}
    _require_decomposable(c)
    report = check_decision(c)
    if not report.holds:
        raise PropertyError("circuit lacks the decision property:\n" + report.render())
    if not check_x_constrained(c, x):
        raise PropertyError(f"circuit is not constrained for X={sorted(x)}")
    decisions = report.details["decisions"]
    bad = _x_below_y(c, decisions, x)
    if bad:
        raise PropertyError(f"X literals appear below non-X decisions at nodes {bad}")
    _require_smooth(c)
    w = _literal_weights(c, weights, {}, exact)
    zero = Fraction(0) if exact else 0.0
    one = zero + 1

    vals: list = []
    choice: dict[int, int] = {}
    for i, node in enumerate(c.nodes):
        if node.kind == LIT:
            vals.append(w[node.literal])
        elif node.kind == AND:
            acc = one
            for ch in node.children:
                acc = acc * vals[ch]
            vals.append(acc)
        elif decisions.get(i) in x:
            best = min(node.children, key=lambda ch: (-vals[ch], ch))
            choice[i] = best
            vals.append(vals[best])
        else:
            acc = zero
            for ch in node.children:
                acc = acc + vals[ch]
            vals.append(acc)

    value = vals[-1]
    witness: dict[int, bool] = {}
    stack = [c.root]
    seen = set()
    while stack:
        i = stack.pop()
        if i in seen:
            continue
        seen.add(i)
        node = c.nodes[i]
        if node.kind == LIT:
            if abs(node.literal) in x:
                witness[abs(node.literal)] = node.literal > 0
        elif node.kind == AND:
            stack.extend(node.children)
        elif i in choice:
            stack.append(choice[i])

    for var in sorted(set(range(1, c.var_count + 1)) - _mentioned(c)):
        if var in x:
            positive = w[var] > w[-var]
            witness[var] = positive
            value = value * (w[var] if positive else w[-var])
        else:
            value = value * (w[var] + w[-var])
    return value, dict(sorted(witness.items()))


def enumerate_models(c: NnfCircuit, cap: int = 20) -> list[dict[int, bool]]:
    """Satisfying complete assignments in lexicographic order (variable 1 most significant)."""
    if c.var_count > cap:
        raise ValueError(f"{c.var_count} variables exceed enumeration cap {cap}")
    table = truth_table(c, cap)
    return [row_assignment(c.var_count, int(i)) for i in table.nonzero()[0]]
