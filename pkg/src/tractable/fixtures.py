"""Small reference objects used by the tests, the acceptance suite and the CLI demos.

The Boolean function shared by the NNF and SDD fixtures is
``(P or L) and (A implies P) and (K implies A or L)`` with variables
A=1, K=2, L=3, P=4. It has 9 models out of 16.
"""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path

from .ac import AcBuilder, ArithmeticCircuit, DiscreteVar, Factor, depth_two_circuit, multiply_circuits
from .core import CnfFormula, NnfCircuit, Vtree, parse_nnf, serialize_vtree
from .sdd import SddManager, SddNode

NAMES = {1: "A", 2: "K", 3: "L", 4: "P"}
VARS = {name: var for var, name in NAMES.items()}

DELTA_CNF = CnfFormula(4, ((4, 3), (-1, 4), (-2, 1, 3)))

# Structured but not smooth: the decision on A lacks K on one side.
DELTA_NNF = """nnf 19 23 4
c var 1 A
c var 2 K
c var 3 L
c var 4 P
L 3
L -3
L 2
L -2
L 4
L -4
L 1
L -1
O 1 2 6 7
A 2 4 8
A 2 5 7
O 4 2 9 10
A 2 0 11
A 2 1 3
A 2 13 4
A 2 1 2
A 2 4 6
A 2 15 16
O 0 3 12 14 17
"""

# Same function after smoothing; decomposable, deterministic and smooth.
DELTA_SMOOTH_NNF = """nnf 21 27 4
c var 1 A
c var 2 K
c var 3 L
c var 4 P
L 3
L -3
L 2
L -2
L 4
L -4
L 1
L -1
O 1 2 6 7
O 2 2 2 3
A 2 4 8
A 2 5 7
O 4 2 10 11
A 2 0 9
A 2 13 12
A 2 1 3
A 2 15 10
A 2 1 2
A 2 4 6
A 2 17 18
O 0 3 14 16 19
"""


def delta_nnf() -> NnfCircuit:
    return parse_nnf(DELTA_NNF)


def delta_smooth_nnf() -> NnfCircuit:
    return parse_nnf(DELTA_SMOOTH_NNF)


def delta_vtree() -> Vtree:
    """Balanced vtree with L, K on the left and P, A on the right."""
    return Vtree.from_nested(((3, 2), (4, 1)))


def constrained_vtree() -> Vtree:
    """Vtree over 1..5 constrained for X = {1, 2, 4}."""
    return Vtree.from_nested((((1, 2), 4), (3, 5)))


def linear_vtree() -> Vtree:
    return Vtree.right_linear([1, 2, 3, 4])


def delta_sdd(m: SddManager | None = None) -> tuple[SddManager, SddNode]:
    m = m or SddManager(delta_vtree())
    lit = m.literal
    p_or_l = m.disjoin(lit(4), lit(3))
    a_imp_p = m.disjoin(lit(-1), lit(4))
    k_imp = m.disjoin(lit(-2), m.disjoin(lit(1), lit(3)))
    return m, m.conjoin(p_or_l, m.conjoin(a_imp_p, k_imp))


# ---------------------------------------------------------------------------
# Factors and arithmetic circuits over A (a, ~a) and B (b, ~b)
# ---------------------------------------------------------------------------

VAR_A = DiscreteVar("A", ("a", "~a"))
VAR_B = DiscreteVar("B", ("b", "~b"))


def factor_f1() -> Factor:
    return Factor((VAR_A,), (1, 2))


def factor_f2() -> Factor:
    return Factor((VAR_A, VAR_B), (3, 4, 5, 6))


def factor_f() -> Factor:
    return Factor((VAR_A, VAR_B), (3, 4, 10, 12))


def ac1() -> ArithmeticCircuit:
    """Depth-two circuit for ``f`` plus a term naming both values of B."""
    b = AcBuilder((VAR_A, VAR_B))
    la, lna, lb, lnb = b.indicator("A", 0), b.indicator("A", 1), b.indicator("B", 0), b.indicator("B", 1)
    terms = [
        b.mul([b.const(3), la, lb]),
        b.mul([b.const(4), la, lnb]),
        b.mul([b.const(10), lna, lb]),
        b.mul([b.const(12), lna, lnb]),
        b.mul([la, lb, lnb]),
    ]
    return b.build(b.add(terms))


def ac2() -> ArithmeticCircuit:
    """Factored circuit for ``f``: decomposable, smooth and deterministic."""
    b = AcBuilder((VAR_A, VAR_B))
    la, lna, lb, lnb = b.indicator("A", 0), b.indicator("A", 1), b.indicator("B", 0), b.indicator("B", 1)
    left = b.mul([la, b.add([b.mul([b.const(3), lb]), b.mul([b.const(4), lnb])])])
    right = b.mul([lna, b.add([b.mul([b.const(10), lb]), b.mul([b.const(12), lnb])])])
    return b.build(b.add([left, right]))


def ac3() -> ArithmeticCircuit:
    """Decomposable and smooth but not deterministic; its factor is (3, 17, 14, 78)."""
    b = AcBuilder((VAR_A, VAR_B))
    la, lna, lb, lnb = b.indicator("A", 0), b.indicator("A", 1), b.indicator("B", 0), b.indicator("B", 1)

    def lin(x, cx, y, cy):
        return b.add([x if cx == 1 else b.mul([b.const(cx), x]), y if cy == 1 else b.mul([b.const(cy), y])])

    first = b.mul([lin(la, 1, lna, 5), lin(lb, 1, lnb, 3)])
    second = b.mul([lin(la, 2, lna, 9), lin(lb, 1, lnb, 7)])
    return b.build(b.add([first, second]))


def product_form() -> ArithmeticCircuit:
    """Product of the depth-two circuits of f1 and f2; evaluating it is a lookup, not a marginal."""
    return multiply_circuits(depth_two_circuit(factor_f1()), depth_two_circuit(factor_f2()))


# ---------------------------------------------------------------------------
# Bayesian network and PSDD
# ---------------------------------------------------------------------------

BN_ABC = """net
var A 2 a1 a2
var B 2 b1 b2
var C 2 c1 c2
parents B A
parents C A
cpt A .1 .9
cpt B .1 .9 .2 .8
cpt C .1 .9 .2 .8
"""

BN_ANCHORS = (
    ({"A": "a1", "B": "b1", "C": "c1"}, Fraction(1, 1000)),
    ({"A": "a1", "B": "b1", "C": "c2"}, Fraction(9, 1000)),
    ({"A": "a2", "B": "b2", "C": "c2"}, Fraction(576, 1000)),
)

BN_CONSTANTS = (Fraction(1, 10), Fraction(2, 10), Fraction(8, 10), Fraction(9, 10))


def psdd_vtree() -> Vtree:
    return Vtree.from_nested(((1, 2), 3))


def psdd_base(m: SddManager | None = None) -> tuple[SddManager, SddNode]:
    """SDD for ``C and (A or B)`` with A=1, B=2, C=3."""
    m = m or SddManager(psdd_vtree())
    return m, m.conjoin(m.literal(3), m.disjoin(m.literal(1), m.literal(2)))


def psdd_fixture():
    """The base SDD with parameters .6/.4 on A or B, .7 on the free B, and 1/0 at the root."""
    from .psdd import attach_params

    m, root = psdd_base()
    theta = {}
    theta[root.id] = tuple(0 if sub.is_false else 1 for _, sub in root.elements)
    a_or_b = next(p for p, s in root.elements if not s.is_false)
    theta[a_or_b.id] = tuple(Fraction(6, 10) if p.literal == 1 else Fraction(4, 10) for p, _ in a_or_b.elements)
    return attach_params(m, root, theta, {2: Fraction(7, 10)})


def write_fixture_files(directory: str | Path) -> list[Path]:
    """Write the text fixtures used by the CLI examples."""
    from .core import serialize_cnf
    from .sdd import serialize_sdd

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    m, root = delta_sdd()
    files = {
        "delta.cnf": serialize_cnf(DELTA_CNF),
        "delta.nnf": DELTA_NNF,
        "delta_smooth.nnf": DELTA_SMOOTH_NNF,
        "delta.vtree": serialize_vtree(delta_vtree()),
        "delta.sdd": serialize_sdd(m, root),
        "linear.vtree": serialize_vtree(linear_vtree()),
        "abc.net": BN_ABC,
    }
    out = []
    for name, text in files.items():
        path = d / name
        path.write_text(text)
        out.append(path)
    return out
