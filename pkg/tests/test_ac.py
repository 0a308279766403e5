import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from tractable import fixtures, oracles
from tractable.ac import (
    AcBuilder,
    DiscreteVar,
    Factor,
    backprop,
    binary,
    check_ac_properties,
    circuit_factor,
    count_complete_subcircuits,
    depth_two_circuit,
    enumerate_complete_subcircuits,
    evaluate,
    format_instantiation,
    indicator_setting,
    marginal,
    marginals_by_backprop,
    maximizer_of,
    mpe,
    multiply_circuits,
    node_values,
    parse_ac,
    parse_instantiation,
    serialize_ac,
    soft_evidence,
)
from tractable.bn import compile_to_ac, parse_bn
from tractable.core import FormatError, PropertyError

from helpers import random_ac, random_factor, random_smooth_ac

A, B = fixtures.VAR_A, fixtures.VAR_B


def holds(ac):
    return tuple(r.holds for r in check_ac_properties(ac))


def complete_rows(variables):
    for row in itertools.product(*(range(v.k) for v in variables)):
        yield {v.name: x for v, x in zip(variables, row)}, row


class TestVariables:
    def test_labels_distinct(self):
        with pytest.raises(ValueError):
            DiscreteVar("X", ("a", "a"))

    def test_instantiation_syntax(self):
        inst = parse_instantiation("A=a,B=~b", (A, B))
        assert inst == {"A": 0, "B": 1}
        assert format_instantiation(inst, (A, B)) == "A=a,B=~b"
        with pytest.raises(KeyError):
            parse_instantiation("A=z", (A, B))
        with pytest.raises((ValueError, KeyError)):
            parse_instantiation("C=c", (A, B))

    def test_binary(self):
        assert binary("X").labels == ("0", "1")


class TestEvaluation:
    def test_ac1_complete(self):
        assert evaluate(fixtures.ac1(), {"A": 1, "B": 1}) == 12

    def test_product_form_lookup(self):
        pf = fixtures.product_form()
        assert evaluate(pf, {"B": 0}) == 24
        assert fixtures.factor_f().sum_compatible({"B": 0}) == 13

    def test_empty_instantiation_sums_factor(self):
        assert evaluate(fixtures.ac2()) == sum(fixtures.factor_f().values)


class TestFactor:
    def test_ac1_factor(self):
        assert circuit_factor(fixtures.ac1()).values == (3, 4, 10, 12)

    def test_single_indicator(self):
        b = AcBuilder((A,))
        assert circuit_factor(b.build(b.indicator("A", 0))).values == (1, 0)

    def test_ac2_same_reference_point(self):
        assert circuit_factor(fixtures.ac2()).values == circuit_factor(fixtures.ac1()).values

    def test_cap(self):
        with pytest.raises(ValueError):
            circuit_factor(fixtures.ac2(), cap=2)

    def test_exact(self):
        f = circuit_factor(fixtures.ac2(), exact=True)
        assert all(isinstance(x, Fraction) for x in f.values)

    @given(st.integers(0, 2**32))
    def test_reference_point_law(self, seed):
        ac = random_ac(random.Random(seed))
        f = circuit_factor(ac)
        for inst, row in complete_rows(ac.vars):
            assert evaluate(ac, inst) == pytest.approx(f[row], rel=1e-12)


class TestProperties:
    def test_ac1(self):
        assert holds(fixtures.ac1()) == (False, True, True)

    def test_ac2(self):
        assert holds(fixtures.ac2()) == (True, True, True)

    def test_ac3(self):
        assert holds(fixtures.ac3()) == (True, True, False)

    def test_render(self):
        text = check_ac_properties(fixtures.ac1())[0].render()
        assert text.startswith("PROPERTY decomposable FAILS")


class TestMarginal:
    def test_ac2(self):
        assert marginal(fixtures.ac2(), {"A": 0}) == 7

    def test_ac3_empty(self):
        assert marginal(fixtures.ac3()) == sum(circuit_factor(fixtures.ac3()).values) == 112

    def test_complete_matches_evaluate(self):
        ac = fixtures.ac3()
        assert marginal(ac, {"A": 1, "B": 0}) == evaluate(ac, {"A": 1, "B": 0})

    def test_ac1_violates_marginal_law(self):
        assert evaluate(fixtures.ac1(), {"A": 0}) == 8
        assert fixtures.factor_f().sum_compatible({"A": 0}) == 7
        with pytest.raises(PropertyError):
            marginal(fixtures.ac1(), {"A": 0})

    def test_maximizer_rejected(self):
        with pytest.raises(PropertyError):
            marginal(maximizer_of(fixtures.ac2()))

    @given(st.integers(0, 2**32), st.booleans())
    def test_marginal_law(self, seed, det):
        rng = random.Random(seed)
        ac = random_smooth_ac(rng, det)
        f = circuit_factor(ac)
        for v in ac.vars:
            for x in range(v.k):
                assert marginal(ac, {v.name: x}) == pytest.approx(f.sum_compatible({v.name: x}), rel=1e-12)


class TestConstruction:
    def test_depth_two_bn_polynomial(self):
        bn = parse_bn(fixtures.BN_ABC, exact=True)
        from tractable.bn import joint_factor
        poly = depth_two_circuit(joint_factor(bn, exact=True))
        consts = [n.const for n in poly.nodes if n.kind == "c"]
        assert Fraction(576, 1000) in consts
        assert Fraction(1, 1000) in consts and Fraction(9, 1000) in consts
        assert holds(poly) == (True, True, True)

    def test_depth_two_binary_uniform(self):
        x = binary("X")
        ac = depth_two_circuit(Factor((x,), (1, 1)))
        assert circuit_factor(ac).values == (1, 1)

    def test_multiply(self):
        ac = multiply_circuits(depth_two_circuit(fixtures.factor_f1()), depth_two_circuit(fixtures.factor_f2()))
        assert circuit_factor(ac).values == (3, 4, 10, 12)

    def test_multiply_by_one(self):
        b = AcBuilder((A,))
        one = b.build(b.const(1))
        ac = multiply_circuits(fixtures.ac2(), one)
        assert circuit_factor(ac).values == circuit_factor(fixtures.ac2()).values

    @given(st.integers(0, 2**32))
    def test_multiply_random(self, seed):
        rng = random.Random(seed)
        x, y, z = (DiscreteVar(n, ("0", "1", "2")[: rng.randint(2, 3)]) for n in "XYZ")
        f = random_factor(rng, (x, y), zeros=True)
        g = random_factor(rng, (y, z), zeros=True)
        ac = multiply_circuits(depth_two_circuit(f), depth_two_circuit(g))
        assert circuit_factor(ac).values == f.product(g).values


class TestMpe:
    def test_mc2(self):
        mc2 = maximizer_of(fixtures.ac2())
        assert evaluate(mc2) == 12
        assert mpe(mc2) == (12, {"A": 1, "B": 1})
        value, inst = mpe(mc2, {"B": 0})
        assert value == 10 and inst == {"A": 1, "B": 0}

    def test_mc3_failure(self):
        value, _ = mpe(maximizer_of(fixtures.ac3()), check=False)
        assert value == 63
        assert max(circuit_factor(fixtures.ac3()).values) == 78

    def test_mc3_checked(self):
        with pytest.raises(PropertyError):
            mpe(maximizer_of(fixtures.ac3()))

    def test_single_row(self):
        x = binary("X")
        ac = depth_two_circuit(Factor((x,), (0, 5)))
        assert mpe(maximizer_of(ac)) == (5, {"X": 1})

    @given(st.integers(0, 2**32))
    def test_matches_argmax(self, seed):
        rng = random.Random(seed)
        ac = random_smooth_ac(rng, True)
        f = circuit_factor(ac)
        v = rng.choice(ac.vars)
        ev = {v.name: rng.randrange(v.k)} if rng.random() < 0.5 else {}
        value, inst = mpe(maximizer_of(ac), ev)
        best, rows = oracles.factor_argmax(f, ev)
        assert value == best
        assert inst in rows
        assert evaluate(ac, inst) == value


class TestSubcircuits:
    def test_ac3(self):
        subs = enumerate_complete_subcircuits(fixtures.ac3())
        target = [s for s in subs if s.instantiation() == {"A": 1, "B": 1}]
        assert sorted(s.coefficient for s in target) == [15, 63]

    def test_ac2_bijection(self):
        subs = enumerate_complete_subcircuits(fixtures.ac2())
        assert len(subs) == 4 == count_complete_subcircuits(fixtures.ac2())
        coef = {tuple(s.instantiation().values()): s.coefficient for s in subs}
        assert coef == {(0, 0): 3, (0, 1): 4, (1, 0): 10, (1, 1): 12}

    def test_single_mul(self):
        b = AcBuilder((A, B))
        subs = enumerate_complete_subcircuits(b.build(b.mul([b.indicator("A", 0), b.indicator("B", 1)])))
        assert len(subs) == 1 and subs[0].coefficient == 1

    def test_cap(self):
        with pytest.raises(ValueError):
            enumerate_complete_subcircuits(fixtures.ac3(), cap=3)

    @given(st.integers(0, 2**32), st.booleans())
    def test_sum_law(self, seed, det):
        rng = random.Random(seed)
        ac = random_smooth_ac(rng, det)
        f = circuit_factor(ac)
        subs = enumerate_complete_subcircuits(ac)
        for inst, row in complete_rows(ac.vars):
            matching = [s for s in subs if s.instantiation() == inst]
            assert sum(s.coefficient for s in matching) == pytest.approx(f[row])
            if det and f[row] != 0:
                assert sum(1 for s in matching if s.coefficient != 0) == 1


class TestBackprop:
    def test_indicator_root(self):
        b = AcBuilder((A,))
        ac = b.build(b.indicator("A", 0))
        d = backprop(ac, indicator_setting(ac))
        assert d.indicator_partials(ac)[("A", 0)] == 1

    def test_partials_are_extended_marginals(self):
        ac = fixtures.ac2()
        d = backprop(ac, indicator_setting(ac, {"B": 1}))
        parts = d.indicator_partials(ac)
        assert parts[("A", 0)] == marginal(ac, {"A": 0, "B": 1}) == 4
        assert parts[("A", 1)] == marginal(ac, {"A": 1, "B": 1}) == 12

    def test_maximizer_rejected(self):
        mc = maximizer_of(fixtures.ac2())
        with pytest.raises(PropertyError):
            backprop(mc, indicator_setting(mc))

    @given(st.integers(0, 2**32))
    def test_finite_differences(self, seed):
        rng = random.Random(seed)
        ac = random_ac(rng)
        setting = {k: rng.uniform(0, 2) for k in indicator_setting(ac)}
        d = backprop(ac, setting)
        h = 1e-6
        for key, partial in d.indicator_partials(ac).items():
            up = node_values(ac, {**setting, key: setting[key] + h})[-1]
            down = node_values(ac, {**setting, key: setting[key] - h})[-1]
            assert abs(partial - (up - down) / (2 * h)) <= 1e-6 * (1 + abs(d.value))

    @given(st.integers(0, 2**32))
    def test_marginals_by_backprop(self, seed):
        rng = random.Random(seed)
        ac = random_smooth_ac(rng, True)
        f = circuit_factor(ac, exact=True)
        v = rng.choice(ac.vars)
        ev = {v.name: rng.randrange(v.k)} if rng.random() < 0.5 else {}
        got = marginals_by_backprop(ac, ev)
        for u in ac.vars:
            for x in range(u.k):
                want = f.sum_compatible({**ev, u.name: x}) if ev.get(u.name, x) == x else 0
                assert got[(u.name, x)] == pytest.approx(float(want))


class TestSoftEvidence:
    def setup_method(self):
        self.ac = compile_to_ac(parse_bn(fixtures.BN_ABC))

    def test_unit_likelihoods(self):
        assert soft_evidence(self.ac, {"A": [1, 1]}, {"B": 0}) == pytest.approx(marginal(self.ac, {"B": 0}))

    def test_hard_reduction(self):
        got = soft_evidence(self.ac, {"A": [0, 1]}, {"B": 0})
        want = marginal(self.ac, {"A": 1, "B": 0}) / marginal(self.ac, {"A": 1})
        assert got == pytest.approx(want, rel=1e-12)

    def test_scale_invariance(self):
        base = soft_evidence(self.ac, {"A": [0.3, 0.6], "C": [1, 2]}, {"B": 1})
        scaled = soft_evidence(self.ac, {"A": [0.9, 1.8], "C": [1, 2]}, {"B": 1})
        assert scaled == pytest.approx(base, rel=1e-12)

    def test_matches_oracle(self):
        bn = parse_bn(fixtures.BN_ABC)
        lik = {"A": [0.2, 0.7], "C": [0.5, 0.1]}
        assert soft_evidence(self.ac, lik, {"B": 0}) == pytest.approx(oracles.bn_soft(bn, lik, {"B": 0}), rel=1e-12)

    def test_zero_denominator(self):
        with pytest.raises(ValueError):
            soft_evidence(self.ac, {"A": [0, 0]})

    def test_not_a_distribution(self):
        with pytest.raises(PropertyError):
            soft_evidence(fixtures.ac2(), {"A": [1, 1]})


class TestCodec:
    @pytest.mark.parametrize("make", [fixtures.ac1, fixtures.ac2, fixtures.ac3, fixtures.product_form])
    def test_roundtrip(self, make):
        ac = make()
        text = serialize_ac(ac)
        back = parse_ac(text)
        assert back.nodes == ac.nodes and back.vars == ac.vars
        assert serialize_ac(back) == text

    def test_exact_and_max(self):
        ac = maximizer_of(fixtures.ac3())
        back = parse_ac(serialize_ac(ac), exact=True)
        assert back.is_maximizer
        assert mpe(back, check=False)[0] == 63

    def test_symbols(self):
        b = AcBuilder((A,))
        ac = b.build(b.mul([b.symbol("t"), b.indicator("A", 1)]))
        back = parse_ac(serialize_ac(ac))
        assert back.symbols == {"t"}
        assert evaluate(back, {"A": 1}, {"t": 0.5}) == 0.5

    @pytest.mark.parametrize("text", [
        "v A 2\n",
        "ac 1 0\nl A a\n",
        "ac 2 1\nv A 2 a b\nl A a\n+ 1 5\n",
        "ac 1 0\nv A 2 a b\nc x\n",
        "ac 3 0\nv A 2 a b\nl A a\n",
    ])
    def test_errors(self, text):
        with pytest.raises(FormatError):
            parse_ac(text)
