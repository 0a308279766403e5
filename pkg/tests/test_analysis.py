import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tractable import fixtures
from tractable.analysis import (
    check_decision,
    check_decomposability,
    check_determinism_exhaustive,
    check_smoothness,
    check_structured,
    check_x_constrained,
    condition,
    condition_all,
    smooth,
)
from tractable.compiler import CompileOptions, compile_cnf
from tractable.core import NnfBuilder, PropertyError, assignment_rows, truth_table

from helpers import random_cnf, random_nnf


def lits(b, *ls):
    return [b.literal(l) for l in ls]


class TestDecomposability:
    def test_disjoint(self):
        b = NnfBuilder(2)
        assert check_decomposability(b.build(b.conj(lits(b, 1, 2)))).holds

    def test_shared(self):
        b = NnfBuilder(2)
        inner = b.conj(lits(b, 1, 2))
        r = check_decomposability(b.build(b.conj([b.literal(1), inner])))
        assert not r.holds
        assert "{1}" in r.render()

    def test_fixture(self):
        assert check_decomposability(fixtures.delta_nnf()).holds

    def test_render_format(self):
        b = NnfBuilder(2)
        inner = b.conj(lits(b, 1, 2))
        text = check_decomposability(b.build(b.conj([b.literal(1), inner]))).render()
        lines = text.splitlines()
        assert lines[0] == "PROPERTY decomposable FAILS"
        assert all(line.startswith("WITNESS node=") for line in lines[1:])


class TestSmoothness:
    def test_holds(self):
        b = NnfBuilder(2)
        c = b.build(b.disj([b.conj(lits(b, 1, 2)), b.conj(lits(b, -1, -2))]))
        assert check_smoothness(c).holds

    def test_violation(self):
        b = NnfBuilder(2)
        c = b.build(b.disj([b.literal(1), b.conj(lits(b, 1, 2))]))
        r = check_smoothness(c)
        assert not r.holds and r.witnesses[0][0] == c.root

    def test_unsat_child_excluded(self):
        b = NnfBuilder(2)
        c = b.build(b.disj([b.conj(lits(b, 1, 2)), b.conj(lits(b, 1, -1))]))
        assert not check_smoothness(c).holds
        assert check_smoothness(c, exclude_unsat=True).holds

    def test_fixture_is_not_smooth_but_smoothed_fixture_is(self):
        assert not check_smoothness(fixtures.delta_nnf()).holds
        assert check_smoothness(fixtures.delta_smooth_nnf()).holds


class TestDecision:
    def test_holds(self):
        b = NnfBuilder(3)
        c = b.build(b.disj([b.conj(lits(b, 1, 2)), b.conj(lits(b, -1, 3))]))
        r = check_decision(c)
        assert r.holds and r.details["decisions"][c.root] == 1

    def test_violation(self):
        b = NnfBuilder(3)
        c = b.build(b.disj([b.conj(lits(b, 1, 3)), b.conj(lits(b, 2, 3))]))
        assert not check_decision(c).holds

    def test_fixture_root_has_three_inputs(self):
        assert not check_decision(fixtures.delta_nnf()).holds


class TestXConstrained:
    def _nested(self, outer, inner):
        b = NnfBuilder(3)
        third = ({1, 2, 3} - {outer, inner}).pop()
        sub = b.disj([b.conj(lits(b, inner, third)), b.conj(lits(b, -inner, -third))])
        return b.build(b.disj([b.conj([b.literal(outer), sub]), b.conj(lits(b, -outer, inner, third))]))

    def test_x_above_y(self):
        assert check_x_constrained(self._nested(1, 2), {1})

    def test_x_below_y(self):
        assert not check_x_constrained(self._nested(2, 1), {1})

    def test_requires_decision(self):
        with pytest.raises(PropertyError):
            check_x_constrained(fixtures.delta_nnf(), {1})

    @given(st.integers(0, 2**32), st.integers(2, 7))
    def test_matches_path_enumeration(self, seed, n):
        rng = random.Random(seed)
        c = compile_cnf(random_cnf(rng, n, rng.randint(1, 2 * n)), CompileOptions(heuristic="lowest-index"))
        x = set(rng.sample(range(1, n + 1), rng.randint(0, n)))
        decisions = check_decision(c).details["decisions"]

        def paths(i, seen_y):
            if i in decisions and decisions[i] in x and seen_y:
                return False
            seen_y = seen_y or (i in decisions and decisions[i] not in x)
            return all(paths(ch, seen_y) for ch in c.nodes[i].children)

        assert check_x_constrained(c, x) == paths(c.root, False)


class TestStructured:
    def test_fixture_conforms_at_root(self):
        v = fixtures.delta_vtree()
        c = fixtures.delta_nnf()
        r = check_structured(c, v)
        assert r.holds
        root_children = c.nodes[c.root].children
        assert all(r.details["conforming"][ch] == v.root for ch in root_children)

    def test_ternary_and(self):
        b = NnfBuilder(3)
        c = b.build(b.conj(lits(b, 1, 2, 3)))
        assert not check_structured(c, fixtures.constrained_vtree()).holds

    def test_shared_variable(self):
        b = NnfBuilder(2)
        c = b.build(b.conj([b.literal(1), b.disj(lits(b, 1, 2))]))
        assert not check_structured(c, fixtures.delta_vtree()).holds

    @given(st.integers(0, 2**32))
    def test_structured_implies_decomposable(self, seed):
        rng = random.Random(seed)
        c = random_nnf(rng, 4, 8)
        if check_structured(c, fixtures.delta_vtree()).holds:
            assert check_decomposability(c).holds


class TestDeterminism:
    def test_tautology(self):
        b = NnfBuilder(1)
        assert check_determinism_exhaustive(b.build(b.disj(lits(b, 1, -1)))).holds

    def test_violation_at_both_high(self):
        b = NnfBuilder(2)
        r = check_determinism_exhaustive(b.build(b.disj(lits(b, 1, 2))))
        assert not r.holds and "1=1 2=1" in r.witnesses[0][1]

    def test_cap(self):
        b = NnfBuilder(30)
        with pytest.raises(PropertyError):
            check_determinism_exhaustive(b.build(b.literal(1)), cap=20)

    def test_fixture_deterministic(self):
        assert check_determinism_exhaustive(fixtures.delta_nnf()).holds

    @given(st.integers(0, 2**32), st.integers(1, 8))
    def test_decision_implies_determinism(self, seed, n):
        rng = random.Random(seed)
        c = compile_cnf(random_cnf(rng, n, rng.randint(0, 2 * n)))
        assert check_decision(c).holds
        assert check_determinism_exhaustive(c).holds


class TestSmooth:
    def test_forced_shape(self):
        b = NnfBuilder(2)
        c = smooth(b.build(b.disj([b.literal(1), b.conj(lits(b, 1, 2))])))
        assert check_smoothness(c).holds
        assert np.array_equal(truth_table(c), [False, False, True, True])

    def test_idempotent(self):
        once = smooth(fixtures.delta_nnf())
        twice = smooth(once)
        assert once.nodes == twice.nodes

    def test_fixture(self):
        s = smooth(fixtures.delta_nnf())
        assert check_smoothness(s).holds and check_decomposability(s).holds
        assert np.array_equal(truth_table(s), truth_table(fixtures.delta_nnf()))

    def test_cover_root(self):
        b = NnfBuilder(3)
        c = smooth(b.build(b.literal(1)), cover_root=True)
        assert c.node_vars[-1] == {1, 2, 3}

    @given(st.integers(0, 2**32), st.integers(1, 12))
    def test_preserves_function(self, seed, n):
        rng = random.Random(seed)
        c = random_nnf(rng, n, 10)
        s = smooth(c)
        assert check_smoothness(s).holds
        assert np.array_equal(truth_table(s), truth_table(c))

    @given(st.integers(0, 2**32), st.integers(1, 10))
    def test_keeps_decomposability(self, seed, n):
        rng = random.Random(seed)
        c = compile_cnf(random_cnf(rng, n, rng.randint(0, 2 * n)))
        s = smooth(c)
        assert check_decomposability(s).holds and check_decision(s).holds


class TestCondition:
    def test_or_becomes_true(self):
        b = NnfBuilder(2)
        c = condition(b.build(b.disj(lits(b, 1, 2))), 1)
        assert c.nodes[-1].is_true

    def test_and_becomes_false(self):
        b = NnfBuilder(2)
        c = condition(b.build(b.conj(lits(b, 1, 2))), -1)
        assert c.nodes[-1].is_false

    @given(st.integers(0, 2**32), st.integers(1, 12))
    def test_matches_restriction(self, seed, n):
        rng = random.Random(seed)
        c = random_nnf(rng, n, 10)
        ev = {v: rng.random() < 0.5 for v in rng.sample(range(1, n + 1), rng.randint(0, n))}
        r = condition_all(c, ev)
        t_c, t_r = truth_table(c), truth_table(r)
        mask = np.ones(1 << n, dtype=bool)
        rows = assignment_rows(n)
        for v, val in ev.items():
            mask &= rows[:, v - 1] == val
        # on rows agreeing with the evidence both agree; the restriction ignores evidence vars
        assert np.array_equal(t_c[mask], t_r[mask])
        for v in ev:
            assert v not in r.node_vars[-1]
