import random

import pytest
from hypothesis import given, strategies as st

from tractable import fixtures, oracles
from tractable.ac import CONST, circuit_factor, evaluate, marginal
from tractable.analysis import smooth
from tractable.bn import (
    BayesNet,
    Indicator,
    Parameter,
    QUERY_KINDS,
    bind,
    bn_query,
    compile_to_ac,
    encode_wmc,
    joint_factor,
    parameter_values,
    parse_bn,
    random_bn,
    serialize_bn,
)
from tractable.ac import DiscreteVar
from tractable.compiler import compile_cnf
from tractable.core import FormatError
from tractable.queries import weighted_count


def labels_to_inst(bn, labels):
    vm = bn.var_map
    return {k: vm[k].index(v) for k, v in labels.items()}


def constants(ac):
    return {n.const for n in ac.nodes if n.kind == CONST and not n.symbol}


def chain(n=5):
    lines = ["net"] + [f"var X{i} 2" for i in range(n)]
    lines += [f"parents X{i} X{i - 1}" for i in range(1, n)]
    lines += ["cpt X0 .3 .7"] + [f"cpt X{i} .{i + 1} .{9 - i} .{8 - i} .{i + 2}" for i in range(1, n)]
    return parse_bn("\n".join(lines) + "\n")


@pytest.fixture(scope="module")
def abc():
    return parse_bn(fixtures.BN_ABC)


@pytest.fixture(scope="module")
def abc_ac(abc):
    return compile_to_ac(abc)


class TestModel:
    def test_anchors(self):
        bn = parse_bn(fixtures.BN_ABC, exact=True)
        joint = joint_factor(bn, exact=True)
        for labels, value in fixtures.BN_ANCHORS:
            assert joint.sum_compatible(labels_to_inst(bn, labels)) == value

    def test_root_prior(self):
        bn = parse_bn("net\nvar R 2\ncpt R .3 .7\n")
        assert joint_factor(bn).values == (0.3, 0.7)

    def test_cycle(self):
        with pytest.raises(ValueError, match="cycl"):
            parse_bn("net\nvar A 2\nvar B 2\nparents A B\nparents B A\ncpt A .5 .5 .5 .5\ncpt B .5 .5 .5 .5\n")

    def test_normalization(self):
        with pytest.raises(ValueError):
            parse_bn("net\nvar A 2\ncpt A .5 .6\n")

    def test_cpt_length(self):
        with pytest.raises(ValueError):
            parse_bn("net\nvar A 2\ncpt A 1\n")

    @pytest.mark.parametrize("text", ["var A 2\ncpt A .5 .5\n", "net\nvar A x\n", "net\nfoo\n", "net\ncpt Z .5 .5\n"])
    def test_format_errors(self, text):
        with pytest.raises((FormatError, ValueError)):
            parse_bn(text)

    def test_codec(self, abc):
        assert parse_bn(serialize_bn(abc)) == abc

    @given(st.integers(0, 2**32))
    def test_random_codec(self, seed):
        bn = random_bn(random.Random(seed), 4, exact=True)
        assert joint_factor(parse_bn(serialize_bn(bn), exact=True), exact=True) == joint_factor(bn, exact=True)

    def test_direct_construction(self):
        x = DiscreteVar("X", ("x", "y"))
        bn = BayesNet((x,), {}, {"X": (0.25, 0.75)})
        assert bn.topological_order == ("X",)


class TestEncoding:
    def test_single_root(self):
        bn = parse_bn("net\nvar R 2\ncpt R .3 .7\n")
        enc = encode_wmc(bn)
        assert enc.cnf.var_count == 4
        kinds = [type(e) for e in enc.legend.values()]
        assert kinds.count(Indicator) == 2 and kinds.count(Parameter) == 2
        assert weighted_count(smooth(compile_cnf(enc.cnf), cover_root=True), enc.weights) == pytest.approx(1)

    def test_weights_convention(self, abc):
        enc = encode_wmc(abc)
        for v, entry in enc.legend.items():
            if isinstance(entry, Indicator):
                assert enc.weights[v] == enc.weights[-v] == 1
            else:
                assert enc.weights[v] == entry.weight and enc.weights[-v] == 1

    def test_anchor_via_wmc(self, abc):
        enc = encode_wmc(abc)
        circuit = smooth(compile_cnf(enc.cnf), cover_root=True)
        labels, value = fixtures.BN_ANCHORS[2]
        ev = enc.evidence(labels_to_inst(abc, labels), abc)
        assert weighted_count(circuit, enc.weights, ev) == pytest.approx(float(value), rel=1e-12)

    @given(st.integers(0, 2**32))
    def test_random_complete_settings(self, seed):
        rng = random.Random(seed)
        bn = random_bn(rng, rng.randint(1, 3), max_k=3)
        enc = encode_wmc(bn)
        circuit = smooth(compile_cnf(enc.cnf), cover_root=True)
        joint = joint_factor(bn)
        for row, value in joint.rows():
            inst = {v.name: x for v, x in zip(joint.vars, row)}
            got = weighted_count(circuit, enc.weights, enc.evidence(inst, bn))
            assert got == pytest.approx(value, rel=1e-9, abs=1e-15)


class TestCompile:
    def test_abc_factor(self, abc, abc_ac):
        assert circuit_factor(abc_ac).values == pytest.approx(joint_factor(abc).values, rel=1e-9)

    def test_abc_exact(self):
        bn = parse_bn(fixtures.BN_ABC, exact=True)
        ac = compile_to_ac(bn, exact=True)
        assert circuit_factor(ac, exact=True) == joint_factor(bn, exact=True)
        for labels, value in fixtures.BN_ANCHORS:
            assert marginal(ac, labels_to_inst(bn, labels)) == value

    def test_provenance_abc(self):
        ac = compile_to_ac(parse_bn(fixtures.BN_ABC, exact=True), exact=True)
        consts = constants(ac)
        assert consts <= set(fixtures.BN_CONSTANTS)
        assert consts == set(fixtures.BN_CONSTANTS)

    @given(st.integers(0, 2**32))
    def test_random_soundness(self, seed):
        rng = random.Random(seed)
        bn = random_bn(rng, rng.randint(1, 5), exact=True)
        ac = compile_to_ac(bn, exact=True)
        assert circuit_factor(ac, exact=True) == joint_factor(bn, exact=True)
        entries = {x for table in bn.cpts.values() for x in table}
        assert constants(ac) <= entries

    def test_chain_marginals(self):
        bn = chain()
        ac = compile_to_ac(bn)
        joint = joint_factor(bn)
        for v in bn.vars:
            for x in range(2):
                assert marginal(ac, {v.name: x}) == pytest.approx(joint.sum_compatible({v.name: x}), rel=1e-9)


class TestSymbolic:
    def test_bind_commutes(self, abc, abc_ac):
        sym = compile_to_ac(abc, symbolic=True)
        assert sym.symbols
        bound = bind(sym, parameter_values(abc))
        assert circuit_factor(bound).values == pytest.approx(circuit_factor(abc_ac).values, rel=1e-12)

    def test_partial_bind(self, abc):
        sym = compile_to_ac(abc, symbolic=True)
        values = parameter_values(abc)
        dropped = sorted(values)[0]
        del values[dropped]
        with pytest.raises(ValueError, match=dropped.replace("|", r"\|")):
            bind(sym, values)

    def test_rebind_changes_only_constants(self, abc):
        sym = compile_to_ac(abc, symbolic=True)
        values = parameter_values(abc)
        a = bind(sym, values)
        b = bind(sym, {k: v / 2 for k, v in values.items()})
        assert len(a.nodes) == len(b.nodes)
        for x, y in zip(a.nodes, b.nodes):
            if x.kind == CONST:
                assert y.kind == CONST
            else:
                assert x == y
        assert any(x != y for x, y in zip(a.nodes, b.nodes))

    def test_evaluate_with_symbols(self, abc, abc_ac):
        sym = compile_to_ac(abc, symbolic=True)
        values = parameter_values(abc)
        assert evaluate(sym, {"A": 1}, values) == pytest.approx(evaluate(abc_ac, {"A": 1}))


class TestQueries:
    def test_anchor(self, abc, abc_ac):
        inst = labels_to_inst(abc, fixtures.BN_ANCHORS[2][0])
        assert bn_query(abc_ac, "evidence_prob", inst) == pytest.approx(0.576, rel=1e-12)

    def test_empty_evidence(self, abc_ac):
        assert bn_query(abc_ac, "evidence_prob") == pytest.approx(1.0, abs=1e-9)

    def test_unknown_kind(self, abc_ac):
        with pytest.raises(ValueError):
            bn_query(abc_ac, "map")
        assert "soft" in QUERY_KINDS

    def test_marginals_match_conditioned(self, abc_ac):
        got = bn_query(abc_ac, "marginals", {"B": 1})
        for v in abc_ac.vars:
            for x in range(v.k):
                if v.name == "B" and x != 1:
                    assert got[(v.name, x)] == 0
                else:
                    assert got[(v.name, x)] == pytest.approx(marginal(abc_ac, {"B": 1, v.name: x}), rel=1e-12)

    @given(st.integers(0, 2**32))
    def test_random_against_joint(self, seed):
        rng = random.Random(seed)
        bn = random_bn(rng, rng.randint(1, 5))
        ac = compile_to_ac(bn)
        v = rng.choice(bn.vars)
        ev = {v.name: rng.randrange(v.k)} if rng.random() < 0.7 else {}
        assert bn_query(ac, "evidence_prob", ev) == pytest.approx(oracles.bn_evidence_prob(bn, ev), rel=1e-9)
        want = oracles.bn_marginals(bn, ev)
        got = bn_query(ac, "marginals", ev)
        for key, val in want.items():
            assert got[key] == pytest.approx(val, rel=1e-9, abs=1e-15)
        best, rows = oracles.bn_mpe(bn, ev)
        value, inst = bn_query(ac, "mpe", ev)
        assert value == pytest.approx(best, rel=1e-9)
        assert joint_factor(bn).sum_compatible(inst) == pytest.approx(best, rel=1e-9)
        lik = {u.name: [rng.uniform(0.1, 1) for _ in range(u.k)] for u in bn.vars if rng.random() < 0.5}
        assert bn_query(ac, "soft", ev, lik) == pytest.approx(oracles.bn_soft(bn, lik, ev), rel=1e-9)
