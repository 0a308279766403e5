"""Command-line entry point ``tc``.

Results go to standard output, with the numeric answer on the last line for
query commands; diagnostics go to standard error. Exit codes: 0 success,
1 usage error, 2 failed property precondition, 3 I/O or format error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from . import ac as acm
from . import analysis, bn as bnm, oracles, psdd as psddm, queries, sdd as sddm
from .compiler import CompileOptions, compile_cnf
from .core import (
    FormatError,
    NnfCircuit,
    PropertyError,
    parse_assignment,
    parse_cnf,
    parse_nnf,
    parse_vtree,
    serialize_nnf,
)

EXIT_OK, EXIT_USAGE, EXIT_PROPERTY, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("tractable")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _read(path: str) -> str:
    return Path(path).read_text()


def _write(path: str, text: str) -> None:
    Path(path).write_text(text)


def _vars_list(text: str, names: dict[int, str] | None = None) -> list[int]:
    lookup = {name: v for v, name in (names or {}).items()}
    out = []
    for tok in filter(None, (t.strip() for t in text.split(","))):
        if tok in lookup:
            out.append(lookup[tok])
        else:
            try:
                out.append(int(tok))
            except ValueError:
                raise UsageError(f"unknown variable {tok!r}") from None
    return out


def _evidence(c: NnfCircuit, text: str | None) -> dict[int, bool]:
    if not text:
        return {}
    try:
        return parse_assignment(text, c.name_map)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"bad evidence {text!r}: {exc}") from None


def _weights(c: NnfCircuit, path: str | None, exact: bool) -> dict[int, object]:
    if path is None:
        one = Fraction(1) if exact else 1
        return {lit: one for v in range(1, c.var_count + 1) for lit in (v, -v)}
    return queries.parse_weights(_read(path), c.var_count, exact)


def _load_ac(path: str, exact: bool) -> acm.ArithmeticCircuit:
    """Parse a circuit; in float mode integer and rational constants become floats so every command prints alike."""
    ac = acm.parse_ac(_read(path), exact=exact)
    if exact:
        return ac
    nodes = tuple(
        replace(n, const=float(n.const)) if n.kind == acm.CONST and isinstance(n.const, (int, Fraction)) else n
        for n in ac.nodes
    )
    return acm.ArithmeticCircuit(ac.vars, nodes)


def _ac_instantiation(ac: acm.ArithmeticCircuit, text: str | None) -> dict[str, int]:
    if not text:
        return {}
    try:
        return acm.parse_instantiation(text, ac.vars)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"bad instantiation {text!r}: {exc}") from None


def _likelihoods(ac: acm.ArithmeticCircuit, path: str | None, exact: bool) -> dict[str, list] | None:
    """Soft-evidence file: lines ``<var> <l1> … <lk>``."""
    if path is None:
        return None
    out: dict[str, list] = {}
    for lineno, line in enumerate(_read(path).splitlines(), 1):
        toks = line.split()
        if not toks or toks[0].startswith("#"):
            continue
        if toks[0] not in ac.var_map:
            raise FormatError(f"line {lineno}: unknown variable {toks[0]!r}")
        vals = [acm.parse_number(t, exact) for t in toks[1:]]
        if len(vals) != ac.var_map[toks[0]].k or any(v < 0 for v in vals):
            raise FormatError(f"line {lineno}: need {ac.var_map[toks[0]].k} non-negative likelihoods")
        out[toks[0]] = vals
    return out


def _inst_text(inst: dict[str, int], variables) -> str:
    return acm.format_instantiation(inst, variables)


# ---------------------------------------------------------------------------
# Boolean circuits
# ---------------------------------------------------------------------------


def cmd_compile(a) -> int:
    f = parse_cnf(_read(a.cnf))
    x = frozenset(_vars_list(a.x_first)) if a.x_first else None
    c = compile_cnf(f, CompileOptions(heuristic=a.heuristic, x_first=x))
    _write(a.out, serialize_nnf(c))
    print(f"nodes {len(c.nodes)} edges {c.edge_count}", file=sys.stderr)
    print(len(c.nodes))
    return EXIT_OK


PROPS = ("decomposable", "smooth", "deterministic", "decision", "structured", "x-constrained")


def cmd_check(a) -> int:
    c = parse_nnf(_read(a.nnf))
    props = [p.strip() for p in a.props.split(",") if p.strip()]
    unknown = [p for p in props if p not in PROPS]
    if unknown or not props:
        raise UsageError(f"unknown properties {unknown}; choose from {', '.join(PROPS)}")
    failed = False
    for p in props:
        if p == "decomposable":
            report = analysis.check_decomposability(c)
        elif p == "smooth":
            report = analysis.check_smoothness(c)
        elif p == "deterministic":
            if c.var_count > a.oracle_cap:
                raise UsageError(f"{c.var_count} variables exceed --oracle-cap {a.oracle_cap}")
            report = analysis.check_determinism_exhaustive(c, cap=a.oracle_cap)
        elif p == "decision":
            report = analysis.check_decision(c)
        elif p == "structured":
            if not a.vtree:
                raise UsageError("structured needs --vtree")
            report = analysis.check_structured(c, parse_vtree(_read(a.vtree)))
        else:
            if not a.x:
                raise UsageError("x-constrained needs --x")
            ok = analysis.check_x_constrained(c, _vars_list(a.x, c.name_map))
            report = analysis.PropertyReport(
                "x-constrained", [] if ok else [(c.root, "an X decision sits below a non-X decision")])
        print(report.render())
        failed |= not report.holds
    return EXIT_PROPERTY if failed else EXIT_OK


def cmd_smooth(a) -> int:
    c = analysis.smooth(parse_nnf(_read(a.nnf)), cover_root=a.cover_root)
    _write(a.out, serialize_nnf(c))
    print(len(c.nodes))
    return EXIT_OK


def cmd_count(a) -> int:
    c = parse_nnf(_read(a.nnf))
    ev = _evidence(c, a.evidence)
    print(queries.model_count(c, ev, assume_deterministic=a.assume_deterministic))
    return EXIT_OK


def cmd_wmc(a) -> int:
    c = parse_nnf(_read(a.nnf))
    ev = _evidence(c, a.evidence)
    w = _weights(c, a.weights, a.exact)
    print(fmt(queries.weighted_count(c, w, ev, exact=a.exact, assume_deterministic=a.assume_deterministic)))
    return EXIT_OK


def cmd_emajsat(a) -> int:
    c = parse_nnf(_read(a.nnf))
    x = _vars_list(a.x, c.name_map)
    value, witness = queries.e_majsat(c, x, _weights(c, a.weights, a.exact), exact=a.exact)
    names = c.name_map
    print(",".join(f"{names.get(v, v)}={int(b)}" for v, b in witness.items()))
    print(fmt(value))
    return EXIT_OK


# ---------------------------------------------------------------------------
# SDDs
# ---------------------------------------------------------------------------


def _manager(path: str) -> sddm.SddManager:
    return sddm.SddManager(parse_vtree(_read(path)))


def serialize_obdd(o: sddm.Obdd) -> str:
    """``obdd N v1 … vn`` (variable order) then ``n id var low high``; ids 0/1 are the terminals."""
    lines = [" ".join(["obdd", str(len(o.nodes)), *map(str, o.order)])]
    for nid, (var, low, high) in sorted(o.nodes.items()):
        lines.append(f"n {nid} {var} {low} {high}")
    lines.append(f"root {o.root}")
    return "\n".join(lines) + "\n"


def cmd_sdd(a) -> int:
    m = _manager(a.vtree)
    if a.sdd_cmd == "compile":
        root = sddm.compile_cnf_bottom_up(m, parse_cnf(_read(a.cnf)))
        _write(a.out, sddm.serialize_sdd(m, root))
    elif a.sdd_cmd == "apply":
        left = sddm.parse_sdd(_read(a.left), m)
        right = sddm.parse_sdd(_read(a.right), m)
        root = m.apply(left, right, a.op)
        _write(a.out, sddm.serialize_sdd(m, root))
    elif a.sdd_cmd == "export-nnf":
        root = sddm.parse_sdd(_read(a.sdd), m)
        c = sddm.sdd_to_nnf(m, root)
        _write(a.out, serialize_nnf(c))
        print(len(c.nodes))
        return EXIT_OK
    else:
        root = sddm.parse_sdd(_read(a.sdd), m)
        try:
            o = sddm.obdd_export(m, root)
        except ValueError as exc:
            raise PropertyError(str(exc)) from None
        _write(a.out, serialize_obdd(o))
        print(len(o.nodes))
        return EXIT_OK
    print(m.size(root))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Arithmetic circuits
# ---------------------------------------------------------------------------


def cmd_ac(a) -> int:
    ac = _load_ac(a.ac, a.exact)
    ev = _ac_instantiation(ac, a.evidence)
    soft = _likelihoods(ac, a.soft, a.exact)
    kind = a.ac_cmd
    if kind == "eval":
        setting = acm.indicator_setting(ac, ev, soft)
        print(fmt(acm.node_values(ac, setting)[-1]))
    elif kind == "marginal":
        if soft is not None:
            print(fmt(acm.soft_evidence(ac, soft, ev)))
        else:
            print(fmt(acm.marginal(ac, ev)))
    elif kind == "mpe":
        value, inst = acm.mpe(ac, ev, check=not a.no_check)
        print(_inst_text(inst, ac.vars))
        print(fmt(value))
    elif kind == "subcircuits":
        subs = acm.enumerate_complete_subcircuits(ac, cap=a.cap)
        for s in subs:
            term = " ".join(f"{name}={ac.var_map[name].labels[x]}" for name, x in s.term)
            print(f"{fmt(s.coefficient)} {term}".rstrip())
        print(len(subs))
    else:
        setting = acm.indicator_setting(ac, ev, soft)
        d = acm.backprop(ac, setting)
        for (name, x), val in d.indicator_partials(ac).items():
            print(f"{name}={ac.var_map[name].labels[x]} {fmt(val)}")
        print(fmt(d.value))
    return EXIT_OK


# ---------------------------------------------------------------------------
# PSDDs
# ---------------------------------------------------------------------------


def cmd_psdd(a) -> int:
    m = _manager(a.vtree)
    if a.psdd_cmd == "learn":
        root = sddm.parse_sdd(_read(a.sdd), m)
        data = psddm.parse_dataset(_read(a.data), m.var_count)
        res = psddm.learn_ml_complete(m, root, data, alpha=a.alpha, exact=a.exact)
        if res.rejected:
            print(f"rejected {res.rejected} rows that violate the SDD", file=sys.stderr)
        _write(a.out, psddm.serialize_psdd(res.psdd))
        print(fmt(psddm.log_likelihood(res.psdd, data)))
    else:
        p = psddm.parse_psdd(_read(a.psdd), m, exact=a.exact)
        try:
            row = parse_assignment(a.row)
        except (ValueError, KeyError) as exc:
            raise UsageError(f"bad row {a.row!r}: {exc}") from None
        try:
            print(fmt(psddm.psdd_evaluate(p, row)))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return EXIT_OK


# ---------------------------------------------------------------------------
# Bayesian networks
# ---------------------------------------------------------------------------


def cmd_bn(a) -> int:
    if a.bn_cmd == "compile":
        net = bnm.parse_bn(_read(a.net), exact=a.exact)
        ac = bnm.compile_to_ac(net, symbolic=a.symbolic, exact=a.exact)
        _write(a.out, acm.serialize_ac(ac))
        print(len(ac.nodes))
        return EXIT_OK
    ac = _load_ac(a.ac, a.exact)
    symbols = None
    if ac.symbols:
        if not a.net:
            raise UsageError("circuit has symbolic parameters; pass --net to bind them")
        symbols = bnm.parameter_values(bnm.parse_bn(_read(a.net), exact=a.exact), exact=a.exact)
    ev = _ac_instantiation(ac, a.evidence)
    soft = _likelihoods(ac, a.soft, a.exact)
    if a.kind == "soft" and soft is None:
        raise UsageError("--kind soft needs --soft")
    result = bnm.bn_query(ac, a.kind, ev, soft, symbols)
    if a.kind == "marginals":
        legend = []
        for (name, x), val in result.items():
            legend.append(f"{name}={ac.var_map[name].labels[x]}")
            print(fmt(val))
        print("legend: " + " ".join(legend), file=sys.stderr)
    elif a.kind == "mpe":
        value, inst = result
        print("legend: " + _inst_text(inst, ac.vars), file=sys.stderr)
        print(fmt(value))
    else:
        print(fmt(result))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Brute-force twins
# ---------------------------------------------------------------------------


def _oracle_source(a):
    if bool(a.cnf) == bool(a.nnf):
        raise UsageError("pass exactly one of --cnf and --nnf")
    if a.cnf:
        return parse_cnf(_read(a.cnf)), {}
    c = parse_nnf(_read(a.nnf))
    return c, c.name_map


def cmd_oracle(a) -> int:
    kind = a.oracle_cmd
    if kind in ("count", "wmc", "models", "emajsat"):
        src, names = _oracle_source(a)
        ev = {}
        if getattr(a, "evidence", None):
            try:
                ev = parse_assignment(a.evidence, names)
            except (ValueError, KeyError) as exc:
                raise UsageError(f"bad evidence: {exc}") from None
        if kind == "count":
            print(oracles.count(src, ev, cap=a.cap))
        elif kind == "wmc":
            w = queries.parse_weights(_read(a.weights), src.var_count, a.exact) if a.weights else \
                {lit: 1 for v in range(1, src.var_count + 1) for lit in (v, -v)}
            print(fmt(oracles.weighted_count(src, w, ev, exact=a.exact, cap=a.cap)))
        elif kind == "models":
            ms = oracles.models(src, cap=a.cap)
            for mdl in ms:
                print(" ".join(str(v if b else -v) for v, b in mdl.items()))
            print(len(ms))
        else:
            x = _vars_list(a.x, names)
            w = queries.parse_weights(_read(a.weights), src.var_count, a.exact) if a.weights else None
            value, argmax = oracles.e_majsat(src, x, w, exact=a.exact, cap=a.cap)
            print(",".join(f"{names.get(v, v)}={int(b)}" for v, b in argmax[0].items()))
            print(fmt(value))
        return EXIT_OK
    if kind == "joint":
        net = bnm.parse_bn(_read(a.net), exact=a.exact)
        try:
            ev = acm.parse_instantiation(a.evidence, net.vars) if a.evidence else {}
        except (ValueError, KeyError) as exc:
            raise UsageError(f"bad instantiation: {exc}") from None
        if a.query == "evidence_prob":
            print(fmt(oracles.bn_evidence_prob(net, ev, a.exact)))
        elif a.query == "marginals":
            legend = []
            for (name, x), val in oracles.bn_marginals(net, ev, a.exact).items():
                legend.append(f"{name}={net.var_map[name].labels[x]}")
                print(fmt(val))
            print("legend: " + " ".join(legend), file=sys.stderr)
        else:
            value, rows = oracles.bn_mpe(net, ev, a.exact)
            print("legend: " + _inst_text(rows[0], net.vars), file=sys.stderr)
            print(fmt(value))
        return EXIT_OK
    # arithmetic circuit by its factor
    ac = _load_ac(a.ac, a.exact)
    ev = _ac_instantiation(ac, a.evidence)
    f = acm.circuit_factor(ac, exact=a.exact)
    if a.query == "marginal":
        print(fmt(f.sum_compatible(ev)))
    else:
        value, rows = oracles.factor_argmax(f, ev)
        print(_inst_text(rows[0], ac.vars))
        print(fmt(value))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tc", description="Tractable circuit compilation and reasoning.")
    p.add_argument("-v", "--verbose", action="store_true", help="log diagnostics to stderr")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("compile", help="CNF to Decision-DNNF")
    s.add_argument("--cnf", required=True)
    s.add_argument("--x-first", help="comma-separated variables to branch on first")
    s.add_argument("--heuristic", default="most-occurring", choices=("most-occurring", "lowest-index"))
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_compile)

    s = sub.add_parser("check", help="test circuit properties")
    s.add_argument("--nnf", required=True)
    s.add_argument("--props", required=True, help="comma list of " + ", ".join(PROPS))
    s.add_argument("--vtree")
    s.add_argument("--x", help="variables for x-constrained")
    s.add_argument("--oracle-cap", type=int, default=analysis.ENUMERATION_CAP)
    s.set_defaults(fn=cmd_check)

    s = sub.add_parser("smooth", help="smooth an NNF circuit")
    s.add_argument("--nnf", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--cover-root", action="store_true", help="also make the root mention every variable")
    s.set_defaults(fn=cmd_smooth)

    for name, fn in (("count", cmd_count), ("wmc", cmd_wmc)):
        s = sub.add_parser(name, help="model count" if name == "count" else "weighted model count")
        s.add_argument("--nnf", required=True)
        s.add_argument("--evidence")
        s.add_argument("--assume-deterministic", action="store_true")
        if name == "wmc":
            s.add_argument("--weights")
            s.add_argument("--exact", action="store_true")
        s.set_defaults(fn=fn)

    s = sub.add_parser("emajsat", help="E-MajSat on an X-constrained Decision-DNNF")
    s.add_argument("--nnf", required=True)
    s.add_argument("--x", required=True)
    s.add_argument("--weights")
    s.add_argument("--exact", action="store_true")
    s.set_defaults(fn=cmd_emajsat)

    sdd = sub.add_parser("sdd", help="sentential decision diagrams")
    ss = sdd.add_subparsers(dest="sdd_cmd", required=True, parser_class=_Parser)
    s = ss.add_parser("compile")
    s.add_argument("--cnf", required=True)
    s.add_argument("--vtree", required=True)
    s.add_argument("--out", required=True)
    s = ss.add_parser("apply")
    s.add_argument("--left", required=True)
    s.add_argument("--right", required=True)
    s.add_argument("--op", required=True, choices=("and", "or"))
    s.add_argument("--vtree", required=True)
    s.add_argument("--out", required=True)
    for name in ("export-nnf", "export-obdd"):
        s = ss.add_parser(name)
        s.add_argument("--sdd", required=True)
        s.add_argument("--vtree", required=True)
        s.add_argument("--out", required=True)
    sdd.set_defaults(fn=cmd_sdd)

    acp = sub.add_parser("ac", help="arithmetic circuit queries")
    sa = acp.add_subparsers(dest="ac_cmd", required=True, parser_class=_Parser)
    for name in ("eval", "marginal", "mpe", "subcircuits", "grad"):
        s = sa.add_parser(name)
        s.add_argument("--ac", required=True)
        s.add_argument("--evidence")
        s.add_argument("--soft", help="likelihood file: '<var> <l1> … <lk>' lines")
        s.add_argument("--exact", action="store_true")
        s.add_argument("--no-check", action="store_true", help="skip property checks before MPE")
        s.add_argument("--cap", type=int, default=10_000)
    acp.set_defaults(fn=cmd_ac)

    ps = sub.add_parser("psdd", help="probabilistic SDDs")
    sp = ps.add_subparsers(dest="psdd_cmd", required=True, parser_class=_Parser)
    s = sp.add_parser("learn")
    s.add_argument("--sdd", required=True)
    s.add_argument("--vtree", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--alpha", type=float, default=0)
    s.add_argument("--exact", action="store_true")
    s = sp.add_parser("eval")
    s.add_argument("--psdd", required=True)
    s.add_argument("--vtree", required=True)
    s.add_argument("--row", required=True)
    s.add_argument("--exact", action="store_true")
    ps.set_defaults(fn=cmd_psdd)

    bnp = sub.add_parser("bn", help="Bayesian networks")
    sb = bnp.add_subparsers(dest="bn_cmd", required=True, parser_class=_Parser)
    s = sb.add_parser("compile")
    s.add_argument("--net", required=True)
    s.add_argument("--symbolic", action="store_true")
    s.add_argument("--exact", action="store_true")
    s.add_argument("--out", required=True)
    s = sb.add_parser("query")
    s.add_argument("--ac", required=True)
    s.add_argument("--kind", required=True, choices=bnm.QUERY_KINDS)
    s.add_argument("--evidence")
    s.add_argument("--soft")
    s.add_argument("--net", help="network whose CPT entries bind symbolic parameters")
    s.add_argument("--exact", action="store_true")
    bnp.set_defaults(fn=cmd_bn)

    op = sub.add_parser("oracle", help="brute-force reference answers")
    so = op.add_subparsers(dest="oracle_cmd", required=True, parser_class=_Parser)
    for name in ("count", "wmc", "models", "emajsat"):
        s = so.add_parser(name)
        s.add_argument("--cnf")
        s.add_argument("--nnf")
        s.add_argument("--cap", type=int, default=oracles.CAP)
        if name in ("count", "wmc"):
            s.add_argument("--evidence")
        if name in ("wmc", "emajsat"):
            s.add_argument("--weights")
            s.add_argument("--exact", action="store_true")
        if name == "emajsat":
            s.add_argument("--x", required=True)
    s = so.add_parser("joint")
    s.add_argument("--net", required=True)
    s.add_argument("--query", default="evidence_prob", choices=("evidence_prob", "marginals", "mpe"))
    s.add_argument("--evidence")
    s.add_argument("--exact", action="store_true")
    s = so.add_parser("ac")
    s.add_argument("--ac", required=True)
    s.add_argument("--query", default="marginal", choices=("marginal", "mpe"))
    s.add_argument("--evidence")
    s.add_argument("--exact", action="store_true")
    op.set_defaults(fn=cmd_oracle)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"tc: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="tc: %(message)s", stream=sys.stderr)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"tc: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PropertyError as exc:
        print(f"tc: property precondition failed:\n{exc}", file=sys.stderr)
        return EXIT_PROPERTY
    except (FormatError, OSError, UnicodeDecodeError) as exc:
        print(f"tc: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"tc: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
