"""Random instance generators shared by the test modules."""

import random
from fractions import Fraction

from tractable.ac import AcBuilder, DiscreteVar
from tractable.core import CnfFormula, Vtree

# criterion number -> passed, filled in by the acceptance suite
ACCEPTANCE: dict[int, bool] = {}


def random_cnf(rng: random.Random, n: int, m: int, width: int = 3) -> CnfFormula:
    clauses = []
    for _ in range(m):
        vs = rng.sample(range(1, n + 1), min(width, n))
        clauses.append(tuple(v if rng.random() < 0.5 else -v for v in vs))
    return CnfFormula(n, tuple(clauses))


def random_weights(rng: random.Random, n: int, exact: bool = False) -> dict:
    out = {}
    for v in range(1, n + 1):
        for lit in (v, -v):
            out[lit] = Fraction(rng.randint(0, 9), rng.randint(1, 5)) if exact else rng.uniform(0.05, 2.0)
    return out


def random_vtree(rng: random.Random, variables) -> Vtree:
    vs = list(variables)
    rng.shuffle(vs)

    def nest(items):
        if len(items) == 1:
            return items[0]
        cut = rng.randint(1, len(items) - 1)
        return (nest(items[:cut]), nest(items[cut:]))

    return Vtree.from_nested(nest(vs))


def random_ac(rng: random.Random, n_vars: int = 3, depth: int = 3):
    """Random sum/product circuit over small discrete variables; not necessarily decomposable."""
    variables = [DiscreteVar(f"V{i}", tuple(f"v{i}{j}" for j in range(rng.randint(2, 3)))) for i in range(n_vars)]
    b = AcBuilder(variables)

    def grow(d):
        if d == 0 or rng.random() < 0.2:
            if rng.random() < 0.6:
                v = rng.choice(variables)
                return b.indicator(v.name, rng.randrange(v.k))
            return b.const(rng.uniform(0.1, 3.0))
        kids = [grow(d - 1) for _ in range(rng.randint(2, 3))]
        return b.add(kids) if rng.random() < 0.5 else b.mul(kids)

    return b.build(grow(depth))


def random_nnf(rng: random.Random, n: int, size: int = 12):
    """Arbitrary NNF circuit (no structural guarantees) over ``n`` variables."""
    from tractable.core import NnfBuilder

    b = NnfBuilder(n)
    pool = [b.literal(v if rng.random() < 0.5 else -v) for v in range(1, n + 1)]
    for _ in range(size):
        kids = rng.sample(pool, min(len(pool), rng.randint(1, 3)))
        pool.append(b.conj(kids) if rng.random() < 0.5 else b.disj(kids))
    return b.build(pool[-1])


def random_factor(rng: random.Random, variables, zeros: bool = False, exact: bool = False):
    from tractable.ac import Factor, _row_count

    vals = []
    for _ in range(_row_count(variables)):
        x = rng.randint(0 if zeros else 1, 9)
        vals.append(Fraction(x) if exact else float(x))
    return Factor(tuple(variables), tuple(vals))


def random_smooth_ac(rng: random.Random, deterministic: bool = True):
    """Decomposable and smooth circuit: products of depth-two circuits over a random split
    of the variables; several such products are summed when ``deterministic`` is off."""
    from tractable.ac import AcBuilder, depth_two_circuit

    n = rng.randint(1, 4)
    variables = [DiscreteVar(f"V{i}", tuple(f"v{i}{j}" for j in range(rng.randint(2, 3)))) for i in range(n)]
    b = AcBuilder(variables)

    def product():
        order = variables[:]
        rng.shuffle(order)
        cut = rng.randint(1, len(order))
        parts = [order[:cut], order[cut:]]
        roots = [b.copy(depth_two_circuit(random_factor(rng, sorted(p, key=variables.index), zeros=True)))
                 for p in parts if p]
        return b.mul(roots) if len(roots) > 1 else roots[0]

    if deterministic:
        return b.build(product())
    return b.build(b.add([product() for _ in range(rng.randint(2, 3))]))


def random_psdd_base(rng: random.Random, n: int | None = None):
    """Satisfiable random SDD over 2..6 variables under a random vtree."""
    from tractable.sdd import SddManager, compile_cnf_bottom_up

    n = n or rng.randint(2, 6)
    while True:
        m = SddManager(random_vtree(rng, range(1, n + 1)))
        root = compile_cnf_bottom_up(m, random_cnf(rng, n, rng.randint(0, n), width=rng.randint(1, 3)))
        if not root.is_false:
            return m, root


def random_dataset(rng: random.Random, m, root, rows: int = 30, infeasible: bool = False):
    from tractable.psdd import Dataset

    n = m.var_count
    picked, counts = [], []
    while len(picked) < rows:
        bits = tuple(rng.randint(0, 1) for _ in range(n))
        ok = m.evaluate(root, {v + 1: bool(x) for v, x in enumerate(bits)})
        if ok or infeasible:
            picked.append(bits)
            counts.append(rng.randint(1, 4))
    return Dataset(n, tuple(picked), tuple(counts))
