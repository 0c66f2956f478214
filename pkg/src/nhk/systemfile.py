"""Load a system description from JSON.

Document keys::

    name, dim, coords, periodic, params
    metric       builtin system name, or an n x n array of expressions
    potential    builtin name or expression (default 0)
    constraints  builtin name or an m x n array of expressions
    group        {"translated": [coord names], "labels": [...]}
    guards       optional [{"coord": name, "nonzero": "sin" | "cos"}]
    domain       optional {"q": [[lo, hi], ...], "p": [[lo, hi], ...]}
    multiplier   optional expression in the reduced coordinates
    second_stage optional {"k_action": [reduced coord names], "mu": [...],
                           "f_mu": expression in the remaining coordinates,
                           "domain": {...}}

Expressions are JSON trees: a number; a string naming a coordinate, a
parameter or ``pi``; a single-key object ``{"sin": e}`` (likewise cos, tan,
sqrt, exp, log, neg), ``{"sum": [...]}``, ``{"prod": [...]}``,
``{"div": [a, b]}``, ``{"pow": [e, k]}``; or a coefficient table
``{"terms": [{"coef": c, "powers": {x: k}, "sin": {x: k}, "cos": {x: k}}, ...]}``
meaning sum of c * prod x^k * prod sin(x)^k * prod cos(x)^k.
"""
import json

import numpy as np

from .errors import ConfigError
from .hamiltonization import Multiplier
from .manifold import ChartSystem, GroupAction, domain_guard
from .reduction import ReducedSystem
from .second_stage import SecondStageSetup, TildeSystem
from .systems import REGISTRY, SystemBundle

UNARY = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "sqrt": np.sqrt,
         "exp": np.exp, "log": np.log, "neg": np.negative}


def compile_expr(expr, coords, params):
    """Return a function of the coordinate vector evaluating ``expr``."""
    index = {c: i for i, c in enumerate(coords)}

    def build(e):
        if isinstance(e, bool):
            raise ConfigError("booleans are not expressions")
        if isinstance(e, (int, float)):
            v = float(e)
            return lambda q: v + 0 * q[0]
        if isinstance(e, str):
            if e in index:
                i = index[e]
                return lambda q: q[i]
            if e in params:
                v = float(params[e])
                return lambda q: v + 0 * q[0]
            if e == "pi":
                return lambda q: np.pi + 0 * q[0]
            raise ConfigError(f"unknown symbol {e!r}")
        if isinstance(e, dict) and len(e) == 1:
            (op, arg), = e.items()
            if op in UNARY:
                f, a = UNARY[op], build(arg)
                return lambda q: f(a(q))
            if op in ("sum", "prod"):
                parts = [build(x) for x in arg]
                if op == "sum":
                    return lambda q: sum(p(q) for p in parts)

                def prod(q):
                    out = 1.0
                    for p in parts:
                        out = out * p(q)
                    return out
                return prod
            if op == "div":
                a, b = build(arg[0]), build(arg[1])
                return lambda q: a(q) / b(q)
            if op == "pow":
                a, k = build(arg[0]), float(arg[1])
                return lambda q: a(q) ** k
            if op == "terms":
                return _terms(arg, build)
        raise ConfigError(f"cannot parse expression {e!r}")

    return build(expr)


def _terms(table, build):
    compiled = []
    for term in table:
        coef = build(term.get("coef", 1.0))
        factors = []
        for key, fn in (("powers", None), ("sin", np.sin), ("cos", np.cos)):
            for name, k in term.get(key, {}).items():
                factors.append((build(name), fn, float(k)))
        compiled.append((coef, factors))

    def value(q):
        total = 0.0
        for coef, factors in compiled:
            t = coef(q)
            for var, fn, k in factors:
                x = var(q)
                t = t * (fn(x) if fn is not None else x) ** k
            total = total + t
        return total

    return value


def _matrix(rows, coords, params, shape):
    fns = [[compile_expr(e, coords, params) for e in row] for row in rows]
    if (len(fns), len(fns[0]) if fns else shape[1]) != shape:
        raise ConfigError(f"matrix has wrong shape, expected {shape}")

    def value(q):
        out = np.zeros(shape, dtype=np.result_type(q, float))
        for i, row in enumerate(fns):
            for j, f in enumerate(row):
                out[i, j] = f(q)
        return out

    return value


def _guard(specs, coords):
    guards = []
    for s in specs or []:
        i = coords.index(s["coord"])
        guards.append(domain_guard(i, sin_away_from_zero=s.get("nonzero") == "sin",
                                   cos_away_from_zero=s.get("nonzero") == "cos"))

    def guard(q):
        for g in guards:
            g(q)

    return guard


def load_system(doc):
    """Build a SystemBundle from a JSON document (dict, path or JSON text)."""
    if isinstance(doc, str):
        if doc.lstrip().startswith("{"):
            doc = json.loads(doc)
        else:
            with open(doc) as fh:
                doc = json.load(fh)
    try:
        return _load(doc)
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid system document: {exc}") from exc


def _load(doc):
    coords = list(doc["coords"])
    n = int(doc.get("dim", len(coords)))
    if n != len(coords):
        raise ConfigError("dim does not match the number of coords")
    params = {k: float(v) for k, v in doc.get("params", {}).items()}
    periodic = tuple(bool(x) for x in doc.get("periodic", [False] * n))
    grp = doc.get("group", {})
    translated = tuple(coords.index(c) for c in grp.get("translated", []))
    m = len(translated)

    def builtin(key):
        name = doc[key]
        if name not in REGISTRY:
            raise ConfigError(f"unknown builtin {name!r}")
        sub = {k: v for k, v in params.items() if k in REGISTRY[name]().params}
        return REGISTRY[name](sub).system

    metric = builtin("metric").metric if isinstance(doc["metric"], str) else _matrix(doc["metric"], coords, params, (n, n))
    pot = doc.get("potential", 0.0)
    potential = builtin("potential").potential if isinstance(pot, str) and pot in REGISTRY else compile_expr(pot, coords, params)
    cons = doc.get("constraints", [])
    if isinstance(cons, str):
        constraints = builtin("constraints").constraints
    elif m:
        constraints = _matrix(cons, coords, params, (m, n))
    else:
        def constraints(q):
            return np.zeros((0, n), dtype=np.result_type(q, float))

    system = ChartSystem(doc.get("name", "custom"), tuple(coords), periodic, metric, potential, constraints,
                         GroupAction(translated, tuple(grp.get("labels", []))), params,
                         guard=_guard(doc.get("guards"), coords))
    rsys = ReducedSystem(system)
    nbar = rsys.reduced_dim
    domain = doc.get("domain", {})
    domain = {"q": domain.get("q", [[-1.0, 1.0]] * n), "p": domain.get("p", [[-1.0, 1.0]] * nbar)}

    multiplier = None
    if "multiplier" in doc:
        multiplier = Multiplier(compile_expr(doc["multiplier"], list(rsys.reduced_coords), params), name="f")

    setup = tsys = None
    if "second_stage" in doc:
        ss = doc["second_stage"]
        k_idx = tuple(rsys.reduced_coords.index(c) for c in ss["k_action"])
        tilde_coords = [c for i, c in enumerate(rsys.reduced_coords) if i not in k_idx]
        f_mu = Multiplier(compile_expr(ss["f_mu"], tilde_coords, params), name="f_mu") if "f_mu" in ss else None
        setup = SecondStageSetup(rsys, k_idx, np.asarray(ss.get("mu", [0.0] * len(k_idx)), dtype=float), f_mu)
        tsys = TildeSystem(setup)
        if "domain" in ss:
            domain["tilde"] = ss["domain"]

    return SystemBundle(system.name, params, system, rsys, domain, multiplier=multiplier,
                        second_stage=setup, tilde=tsys)
