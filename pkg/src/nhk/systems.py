"""Built-in example systems with their closed-form oracles.

Each bundle carries the chart system, its Chaplygin reduction, a reducing
multiplier when one exists, the second-stage setup when one applies, the
sampling domains, default Hamilton-Jacobi constants, and a dict of
hand-derived closed forms used to cross-check the numerical constructions.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParameters
from .hamiltonization import Multiplier
from .manifold import ChartSystem, GroupAction, domain_guard
from .reduction import ReducedSystem
from .second_stage import SecondStageSetup, TildeSystem

TWO_PI = 2 * np.pi

DEFAULTS = {
    "vrd": {"m": 1.0, "R": 1.0, "I": 1.0, "J": 1.0},
    "knife-edge": {"m": 1.0, "J": 1.0, "alpha": np.pi / 6, "g": 9.81},
    "snakeboard": {"m": 2.0, "r": 1.0, "J0": 1.0, "J1": 0.25, "J": 0.5, "mu_psi": 0.3},
}

POSITIVE = {"m", "R", "I", "J", "r", "J0", "J1", "g"}


@dataclass
class SystemBundle:
    name: str
    params: dict
    system: ChartSystem
    reduced: ReducedSystem
    domain: dict  # {"q": box over full coords, "p": box over reduced momenta, "extra": predicate}
    multiplier: Optional[Multiplier] = None
    second_stage: Optional[SecondStageSetup] = None
    tilde: Optional[TildeSystem] = None
    oracles: dict = field(default_factory=dict)
    hj_defaults: dict = field(default_factory=dict)
    initial_reduced: tuple = ()

    # -- sampling
    def _accept(self, q):
        pred = self.domain.get("extra")
        return pred is None or pred(q)

    def sample_q(self, rng, n):
        box = np.asarray(self.domain["q"], dtype=float)
        out = []
        while len(out) < n:
            q = rng.uniform(box[:, 0], box[:, 1])
            if self._accept(q):
                out.append(q)
        return np.array(out)

    def sample_reduced(self, rng, n, fiber_draws=1):
        """(qbar, pbar) pairs: n base points times ``fiber_draws`` momenta each."""
        pbox = np.asarray(self.domain["p"], dtype=float)
        pts = []
        for q in self.sample_q(rng, n):
            qbar = self.reduced.project_point(q)
            for _ in range(fiber_draws):
                pts.append((qbar, rng.uniform(pbox[:, 0], pbox[:, 1])))
        return pts

    def sample_tilde(self, rng, n, fiber_draws=1):
        idx = self.second_stage.tilde_idx
        return [(qb[idx], pb[idx]) for qb, pb in self.sample_reduced(rng, n, fiber_draws)]

    def initial_state(self):
        qbar, pbar = self.initial_reduced
        return self.reduced.lift_state(np.asarray(qbar, dtype=float), np.asarray(pbar, dtype=float))


def _merge(name, params):
    if name not in DEFAULTS:
        raise InvalidParameters(f"unknown system {name!r}; choose from {sorted(DEFAULTS)}")
    out = dict(DEFAULTS[name])
    for k, v in (params or {}).items():
        if k not in out:
            raise InvalidParameters(f"unknown parameter {k!r} for {name}")
        try:
            out[k] = float(v)
        except (TypeError, ValueError):
            raise InvalidParameters(f"parameter {k} must be numeric, got {v!r}") from None
    for k, v in out.items():
        if not np.isfinite(v) or (k in POSITIVE and v <= 0):
            raise InvalidParameters(f"parameter {k} must be positive and finite, got {v}")
    return out


def _zeros_like(q, shape):
    return np.zeros(shape, dtype=np.result_type(q, float))


# ---------------------------------------------------------------- vertical rolling disk

def vrd(params=None):
    P = _merge("vrd", params)
    m, R, I, J = P["m"], P["R"], P["I"], P["J"]

    def metric(q):
        return np.diag([J, m, m, I]) + 0 * q[0]

    def constraints(q):
        om = _zeros_like(q, (2, 4))
        om[0, 1] = 1.0
        om[0, 3] = -R * np.cos(q[0])
        om[1, 2] = 1.0
        om[1, 3] = -R * np.sin(q[0])
        return om

    system = ChartSystem("vrd", ("phi", "x", "y", "psi"), (True, False, False, True),
                         metric, lambda q: 0 * q[0], constraints,
                         GroupAction((1, 2), ("xi", "eta")), P)
    rsys = ReducedSystem(system)
    kappa = (I + m * R**2) / I
    c = m * R / I

    oracles = {
        # momenta quoted with the psi-component scaled by 1/kappa
        "momentum_scale": kappa,
        "connection": lambda q, v: np.array([v[1] - R * np.cos(q[0]) * v[3], v[2] - R * np.sin(q[0]) * v[3]]),
        "hl_d": lambda q, vb: np.array([vb[0], R * np.cos(q[0]) * vb[1], R * np.sin(q[0]) * vb[1], vb[1]]),
        "hl_m_scaled": lambda q, pb: np.array([pb[0], c * np.cos(q[0]) * pb[1], c * np.sin(q[0]) * pb[1], pb[1]]),
        "hbar_scaled": lambda qb, pb: 0.5 * (pb[0] ** 2 / J + (I + m * R**2) / I**2 * pb[1] ** 2),
        "hbar": lambda qb, pb: 0.5 * (pb[0] ** 2 / J + pb[1] ** 2 / (I + m * R**2)),
        "curvature": lambda q: R * np.array([np.sin(q[0]), -np.cos(q[0])]),  # coefficient of dphi ^ dpsi
        "xi": lambda qb, pb: np.zeros((2, 2)),
        "f": lambda qb: 1.0,
        "gamma": lambda q, a, b: np.array([a, c * np.cos(q[0]) * b, c * np.sin(q[0]) * b, b]),
        "hamiltonian": lambda q, p: 0.5 * ((p[1] ** 2 + p[2] ** 2) / m + p[0] ** 2 / J + p[3] ** 2 / I),
    }
    a0, b0 = 1.0, 1.0
    E0 = oracles["hbar_scaled"](None, (a0, b0))
    return SystemBundle(
        "vrd", P, system, rsys,
        {"q": [[0, TWO_PI], [-5, 5], [-5, 5], [0, TWO_PI]], "p": [[-2, 2], [-2, 2]]},
        multiplier=Multiplier.constant(1.0),
        oracles=oracles,
        hj_defaults={"energy": E0, "constants": {"gamma_phi0": a0, "gamma_psi0": b0}},
        initial_reduced=((0.0, 0.0), (1.0, 1.0)),
    )


# ---------------------------------------------------------------- knife edge on an incline

KNIFE_MARGIN = 0.15


def knife_edge(params=None):
    P = _merge("knife-edge", params)
    m, J, alpha, g = P["m"], P["J"], P["alpha"], P["g"]
    sa = np.sin(alpha)

    def metric(q):
        return np.diag([J, m, m]) + 0 * q[0]

    def potential(q):
        return -m * g * q[1] * sa

    def constraints(q):
        om = _zeros_like(q, (1, 3))
        om[0, 1] = np.sin(q[0])
        om[0, 2] = -np.cos(q[0])
        return om

    system = ChartSystem("knife-edge", ("phi", "x", "y"), (True, False, False),
                         metric, potential, constraints, GroupAction((2,), ("eta",)), P,
                         guard=domain_guard(0, cos_away_from_zero=True))
    rsys = ReducedSystem(system)
    f = Multiplier(lambda qb: np.cos(qb[0]), lambda qb: np.array([-np.sin(qb[0]), 0.0 * qb[0]]), "cos(phi)")

    def gamma(q, a, E):
        root = np.sqrt(m * (2 * E - a**2 / J) + 2 * m**2 * g * sa * q[1])
        return np.array([a, root * np.cos(q[0]), root * np.sin(q[0])])

    oracles = {
        "connection": lambda q, v: np.array([v[2] - np.tan(q[0]) * v[1]]),
        "hl_m": lambda q, pb: np.array([pb[0], np.cos(q[0]) ** 2 * pb[1], np.sin(q[0]) * np.cos(q[0]) * pb[1]]),
        "hbar": lambda qb, pb: 0.5 * (np.cos(qb[0]) ** 2 / m * pb[1] ** 2 + pb[0] ** 2 / J) - m * g * qb[1] * sa,
        "curvature": lambda q: np.array([1 / np.cos(q[0]) ** 2]),  # coefficient of dx ^ dphi
        # reduced coordinates are (phi, x); Xi = p_x tan(phi) dx ^ dphi
        "xi": lambda qb, pb: pb[1] * np.tan(qb[0]) * np.array([[0.0, -1.0], [1.0, 0.0]]),
        "f": lambda qb: np.cos(qb[0]),
        "hbar_c": lambda qb, pb: 0.5 * (pb[1] ** 2 / m + pb[0] ** 2 / (J * np.cos(qb[0]) ** 2)) - m * g * qb[1] * sa,
        "gamma": gamma,
        "hamiltonian": lambda q, p: 0.5 * ((p[1] ** 2 + p[2] ** 2) / m + p[0] ** 2 / J) - m * g * q[1] * sa,
    }
    return SystemBundle(
        "knife-edge", P, system, rsys,
        {"q": [[KNIFE_MARGIN, np.pi / 2 - KNIFE_MARGIN], [0, 5], [-5, 5]], "p": [[-2, 2], [-2, 2]]},
        multiplier=f,
        oracles=oracles,
        hj_defaults={"energy": 1.0, "constants": {"gamma_phi0": 0.1}},
        initial_reduced=((np.pi / 4, 1.0), (0.1, 0.5)),
    )


# ---------------------------------------------------------------- snakeboard

SNAKE_MARGIN = 0.3


def snakeboard(params=None):
    P = _merge("snakeboard", params)
    m, r, J0, J1, Jb = P["m"], P["r"], P["J0"], P["J1"], P["J"]
    if abs(Jb + J0 + 2 * J1 - m * r**2) > 1e-12 * max(1.0, m * r**2):
        raise InvalidParameters(f"inertia relation J + J0 + 2 J1 = m r^2 violated: "
                                f"{Jb + J0 + 2 * J1} != {m * r**2}")
    if m * r**2 <= J0:
        raise InvalidParameters("need m r^2 > J0")
    mu = P["mu_psi"]
    mr2 = m * r**2

    def metric(q):
        G = _zeros_like(q, (5, 5))
        G[0, 0] = mr2
        G[0, 4] = G[4, 0] = J0
        G[1, 1] = G[2, 2] = m
        G[3, 3] = 2 * J1
        G[4, 4] = J0
        return G

    def constraints(q):
        th, ph = q[0], q[3]
        cot = np.cos(ph) / np.sin(ph)
        om = _zeros_like(q, (2, 5))
        om[0, 0] = r * cot * np.cos(th)
        om[0, 1] = 1.0
        om[1, 0] = r * cot * np.sin(th)
        om[1, 2] = 1.0
        return om

    system = ChartSystem("snakeboard", ("theta", "x", "y", "phi", "psi"), (True, False, False, True, True),
                         metric, lambda q: 0 * q[0], constraints, GroupAction((1, 2), ("xi", "eta")), P,
                         guard=domain_guard(3, sin_away_from_zero=True))
    rsys = ReducedSystem(system)

    def fmu_value(qt):
        s = np.sin(qt[1])
        return s / np.sqrt(mr2 - J0 * s**2)

    def fmu_grad(qt):
        s, c = np.sin(qt[1]), np.cos(qt[1])
        return np.array([0.0 * s, mr2 * c / (mr2 - J0 * s**2) ** 1.5])

    f_mu = Multiplier(fmu_value, fmu_grad, "sin(phi)/sqrt(m r^2 - J0 sin^2 phi)")
    setup = SecondStageSetup(rsys, (2,), np.array([mu]), f_mu, ("zeta",))
    tsys = TildeSystem(setup)

    def den(ph):
        return mr2 - J0 * np.sin(ph) ** 2

    def hl_m(q, pb):
        th, ph = q[0], q[3]
        d = pb[0] - pb[2]
        s, c = np.sin(ph), np.cos(ph)
        return np.array([pb[2] + (mr2 - J0) * s**2 / den(ph) * d,
                         -m * r * c * s * np.cos(th) / den(ph) * d,
                         -m * r * c * s * np.sin(th) / den(ph) * d,
                         pb[1], pb[2]])

    def xi_coef(ph, d):
        return -mr2 * d * (np.cos(ph) / np.sin(ph)) / den(ph)

    def antisym(a):
        return a * np.array([[0.0, 1.0], [-1.0, 0.0]])

    def xi_bar(qb, pb):
        K = np.zeros((3, 3))
        K[:2, :2] = antisym(xi_coef(qb[1], pb[0] - pb[2]))
        return K

    def gamma(q, a, E, mu_):
        th, ph = q[0], q[3]
        C = np.sqrt(E - a**2 / (4 * J1) - mu_**2 / (2 * J0))
        gph = np.sqrt(den(ph) / 2)
        s = np.sin(ph)
        cot = np.cos(ph) / s
        return np.array([mu_ + (mr2 - J0) * C * s / gph,
                         -m * r * C * cot * s / gph * np.cos(th),
                         -m * r * C * cot * s / gph * np.sin(th),
                         a, mu_])

    oracles = {
        "connection": lambda q, v: np.array([v[1] + r * np.cos(q[3]) / np.sin(q[3]) * np.cos(q[0]) * v[0],
                                             v[2] + r * np.cos(q[3]) / np.sin(q[3]) * np.sin(q[0]) * v[0]]),
        "hl_d": lambda q, vb: np.array([vb[0], -r * np.cos(q[3]) / np.sin(q[3]) * np.cos(q[0]) * vb[0],
                                        -r * np.cos(q[3]) / np.sin(q[3]) * np.sin(q[0]) * vb[0], vb[1], vb[2]]),
        "hl_m": hl_m,
        "hbar": lambda qb, pb: 0.5 * (np.sin(qb[1]) ** 2 / den(qb[1]) * (pb[0] - pb[2]) ** 2
                                      + pb[1] ** 2 / (2 * J1) + pb[2] ** 2 / J0),
        # coefficient of dtheta ^ dphi for each Lie-algebra component
        "curvature": lambda q: r / np.sin(q[3]) ** 2 * np.array([np.cos(q[0]), np.sin(q[0])]),
        "xi": xi_bar,
        "mechanical_connection": lambda qb: np.array([1.0, 0.0, 1.0]),
        "alpha_mu": lambda qb, mu_: mu_ * np.array([1.0, 0.0, 1.0]),
        "shift": lambda qb, pb, mu_: np.array([pb[0] - mu_, pb[1], pb[2] - mu_]),
        "phi_mu": lambda qb, pb, mu_: (np.array([qb[0], qb[1]]), np.array([pb[0] - mu_, pb[1]])),
        "htilde": lambda qt, pt, mu_: 0.5 * (np.sin(qt[1]) ** 2 / den(qt[1]) * pt[0] ** 2
                                             + pt[1] ** 2 / (2 * J1) + mu_**2 / J0),
        "xi_tilde": lambda qt, pt: antisym(xi_coef(qt[1], pt[0])),
        "f_mu": fmu_value,
        "htilde_c": lambda qt, pt, mu_: 0.5 * (pt[0] ** 2 + den(qt[1]) / (2 * J1 * np.sin(qt[1]) ** 2) * pt[1] ** 2
                                               + mu_**2 / J0),
        "gamma": gamma,
        "hamiltonian": lambda q, p: ((p[1] ** 2 + p[2] ** 2) / (2 * m) + (p[0] - p[4]) ** 2 / (2 * (mr2 - J0))
                                     + p[3] ** 2 / (4 * J1) + p[4] ** 2 / (2 * J0)),
    }
    smax = np.sqrt(m / J0) * r

    def extra(q):
        return abs(np.sin(q[3])) < smax

    return SystemBundle(
        "snakeboard", P, system, rsys,
        {"q": [[0, TWO_PI], [-5, 5], [-5, 5], [SNAKE_MARGIN, np.pi - SNAKE_MARGIN], [0, TWO_PI]],
         "p": [[-2, 2], [-2, 2], [-2, 2]], "extra": extra},
        second_stage=setup,
        tilde=tsys,
        oracles=oracles,
        hj_defaults={"energy": 2.0, "constants": {"gamma_phi0": 0.1, "mu_psi": mu}},
        initial_reduced=((0.0, np.pi / 2, 0.0), (0.5 + mu, 0.05, mu)),
    )


REGISTRY = {"vrd": vrd, "knife-edge": knife_edge, "snakeboard": snakeboard}


def build(name, params=None):
    if name not in REGISTRY:
        raise InvalidParameters(f"unknown system {name!r}; choose from {sorted(REGISTRY)}")
    return REGISTRY[name](params)
