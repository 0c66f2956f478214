"""Mechanical systems written in a single coordinate chart.

A :class:`ChartSystem` bundles a kinetic-energy metric, a potential, the
constraint one-forms (as the rows of an ``m x n`` matrix) and an abelian
translation symmetry.  Every callable must accept complex input so that the
default complex-step differentiation works; in practice this means using
numpy ufuncs only and comparing ``np.real(...)`` in domain guards.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .diff import DEFAULT, DiffEngine
from .errors import DomainViolation, SingularConstraintGram, SingularMetric

Array = np.ndarray


@dataclass(frozen=True)
class GroupAction:
    """Abelian group acting by translation on ``translated_coords``."""

    translated_coords: tuple
    lie_algebra_labels: tuple = ()

    @property
    def dim(self):
        return len(self.translated_coords)


@dataclass(frozen=True)
class PhasePoint:
    q: Array
    p: Array

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).copy()
        p = np.asarray(self.p, dtype=float).copy()
        if q.shape != p.shape:
            raise ValueError("q and p must have the same shape")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("phase point has non-finite entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    def as_vector(self):
        return np.concatenate([self.q, self.p])


def _no_guard(q):
    return None


@dataclass(frozen=True)
class ChartSystem:
    name: str
    coord_names: tuple
    periodic: tuple
    metric: Callable
    potential: Callable
    constraints: Callable  # q -> (m, n) matrix whose rows are the constraint covectors
    group: GroupAction
    params: dict = field(default_factory=dict)
    guard: Callable = _no_guard  # raises DomainViolation at singular loci

    @property
    def dim(self):
        return len(self.coord_names)

    @property
    def n_constraints(self):
        return self.group.dim

    def g(self, q):
        self.guard(q)
        return np.asarray(self.metric(q))

    def V(self, q):
        return self.potential(q)

    def omega(self, q):
        self.guard(q)
        return np.asarray(self.constraints(q)).reshape(self.n_constraints, self.dim)


def _solve_spd(g, b):
    try:
        return np.linalg.solve(g, b)
    except np.linalg.LinAlgError as exc:
        raise SingularMetric(str(exc)) from exc


def legendre(system: ChartSystem, q, v):
    """Fibre derivative of the Lagrangian: p = g(q) v."""
    return system.g(q) @ np.asarray(v)


def legendre_inverse(system: ChartSystem, q, p):
    return _solve_spd(system.g(q), np.asarray(p))


def lagrangian(system: ChartSystem, q, v):
    v = np.asarray(v)
    return 0.5 * v @ system.g(q) @ v - system.V(q)


def hamiltonian(system: ChartSystem, q, p):
    p = np.asarray(p)
    return 0.5 * p @ _solve_spd(system.g(q), p) + system.V(q)


def constraint_residual(system: ChartSystem, q, v):
    """Values omega^s(v) of the constraint one-forms."""
    return system.omega(q) @ np.asarray(v)


def m_projection_residual(system: ChartSystem, q, p):
    """Distance from D of the velocity FL^{-1}(p); zero iff p lies in M."""
    if system.n_constraints == 0:
        return 0.0
    return float(np.max(np.abs(constraint_residual(system, q, legendre_inverse(system, q, p)))))


def project_to_M(system: ChartSystem, q, p):
    """Euclidean least-squares projection of p onto the fibre of M over q."""
    if system.n_constraints == 0:
        return np.asarray(p, dtype=float)
    C = system.omega(q) @ np.linalg.inv(system.g(q))
    p = np.asarray(p, dtype=float)
    try:
        corr = C.T @ np.linalg.solve(C @ C.T, C @ p)
    except np.linalg.LinAlgError as exc:
        raise SingularConstraintGram(str(exc)) from exc
    return p - corr


def constraint_distribution_basis(system: ChartSystem, q):
    """Orthonormal (Euclidean) basis of D_q as columns."""
    from scipy.linalg import null_space

    if system.n_constraints == 0:
        return np.eye(system.dim)
    return null_space(system.omega(q))


def check_invariants(system: ChartSystem, points: Sequence, engine: DiffEngine = DEFAULT, tol=1e-9):
    """Check the structural assumptions at sample configurations.

    Returns a dict of worst-case quantities: smallest metric eigenvalue,
    smallest constraint singular value, smallest singular value of the
    complement block, and the largest derivative of the data along the
    translated coordinates.
    """
    min_eig = np.inf
    min_sv = np.inf
    min_block = np.inf
    drift = 0.0
    G = list(system.group.translated_coords)
    for q in points:
        q = np.asarray(q, dtype=float)
        g = system.g(q)
        if not np.allclose(g, g.T, atol=1e-12):
            raise SingularMetric("metric is not symmetric")
        min_eig = min(min_eig, float(np.linalg.eigvalsh(g)[0]))
        om = system.omega(q)
        if om.size:
            min_sv = min(min_sv, float(np.linalg.svd(om, compute_uv=False)[-1]))
            min_block = min(min_block, float(np.linalg.svd(om[:, G], compute_uv=False)[-1]))
        for a in G:
            e = np.zeros_like(q)
            e[a] = 1.0
            for fun in (system.metric, system.potential, system.constraints):
                drift = max(drift, float(np.max(np.abs(engine.directional(fun, q, e)))))
    out = {
        "min_metric_eigenvalue": min_eig,
        "min_constraint_singular_value": min_sv if system.n_constraints else None,
        "min_complement_singular_value": min_block if system.n_constraints else None,
        "translation_invariance": drift,
    }
    if min_eig <= 0:
        raise SingularMetric(f"metric not positive definite (eigenvalue {min_eig:g})")
    if system.n_constraints and min_sv <= tol:
        raise SingularConstraintGram("constraint covectors are not independent")
    if system.n_constraints and min_block <= tol:
        raise SingularConstraintGram("translated directions do not complement D")
    return out


def domain_guard(index: int, lower: Optional[float] = None, upper: Optional[float] = None,
                 sin_away_from_zero: bool = False, cos_away_from_zero: bool = False, eps=1e-8):
    """Build a guard raising DomainViolation near singular loci of coordinate ``index``."""

    def guard(q):
        x = float(np.real(q[index]))
        if lower is not None and x <= lower:
            raise DomainViolation(f"coordinate {index} = {x:g} below {lower:g}")
        if upper is not None and x >= upper:
            raise DomainViolation(f"coordinate {index} = {x:g} above {upper:g}")
        if sin_away_from_zero and abs(np.sin(x)) < eps:
            raise DomainViolation(f"sin of coordinate {index} vanishes at {x:g}")
        if cos_away_from_zero and abs(np.cos(x)) < eps:
            raise DomainViolation(f"cos of coordinate {index} vanishes at {x:g}")

    return guard
