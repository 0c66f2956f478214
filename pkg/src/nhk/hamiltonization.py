"""Reducing multipliers and the Hamiltonized reduced dynamics.

A multiplier f on the reduced base rescales momenta, Psi_f(q, p) = (q, f p),
and time.  The rescaled field

    X_C(q, p) = T Psi_f ( X(q, p/f) / f )

is canonically Hamiltonian for H_C = H o Psi_{1/f} exactly when the one-form
i_{X_C}(df ^ Theta - f Xi) vanishes; df ^ Theta = f Xi is sufficient.
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .diff import DEFAULT, OUTER, closedness_residual_twoform, divergence
from .dynamics import rk4
from .errors import ZeroMultiplier
from .reduction import canonical_field, canonical_form

ZERO_TOL = 1e-12


@dataclass(frozen=True)
class Multiplier:
    """Fibre-wise constant function f(qbar) with optional analytic gradient."""

    value: Callable
    gradient: Optional[Callable] = None
    name: str = "f"

    def __call__(self, qbar):
        v = self.value(qbar)
        if abs(np.real(v)) < ZERO_TOL:
            raise ZeroMultiplier(f"{self.name} vanishes at {np.real(qbar)}")
        return v

    def grad(self, qbar):
        if self.gradient is not None:
            return np.asarray(self.gradient(qbar))
        return DEFAULT.gradient(self.value, qbar)

    @classmethod
    def constant(cls, c=1.0, name="1"):
        return cls(lambda q: c + 0 * q[0], lambda q: np.zeros(len(q)), name)


@dataclass(frozen=True)
class MeasureDensity:
    """Density f**exponent of a measure relative to the Liouville volume."""

    exponent: int
    multiplier: Multiplier

    def log_density(self, z, n):
        return self.exponent * np.log(np.abs(self.multiplier(z[:n])))


def psi_f(f: Multiplier, qbar, pbar, direction="forward"):
    fq = f(qbar)
    if direction == "forward":
        return fq * np.asarray(pbar)
    if direction == "inverse":
        return np.asarray(pbar) / fq
    raise ValueError("direction must be 'forward' or 'inverse'")


def psi_f_map(f: Multiplier, direction="forward"):
    """Psi_f (or Psi_{1/f}) as a map on stacked phase points z = (q, p)."""
    def apply(z):
        n = len(z) // 2
        return np.concatenate([z[:n], psi_f(f, z[:n], z[n:], direction)])

    return apply


def chaplygin_hamiltonian(rsys, f: Multiplier, qbar, pbar):
    return rsys.reduced_hamiltonian(qbar, psi_f(f, qbar, pbar, "inverse"))


def hamiltonized_field(rsys, f: Multiplier, qbar, pbar):
    """X_C by push-forward of X/f through Psi_f."""
    fq = f(qbar)
    pbar = np.asarray(pbar, dtype=float)
    qd, pd = rsys.vector_field(qbar, pbar / fq)
    qdot = qd / fq
    return qdot, pd + (f.grad(qbar) @ qd) * pbar / fq**2


def chaplygin_canonical_field(rsys, f: Multiplier, qbar, pbar):
    """Canonical Hamiltonian field of H_C, for comparison with the push-forward."""
    n = rsys.reduced_dim
    X = canonical_field(lambda z: chaplygin_hamiltonian(rsys, f, z[:n], z[n:]), np.concatenate([qbar, pbar]))
    return X[:n], X[n:]


def sufficient_condition_matrix(rsys, f: Multiplier, qbar, pbar):
    """(q, q)-block of the two-form df ^ Theta - f Xi (its only non-zero block)."""
    df = f.grad(qbar)
    pbar = np.asarray(pbar, dtype=float)
    return np.outer(df, pbar) - np.outer(pbar, df) - f(qbar) * rsys.xi_matrix(qbar, pbar)


def sufficient_condition_residual(rsys, f: Multiplier, qbar, pbar, ubar, wbar):
    return float(np.asarray(ubar) @ sufficient_condition_matrix(rsys, f, qbar, pbar) @ np.asarray(wbar))


def ns_condition_residual(rsys, f: Multiplier, qbar, pbar):
    """The one-form i_{X_C}(df ^ Theta - f Xi) as a 2*nbar covector."""
    S = sufficient_condition_matrix(rsys, f, qbar, pbar)
    qdot, _ = hamiltonized_field(rsys, f, qbar, pbar)
    return np.concatenate([S.T @ qdot, np.zeros(rsys.reduced_dim)])


def measure_divergence(rsys, density: MeasureDensity, qbar, pbar):
    """Divergence of the reduced field w.r.t. f**exponent times Liouville volume."""
    n = rsys.reduced_dim
    z = np.concatenate([qbar, pbar]).astype(float)
    return divergence(rsys.field_z, z, lambda y: density.log_density(y, n), engine=OUTER)


def reparameterized_field(rsys, f: Multiplier):
    """z -> X(z)/f, the time-rescaled reduced field."""
    n = rsys.reduced_dim

    def field(z):
        return rsys.field_z(z) / f(z[:n])

    return field


def chaplygin_field_z(rsys, f: Multiplier):
    n = rsys.reduced_dim

    def field(z):
        return np.concatenate(hamiltonized_field(rsys, f, z[:n], z[n:]))

    return field


def flow_conjugacy_check(rsys, f: Multiplier, z0, t, dt=1e-3):
    """Sup distance between the flow of X_C and Psi_f o flow(X/f) o Psi_{1/f}."""
    z0 = np.asarray(z0, dtype=float)
    if t == 0:
        return 0.0
    fwd = psi_f_map(f, "forward")
    inv = psi_f_map(f, "inverse")
    _, Zc = rk4(chaplygin_field_z(rsys, f), z0, t, dt)
    _, Zr = rk4(reparameterized_field(rsys, f), inv(z0), t, dt)
    mapped = np.array([fwd(z) for z in Zr])
    return float(np.max(np.abs(Zc - mapped)))


def conformal_form(rsys, f: Multiplier):
    """z -> matrix of f (Omega_bar - Xi)."""
    n = rsys.reduced_dim

    def form(z):
        q, p = z[:n], z[n:]
        W = canonical_form(n).astype(np.result_type(z, float))
        W[:n, :n] = W[:n, :n] - rsys.xi_matrix(q, p)
        return f(q) * W

    return form


def conformal_form_residual(rsys, f: Multiplier, qbar, pbar):
    """How far X/f is from being Hamiltonian for a closed form f (Omega_bar - Xi).

    Returns the larger of |i_{X/f} f(Omega_bar - Xi) - dH| and the sup of the
    exterior derivative of f (Omega_bar - Xi) over coordinate triples.
    """
    n = rsys.reduced_dim
    z = np.concatenate([qbar, pbar]).astype(float)
    form = conformal_form(rsys, f)
    X = rsys.field_z(z) / f(z[:n])
    dH = DEFAULT.gradient(rsys.hamiltonian_z, z)
    identity = float(np.max(np.abs(form(z).T @ X - dH)))
    return max(identity, closedness_residual_twoform(form, z))


def pullback_twoform_matrix(mapping, z, form_at):
    """Matrix of (mapping^* beta) at z given ``form_at(y)`` = matrix of beta at y."""
    T = DEFAULT.jacobian(mapping, z)
    return T.T @ form_at(mapping(z)) @ T


def pullback_oneform(mapping, z, oneform_at):
    T = DEFAULT.jacobian(mapping, z)
    return T.T @ oneform_at(mapping(z))


def liouville_theta(z):
    """Canonical one-form p dq as a covector on T*Q in (q, p) coordinates."""
    n = len(z) // 2
    return np.concatenate([z[n:], np.zeros(n)])


def condition_scan(rsys, f: Multiplier, samples, tangents):
    """Sup of |sufficient residual| over sample points and tangent pairs."""
    worst = 0.0
    for (qbar, pbar), (u, w) in zip(samples, tangents):
        worst = max(worst, abs(sufficient_condition_residual(rsys, f, qbar, pbar, u, w)))
    return worst
