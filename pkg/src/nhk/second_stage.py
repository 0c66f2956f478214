"""Second reduction by a translation symmetry K of the reduced system.

K acts on the reduced coordinates listed in ``k_idx``.  At momentum level
J_K = mu the reduced dynamics descends to T*Qtilde, Qtilde being the
remaining ("tilde") coordinates.  Level points are identified with T*Qtilde by

    phi_mu(qbar, pbar) = (qbar[tilde], (pbar - alpha_mu)[tilde]),
    phi_mu^{-1}(qt, pt) = (slice(qt), hl_Mbar(pt) + alpha_mu),

where the slice puts the K-coordinates at 0 and alpha_mu = A_K^T mu is the
mechanical-connection one-form.  Everything on T*Qtilde is evaluated by
pulling points back to T*Qbar through phi_mu^{-1}.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .diff import DEFAULT, exterior_derivative_matrix
from .errors import NotBasic, SingularInertia, WrongLevel
from .hamiltonization import Multiplier, psi_f
from .reduction import almost_symplectic_field, canonical_form

LEVEL_TOL = 1e-9
BASIC_TOL = 1e-9


@dataclass(frozen=True)
class SecondStageSetup:
    rsys: object
    k_idx: tuple
    mu: np.ndarray
    f_mu: Optional[Multiplier] = None
    labels: tuple = field(default=())

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        if mu.shape != (len(self.k_idx),):
            raise ValueError("mu must have one component per K direction")
        object.__setattr__(self, "mu", mu)

    @property
    def tilde_idx(self):
        return [i for i in range(self.rsys.reduced_dim) if i not in self.k_idx]

    @property
    def tilde_dim(self):
        return self.rsys.reduced_dim - len(self.k_idx)

    @property
    def tilde_coords(self):
        return tuple(self.rsys.reduced_coords[i] for i in self.tilde_idx)

    def embed(self):
        E = np.zeros((self.rsys.reduced_dim, self.tilde_dim))
        E[self.tilde_idx, range(self.tilde_dim)] = 1.0
        return E

    def vertical(self):
        V = np.zeros((self.rsys.reduced_dim, len(self.k_idx)))
        V[list(self.k_idx), range(len(self.k_idx))] = 1.0
        return V

    def slice_point(self, qt, fiber=None):
        qt = np.asarray(qt)
        qbar = np.zeros(self.rsys.reduced_dim, dtype=qt.dtype)
        qbar[self.tilde_idx] = qt
        if fiber is not None:
            qbar[list(self.k_idx)] = fiber
        return qbar


def k_momentum(setup, qbar, pbar):
    return np.asarray(pbar)[list(setup.k_idx)]


def _inertia(setup, gbar):
    k = list(setup.k_idx)
    I = gbar[np.ix_(k, k)]
    if abs(np.linalg.det(np.real(I))) < 1e-14:
        raise SingularInertia("locked inertia tensor is singular")
    return I


def _mech(setup, gbar):
    return np.linalg.solve(_inertia(setup, gbar), gbar[list(setup.k_idx), :])


def locked_inertia(setup, qbar):
    return _inertia(setup, setup.rsys.reduced_metric(qbar))


def mechanical_connection_matrix(setup, qbar):
    """k x nbar matrix of A_K = I^{-1} J_K o FLbar."""
    return _mech(setup, setup.rsys.reduced_metric(qbar))


def mechanical_connection(setup, qbar, vbar):
    return mechanical_connection_matrix(setup, qbar) @ np.asarray(vbar)


def alpha_mu(setup, qbar):
    return mechanical_connection_matrix(setup, qbar).T @ setup.mu


def beta_mu_matrix(setup, qbar):
    """Matrix of d(alpha_mu) at qbar; raises NotBasic if it sees vertical directions."""
    D = exterior_derivative_matrix(lambda q: alpha_mu(setup, q), qbar)
    vert = np.max(np.abs(D[list(setup.k_idx), :])) if D.size else 0.0
    if vert > BASIC_TOL:
        raise NotBasic(f"d(alpha_mu) contracted with K-directions is {vert:.3e}")
    return D


def _hl_dbar(setup, gbar):
    E = setup.embed()
    return E - setup.vertical() @ _mech(setup, gbar) @ E


def hl_dbar_matrix(setup, qbar):
    """nbar x ntilde matrix of the mechanical-connection horizontal lift."""
    return _hl_dbar(setup, setup.rsys.reduced_metric(qbar))


def tilde_metric(setup, qbar):
    gbar = setup.rsys.reduced_metric(qbar)
    H = _hl_dbar(setup, gbar)
    return H.T @ gbar @ H


def _hl_mbar(setup, gbar):
    H = _hl_dbar(setup, gbar)
    return gbar @ H @ np.linalg.inv(H.T @ gbar @ H)


def hl_mbar_matrix(setup, qbar):
    return _hl_mbar(setup, setup.rsys.reduced_metric(qbar))


def bar_horizontal_lift_mom(setup, qbar, pt):
    return hl_mbar_matrix(setup, qbar) @ np.asarray(pt)


def b_k_mu(setup, qt, ut, wt):
    """Curvature term B^K_mu(ut, wt) on Qtilde."""
    qbar = setup.slice_point(qt)
    H = hl_dbar_matrix(setup, qbar)
    return float(np.asarray(ut) @ (H.T @ beta_mu_matrix(setup, qbar) @ H) @ np.asarray(wt))


def shift(setup, qbar, pbar):
    return np.asarray(pbar) - alpha_mu(setup, qbar)


def unshift(setup, qbar, pbar):
    return np.asarray(pbar) + alpha_mu(setup, qbar)


def phi_bar_0(setup, pbar):
    """Identify a covector annihilating the K-directions with a covector on Qtilde."""
    return np.asarray(pbar)[setup.tilde_idx]


def phi_mu(setup, qbar, pbar):
    level = k_momentum(setup, qbar, pbar)
    if np.max(np.abs(level - setup.mu), initial=0.0) > LEVEL_TOL:
        raise WrongLevel(f"J_K = {np.real(level)} but mu = {setup.mu}")
    qbar = np.asarray(qbar)
    return qbar[setup.tilde_idx], phi_bar_0(setup, shift(setup, qbar, pbar))


def phi_mu_inverse(setup, qt, pt, fiber=None):
    qbar = setup.slice_point(qt, fiber)
    gbar = setup.rsys.reduced_metric(qbar)
    return qbar, _hl_mbar(setup, gbar) @ np.asarray(pt) + _mech(setup, gbar).T @ setup.mu


def check_conditions(setup, samples, engine=DEFAULT):
    """Worst-case values of the structural conditions over (qbar, pbar) samples.

    invariance: derivative of Hbar along K-directions; xi_vertical: Xi contracted
    with K-directions; alpha_level: |J_K(alpha_mu) - mu|; alpha_invariance:
    derivative of alpha_mu along K-directions; beta_vertical: d(alpha_mu)
    contracted with K-directions.
    """
    rsys = setup.rsys
    n = rsys.reduced_dim
    k = list(setup.k_idx)
    out = dict.fromkeys(["invariance", "xi_vertical", "alpha_level", "alpha_invariance", "beta_vertical"], 0.0)
    for qbar, pbar in samples:
        z = np.concatenate([qbar, pbar])
        for a in k:
            e = np.zeros(2 * n)
            e[a] = 1.0
            out["invariance"] = max(out["invariance"], abs(float(engine.directional(rsys.hamiltonian_z, z, e))))
            ea = np.zeros(n)
            ea[a] = 1.0
            da = engine.directional(lambda q: alpha_mu(setup, q), qbar, ea)
            out["alpha_invariance"] = max(out["alpha_invariance"], float(np.max(np.abs(da))))
        K = rsys.xi_matrix(qbar, pbar)
        out["xi_vertical"] = max(out["xi_vertical"], float(np.max(np.abs(K[k, :]))))
        al = alpha_mu(setup, qbar)
        out["alpha_level"] = max(out["alpha_level"], float(np.max(np.abs(al[k] - setup.mu))))
        D = exterior_derivative_matrix(lambda q: alpha_mu(setup, q), qbar)
        out["beta_vertical"] = max(out["beta_vertical"], float(np.max(np.abs(D[k, :]))))
    return out


class TildeSystem:
    """Doubly reduced system on T*Qtilde at level mu.

    Exposes the same evaluator names as the first-stage reduced system so the
    multiplier machinery applies unchanged.
    """

    def __init__(self, setup: SecondStageSetup, engine=DEFAULT):
        self.setup = setup
        self.engine = engine
        self.reduced_dim = setup.tilde_dim
        self.reduced_coords = setup.tilde_coords
        self.f_mu = setup.f_mu

    def lift(self, qt, pt):
        return phi_mu_inverse(self.setup, qt, pt)

    def reduced_hamiltonian(self, qt, pt):
        qbar, pbar = self.lift(qt, pt)
        return self.setup.rsys.reduced_hamiltonian(qbar, pbar)

    def hamiltonian_z(self, z):
        n = self.reduced_dim
        return self.reduced_hamiltonian(z[:n], z[n:])

    def xi_matrix(self, qt, pt):
        qbar, pbar = self.lift(qt, pt)
        E = self.setup.embed()
        return E.T @ self.setup.rsys.xi_matrix(qbar, pbar) @ E

    def b_matrix(self, qt):
        qbar = self.setup.slice_point(np.asarray(qt))
        H = hl_dbar_matrix(self.setup, qbar)
        return H.T @ beta_mu_matrix(self.setup, qbar) @ H

    def nh_form(self, qt, pt):
        n = self.reduced_dim
        W = canonical_form(n)
        W[:n, :n] -= self.b_matrix(qt) + self.xi_matrix(qt, pt)
        return W

    def vector_field(self, qt, pt):
        n = self.reduced_dim
        z = np.concatenate([qt, pt])
        X = almost_symplectic_field(self.nh_form(qt, pt), self.engine.gradient(self.hamiltonian_z, z))
        return X[:n], X[n:]

    def field_z(self, z):
        n = self.reduced_dim
        return np.concatenate(self.vector_field(z[:n], z[n:]))


def tilde_assemble(setup: SecondStageSetup, samples=None, tol=1e-8):
    """Build the doubly reduced system, optionally checking the conditions first."""
    if samples is not None:
        worst = check_conditions(setup, samples)
        bad = {k: v for k, v in worst.items() if v > tol}
        if bad.get("beta_vertical"):
            raise NotBasic(f"d(alpha_mu) is not basic: {bad['beta_vertical']:.3e}")
        if bad:
            raise ValueError(f"second-stage conditions fail: {bad}")
    return TildeSystem(setup)


def second_sufficient_matrix(tsys: TildeSystem, qt, pt):
    """(q, q)-block of df_mu ^ Theta - f_mu^2 (B + Xi/f_mu)."""
    f = tsys.f_mu
    fq = f(qt)
    df = f.grad(qt)
    pt = np.asarray(pt, dtype=float)
    return (np.outer(df, pt) - np.outer(pt, df)
            - fq**2 * tsys.b_matrix(qt) - fq * tsys.xi_matrix(qt, pt))


def second_sufficient_residual(tsys: TildeSystem, qt, pt, ut, wt):
    return float(np.asarray(ut) @ second_sufficient_matrix(tsys, qt, pt) @ np.asarray(wt))


def second_chaplygin_hamiltonian(tsys: TildeSystem, qt, pt):
    return tsys.reduced_hamiltonian(qt, psi_f(tsys.f_mu, qt, pt, "inverse"))
