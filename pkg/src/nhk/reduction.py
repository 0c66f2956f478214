"""Chaplygin reduction for abelian translation symmetries.

The translated coordinates are solved for from the constraints, which gives
the connection A = Omega_G^{-1} Omega (Omega_G being the block of Omega over
the translated columns) and the horizontal lift of reduced velocities.
Reduced points ``qbar`` are lifted to Q by putting the translated coordinates
at a fibre value (0 unless given); nothing depends on that choice because
the data are translation invariant.

Phase-space two-forms on T*Qbar are stored as matrices in the coordinates
(qbar, pbar).  The canonical form dq ^ dp is ``[[0, I], [-I, 0]]`` and the
Xi-term only has a (q, q) block.
"""
import numpy as np

from .diff import DEFAULT
from .dynamics import _rates
from .errors import DegenerateAlmostSymplectic, SingularConstraintGram, SingularMetric
from .manifold import PhasePoint


def canonical_form(n):
    W = np.zeros((2 * n, 2 * n))
    W[:n, n:] = np.eye(n)
    W[n:, :n] = -np.eye(n)
    return W


def canonical_field(H, z, engine=DEFAULT):
    """Canonical Hamiltonian vector field (dH/dp, -dH/dq) at z = (q, p)."""
    n = len(z) // 2
    dH = engine.gradient(H, z)
    return np.concatenate([dH[n:], -dH[:n]])


def almost_symplectic_field(W, dH):
    """Solve i_X W = dH, i.e. W^T X = dH."""
    try:
        X = np.linalg.solve(W.T, dH)
    except np.linalg.LinAlgError as exc:
        raise DegenerateAlmostSymplectic(str(exc)) from exc
    if not np.all(np.isfinite(X)):
        raise DegenerateAlmostSymplectic("two-form is degenerate")
    return X


class ReducedSystem:
    """Quotient of a ChartSystem by its translation group (no caching)."""

    def __init__(self, base, engine=DEFAULT):
        self.base = base
        self.engine = engine
        self.group_idx = list(base.group.translated_coords)
        self.shape_idx = [i for i in range(base.dim) if i not in self.group_idx]
        self.reduced_dim = len(self.shape_idx)
        self.reduced_coords = tuple(base.coord_names[i] for i in self.shape_idx)
        self.reduced_periodic = tuple(base.periodic[i] for i in self.shape_idx)

    # -- points
    def lift_point(self, qbar, fiber=None):
        qbar = np.asarray(qbar)
        q = np.zeros(self.base.dim, dtype=qbar.dtype)
        q[self.shape_idx] = qbar
        if fiber is not None:
            q[self.group_idx] = fiber
        return q

    def project_point(self, q):
        return np.asarray(q)[self.shape_idx]

    def _embed(self):
        E = np.zeros((self.base.dim, self.reduced_dim))
        E[self.shape_idx, range(self.reduced_dim)] = 1.0
        return E

    # -- connection and lifts
    def connection_matrix(self, q):
        om = self.base.omega(q)
        try:
            A = np.linalg.solve(om[:, self.group_idx], om)
        except np.linalg.LinAlgError as exc:
            raise SingularConstraintGram("translated directions fail to complement D") from exc
        if not np.all(np.isfinite(A)) or np.max(np.abs(A)) > 1e12:
            raise SingularConstraintGram("translated directions fail to complement D")
        return A

    def hl_d_matrix(self, q):
        """n x nbar matrix whose columns are horizontal lifts of the reduced basis."""
        E = self._embed().astype(np.result_type(q, float))
        if not self.group_idx:
            return E
        A = self.connection_matrix(q)
        H = E.copy()
        H[self.group_idx] = H[self.group_idx] - A @ E
        return H

    def reduced_metric(self, qbar, fiber=None):
        q = self.lift_point(qbar, fiber)
        H = self.hl_d_matrix(q)
        return H.T @ self.base.g(q) @ H

    def hl_m_matrix(self, q):
        H = self.hl_d_matrix(q)
        gq = self.base.g(q)
        gbar = H.T @ gq @ H
        try:
            return gq @ H @ np.linalg.inv(gbar)
        except np.linalg.LinAlgError as exc:
            raise SingularMetric(str(exc)) from exc

    def reduced_potential(self, qbar):
        return self.base.potential(self.lift_point(qbar))

    def reduced_hamiltonian(self, qbar, pbar):
        gbar = self.reduced_metric(qbar)
        pbar = np.asarray(pbar)
        try:
            kin = 0.5 * pbar @ np.linalg.solve(gbar, pbar)
        except np.linalg.LinAlgError as exc:
            raise SingularMetric(str(exc)) from exc
        return kin + self.reduced_potential(qbar)

    def hamiltonian_z(self, z):
        n = self.reduced_dim
        return self.reduced_hamiltonian(z[:n], z[n:])

    # -- curvature and Xi
    def connection_derivative(self, q):
        """dA[a, j, i] = d A^a_j / d q_i."""
        return self.engine.jacobian(self.connection_matrix, q)

    def curvature_coefficients(self, q):
        """B[a] = antisymmetric matrix of dA^a in full coordinates."""
        dA = self.connection_derivative(q)
        return np.transpose(dA, (0, 2, 1)) - dA  # [a, i, j] = d_i A_j - d_j A_i

    def reduced_curvature(self, q):
        """B[a, i, j] = B^a(hl e_i, hl e_j) over the reduced basis."""
        H = self.hl_d_matrix(q)
        return np.einsum("aij,ik,jl->akl", self.curvature_coefficients(q), H, H)

    def xi_matrix(self, qbar, pbar, fiber=None):
        q = self.lift_point(qbar, fiber)
        if not self.group_idx:
            return np.zeros((self.reduced_dim, self.reduced_dim))
        J = (self.hl_m_matrix(q) @ np.asarray(pbar))[self.group_idx]
        return np.einsum("a,akl->kl", J, self.reduced_curvature(q))

    def nh_form(self, qbar, pbar):
        """Matrix of the almost-symplectic form  Omega_bar - Xi  on T*Qbar."""
        n = self.reduced_dim
        W = canonical_form(n)
        W[:n, :n] -= self.xi_matrix(qbar, pbar)
        return W

    def hamiltonian_gradient(self, qbar, pbar):
        """(dH/dqbar, dH/dpbar); the momentum part is gbar^{-1} pbar in closed form."""
        qbar = np.asarray(qbar, dtype=float)
        pbar = np.asarray(pbar, dtype=float)
        dq = self.engine.gradient(lambda q: self.reduced_hamiltonian(q, pbar), qbar)
        try:
            dp = np.linalg.solve(self.reduced_metric(qbar), pbar)
        except np.linalg.LinAlgError as exc:
            raise SingularMetric(str(exc)) from exc
        return np.concatenate([dq, dp])

    def vector_field(self, qbar, pbar):
        n = self.reduced_dim
        X = almost_symplectic_field(self.nh_form(qbar, pbar), self.hamiltonian_gradient(qbar, pbar))
        return X[:n], X[n:]

    def field_z(self, z):
        n = self.reduced_dim
        return np.concatenate(self.vector_field(z[:n], z[n:]))

    # -- maps between full and reduced phase space
    def project_state(self, q, p):
        q = np.asarray(q, dtype=float)
        return self.project_point(q), self.hl_d_matrix(q).T @ np.asarray(p)

    def lift_state(self, qbar, pbar, fiber=None):
        q = self.lift_point(np.asarray(qbar, dtype=float), fiber)
        return PhasePoint(q, self.hl_m_matrix(q) @ np.asarray(pbar))

    def projected_full_field(self, qbar, pbar, fiber=None):
        """Full dynamics at the horizontal lift, pushed down to T*Qbar."""
        st = self.lift_state(qbar, pbar, fiber)
        qd, pd, _ = _rates(self.base, st.q, st.p)
        dH = self.engine.directional(self.hl_d_matrix, st.q, qd)
        pbar_dot = self.hl_d_matrix(st.q).T @ pd + dH.T @ st.p
        return qd[self.shape_idx], pbar_dot


# ----------------------------------------------------------- functional API

def connection(rsys: ReducedSystem, q, v):
    return rsys.connection_matrix(q) @ np.asarray(v)


def hl_d(rsys: ReducedSystem, q, vbar):
    return rsys.hl_d_matrix(q) @ np.asarray(vbar)


def hl_m(rsys: ReducedSystem, q, abar):
    return rsys.hl_m_matrix(q) @ np.asarray(abar)


def reduced_hamiltonian(rsys: ReducedSystem, qbar, pbar):
    return rsys.reduced_hamiltonian(qbar, pbar)


def curvature(rsys: ReducedSystem, q, u, w):
    """Curvature B(u, w) = dA(u, w), one component per Lie-algebra direction."""
    B = rsys.curvature_coefficients(q)
    return np.einsum("aij,i,j->a", B, np.asarray(u), np.asarray(w))


def curvature_from_bracket(rsys: ReducedSystem, q, i, j):
    """-A([Y_h, Z_h]) for the horizontal lifts of coordinate fields e_i, e_j on Qbar."""
    q = np.asarray(q, dtype=float)
    H = rsys.hl_d_matrix(q)
    DH = rsys.engine.partials(rsys.hl_d_matrix, q)  # DH[k] = d H / d q_k
    Yh, Zh = H[:, i], H[:, j]
    bracket = np.einsum("kn,k->n", DH[:, :, j], Yh) - np.einsum("kn,k->n", DH[:, :, i], Zh)
    return -rsys.connection_matrix(q) @ bracket


def momentum_map(rsys: ReducedSystem, q, p):
    return np.asarray(p)[rsys.group_idx]


def xi(rsys: ReducedSystem, qbar, pbar, ubar, wbar, fiber=None):
    return float(np.asarray(ubar) @ rsys.xi_matrix(qbar, pbar, fiber) @ np.asarray(wbar))


def reduced_vector_field(rsys: ReducedSystem, qbar, pbar):
    return rsys.vector_field(qbar, pbar)
