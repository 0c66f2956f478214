"""Full nonholonomic Hamilton equations with Lagrange multipliers.

    q' = g^{-1} p,     p' = -dH/dq + Omega(q)^T lambda,

where lambda is fixed by differentiating the constraint Omega(q) q' = 0 once
in time (index reduction).  Integration is fixed-step RK4 by default; an
adaptive RK45 from scipy is offered for convenience.
"""
import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .diff import DEFAULT
from .errors import ConstraintViolation, SingularConstraintGram, SingularMetric, StepRejected
from .manifold import PhasePoint, hamiltonian, m_projection_residual, project_to_M

GRAM_COND_LIMIT = 1e12


def _solve(a, b, exc=SingularMetric):
    try:
        return np.linalg.solve(a, b)
    except np.linalg.LinAlgError as err:
        raise exc(str(err)) from err


def _rates(system, q, p, engine=DEFAULT):
    g = system.g(q)
    dg = engine.partials(system.metric, q)  # dg[k] = d g / d q_k
    dV = engine.gradient(system.potential, q)
    v = _solve(g, p)
    dHdq = -0.5 * np.einsum("kij,i,j->k", dg, v, v) + dV
    if system.n_constraints == 0:
        return v, -dHdq, np.zeros(0)
    om = system.omega(q)
    dom = np.asarray(engine.directional(system.constraints, q, v)).reshape(om.shape)
    Dg_v = np.einsum("kij,k->ij", dg, v)
    dginv_p = -_solve(g, Dg_v @ v)  # D(g^-1)[q'] p
    ginv_omT = _solve(g, om.T)
    gram = om @ ginv_omT
    if not np.all(np.isfinite(gram)) or np.linalg.cond(gram) > GRAM_COND_LIMIT:
        raise SingularConstraintGram("constraint Gram matrix is singular at q = %s" % np.array2string(np.real(q)))
    rhs = -dom @ v - om @ dginv_p + ginv_omT.T @ dHdq
    lam = _solve(gram, rhs, SingularConstraintGram)
    return v, -dHdq + om.T @ lam, lam


def full_vector_field(system, state: PhasePoint, engine=DEFAULT):
    """Return (q', p', lambda) at ``state``."""
    return _rates(system, state.q, state.p, engine)


@dataclass
class IntegratorConfig:
    scheme: str = "RK4"
    dt: float = 1e-3
    t_end: float = 5.0
    projection: bool = False
    rtol: float = 1e-10
    atol: float = 1e-12

    def __post_init__(self):
        if self.scheme not in ("RK4", "RK45"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be non-negative")

    def to_dict(self):
        return asdict(self)


@dataclass
class Trajectory:
    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    energy: np.ndarray
    coord_names: tuple
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    residuals: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self):
        if len(self.times) != len(self.q) or len(self.q) != len(self.p):
            raise ValueError("times and states must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def states(self):
        return [PhasePoint(q, p) for q, p in zip(self.q, self.p)]

    def __len__(self):
        return len(self.times)


def rk4(rhs, z0, t_end, dt, post_step=None):
    """Fixed-step classical Runge-Kutta for an autonomous ``rhs(z)``.

    The step is shrunk slightly so that ``t_end`` is hit exactly.
    """
    z = np.array(z0, dtype=float)
    nsteps = int(math.ceil(t_end / dt - 1e-9)) if t_end > 0 else 0
    h = t_end / nsteps if nsteps else 0.0
    out = np.empty((nsteps + 1, z.size))
    out[0] = z
    for k in range(nsteps):
        k1 = rhs(z)
        k2 = rhs(z + 0.5 * h * k1)
        k3 = rhs(z + 0.5 * h * k2)
        k4 = rhs(z + h * k3)
        z = z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if post_step is not None:
            z = post_step(z)
        out[k + 1] = z
    return np.linspace(0.0, t_end, nsteps + 1), out


def integrate_ode(rhs, z0, cfg: IntegratorConfig, post_step=None):
    if cfg.scheme == "RK4" or cfg.t_end == 0:
        return rk4(rhs, z0, cfg.t_end, cfg.dt, post_step)
    nsteps = int(math.ceil(cfg.t_end / cfg.dt - 1e-9))
    grid = np.linspace(0.0, cfg.t_end, nsteps + 1)
    sol = solve_ivp(lambda t, z: rhs(z), (0.0, cfg.t_end), np.asarray(z0, dtype=float),
                    method="RK45", t_eval=grid, rtol=cfg.rtol, atol=cfg.atol)
    if not sol.success:
        raise StepRejected(sol.message)
    return sol.t, sol.y.T


def integrate(system, state0: PhasePoint, cfg: IntegratorConfig = None, engine=DEFAULT):
    """Integrate the constrained equations from ``state0`` (which must lie on M)."""
    cfg = cfg or IntegratorConfig()
    n = system.dim
    res0 = m_projection_residual(system, state0.q, state0.p)
    if res0 > 1e-6:
        raise ConstraintViolation(f"initial momentum is off M (residual {res0:.3e})")

    def rhs(z):
        qd, pd, _ = _rates(system, z[:n], z[n:], engine)
        return np.concatenate([qd, pd])

    post = None
    if cfg.projection:
        def post(z):
            return np.concatenate([z[:n], project_to_M(system, z[:n], z[n:])])

    times, Z = integrate_ode(rhs, state0.as_vector(), cfg, post)
    return _with_diagnostics(system, times, Z[:, :n], Z[:, n:], engine)


def _with_diagnostics(system, times, Q, P, engine=DEFAULT):
    m = system.n_constraints
    energy = np.empty(len(times))
    lam = np.empty((len(times), m))
    res = np.empty((len(times), m))
    for k, (q, p) in enumerate(zip(Q, P)):
        v, _, lam[k] = _rates(system, q, p, engine)
        energy[k] = hamiltonian(system, q, p)
        res[k] = system.omega(q) @ v if m else np.zeros(0)
    return Trajectory(times, Q, P, energy, tuple(system.coord_names), lam, res)


def monitor(traj: Trajectory, system):
    """Drift diagnostics of a full trajectory (a plain dict report)."""
    e = traj.energy
    m_res = 0.0
    for q, p in zip(traj.q, traj.p):
        m_res = max(m_res, float(np.max(np.abs(p - project_to_M(system, q, p)))) if system.n_constraints else 0.0)
    return {
        "energy_drift": float(np.max(np.abs(e - e[0]))) if len(e) else 0.0,
        "constraint_residual": float(np.max(np.abs(traj.residuals))) if traj.residuals.size else 0.0,
        "m_residual": m_res,
        "samples": len(traj),
    }


# ---------------------------------------------------------------- export

def _fmt(x):
    return repr(float(x))


def write_trajectory_csv(path, traj: Trajectory):
    names = list(traj.coord_names)
    m = traj.multipliers.shape[1] if traj.multipliers.ndim == 2 else 0
    header = (["t"] + names + ["p_" + c for c in names] + ["H"]
              + [f"lambda_{s}" for s in range(m)] + [f"constraint_{s}" for s in range(m)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(len(traj)):
            row = [traj.times[k], *traj.q[k], *traj.p[k], traj.energy[k]]
            if m:
                row += list(traj.multipliers[k]) + list(traj.residuals[k])
            w.writerow([_fmt(x) for x in row])


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not serialisable: {type(obj)}")


def content_hash(payload):
    """Git blob hash of the canonical JSON encoding of ``payload``."""
    data = canonical_json(payload).encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_manifest(path, system_name, params, config, extra=None):
    inputs = {"system": system_name, "params": params, "config": config}
    manifest = dict(inputs)
    manifest["content_hash"] = content_hash(inputs)
    if extra:
        manifest.update(extra)
    with open(path, "w") as fh:
        fh.write(canonical_json(manifest))
    return manifest
