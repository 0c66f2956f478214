"""Randomised check suites over a system bundle.

Each check is a sup-residual over a sample grid compared against a
tolerance.  Records are plain dicts so they serialise straight to JSON.
"""
import numpy as np

from . import hamilton_jacobi as hj
from . import hamiltonization as hz
from . import second_stage as ss
from .errors import NHKError
from .manifold import check_invariants, legendre, legendre_inverse, m_projection_residual


def record(check, residual, tolerance, grid_spec=None, above=False):
    """One check result; ``above`` flips the test to residual > tolerance."""
    residual = float(residual)
    ok = residual > tolerance if above else residual < tolerance
    out = {
        "check": check,
        "condition": check,
        "residual": residual,
        "sup_residual": residual,
        "tolerance": float(tolerance),
        "pass": bool(ok and np.isfinite(residual)),
        "grid_spec": grid_spec or {},
    }
    if above:
        out["comparison"] = ">"
    return out


def _sup(values):
    return max((float(v) for v in values), default=0.0)


def core_suite(bundle, rng, points, fiber_draws, grid):
    rs = bundle.reduced
    sysm = bundle.system
    out = []
    Q = bundle.sample_q(rng, points)
    inv = check_invariants(sysm, Q)
    out.append(record("group_invariance", inv["translation_invariance"], 1e-10, grid))

    def roundtrip(q):
        p = rng.normal(size=sysm.dim)
        return np.max(np.abs(legendre(sysm, q, legendre_inverse(sysm, q, p)) - p))

    out.append(record("legendre_roundtrip", _sup(roundtrip(q) for q in Q), 1e-10, grid))
    pairs = bundle.sample_reduced(rng, points, 1)

    def pairing(qb, pb):
        q = rs.lift_point(qb)
        v = rng.normal(size=rs.reduced_dim)
        return abs((rs.hl_m_matrix(q) @ pb) @ (rs.hl_d_matrix(q) @ v) - pb @ v)

    out.append(record("pairing_identity", _sup(pairing(qb, pb) for qb, pb in pairs), 1e-10, grid))
    out.append(record("hl_m_in_M", _sup(m_projection_residual(sysm, rs.lift_point(qb), rs.hl_m_matrix(rs.lift_point(qb)) @ pb)
                                        for qb, pb in pairs), 1e-10, grid))
    if sysm.n_constraints:
        out.append(record("connection_kernel", _sup(np.max(np.abs(rs.connection_matrix(q) @ rs.hl_d_matrix(q))) for q in Q),
                          1e-9, grid))
    return out


def oracle_suite(bundle, rng, points, grid):
    """Numerically built objects against the closed forms kept in the bundle."""
    o = bundle.oracles
    rs = bundle.reduced
    out = []
    if not o:
        return out
    pairs = bundle.sample_reduced(rng, points, 1)
    scale = np.ones(rs.reduced_dim)
    hl_key, h_key = "hl_m", "hbar"
    if "momentum_scale" in o:
        scale[-1] = o["momentum_scale"]
        hl_key, h_key = "hl_m_scaled", "hbar_scaled"
    out.append(record("oracle_hl_m", _sup(np.max(np.abs(rs.hl_m_matrix(rs.lift_point(qb)) @ (scale * pb)
                                                        - o[hl_key](rs.lift_point(qb), pb))) for qb, pb in pairs), 1e-9, grid))
    out.append(record("oracle_hbar", _sup(abs(rs.reduced_hamiltonian(qb, scale * pb) - o[h_key](qb, pb))
                                          for qb, pb in pairs), 1e-9, grid))
    out.append(record("oracle_xi", _sup(np.max(np.abs(rs.xi_matrix(qb, pb) - o["xi"](qb, pb))) for qb, pb in pairs),
                      1e-9, grid))
    if "hbar_c" in o and bundle.multiplier is not None:
        out.append(record("oracle_hbar_c", _sup(abs(hz.chaplygin_hamiltonian(rs, bundle.multiplier, qb, pb) - o["hbar_c"](qb, pb))
                                                for qb, pb in pairs), 1e-9, grid))
    if bundle.tilde is not None and "htilde_c" in o:
        mu = float(bundle.second_stage.mu[0])
        tp = bundle.sample_tilde(rng, points, 1)
        t = bundle.tilde
        out.append(record("oracle_htilde", _sup(abs(t.reduced_hamiltonian(qt, pt) - o["htilde"](qt, pt, mu)) for qt, pt in tp),
                          1e-9, grid))
        out.append(record("oracle_xi_tilde", _sup(np.max(np.abs(t.xi_matrix(qt, pt) - o["xi_tilde"](qt, pt))) for qt, pt in tp),
                          1e-9, grid))
        out.append(record("oracle_htilde_c", _sup(abs(ss.second_chaplygin_hamiltonian(t, qt, pt) - o["htilde_c"](qt, pt, mu))
                                                  for qt, pt in tp), 1e-9, grid))
    return out


def multiplier_suite(bundle, rng, points, fiber_draws, grid):
    rs, f = bundle.reduced, bundle.multiplier
    out = []
    if f is None:
        return out
    n = rs.reduced_dim
    dense = bundle.sample_reduced(rng, points, fiber_draws)
    out.append(record("sufficient_condition",
                      _sup(np.max(np.abs(hz.sufficient_condition_matrix(rs, f, qb, pb))) for qb, pb in dense), 1e-9, grid))
    pairs = bundle.sample_reduced(rng, points, 1)
    out.append(record("ns_condition", _sup(np.max(np.abs(hz.ns_condition_residual(rs, f, qb, pb))) for qb, pb in pairs),
                      1e-8, grid))

    def field_gap(qb, pb):
        a = np.concatenate(hz.hamiltonized_field(rs, f, qb, pb))
        b = np.concatenate(hz.chaplygin_canonical_field(rs, f, qb, pb))
        return np.max(np.abs(a - b))

    out.append(record("hamiltonized_field_vs_canonical", _sup(field_gap(qb, pb) for qb, pb in pairs), 1e-7, grid))
    dens = hz.MeasureDensity(n - 1, f)
    out.append(record("invariant_measure", _sup(abs(hz.measure_divergence(rs, dens, qb, pb)) for qb, pb in pairs),
                      1e-6, grid))
    return out


def second_stage_suite(bundle, rng, points, fiber_draws, grid):
    setup, t = bundle.second_stage, bundle.tilde
    out = []
    if setup is None:
        return out
    rs = bundle.reduced
    mu = setup.mu
    reduced = bundle.sample_reduced(rng, points, 1)
    cond = ss.check_conditions(setup, reduced)
    for key, val in cond.items():
        out.append(record(f"second_stage_{key}", val, 1e-9, grid))
    dense = bundle.sample_tilde(rng, points, fiber_draws)
    if t.f_mu is not None:
        out.append(record("second_sufficient_condition",
                          _sup(np.max(np.abs(ss.second_sufficient_matrix(t, qt, pt))) for qt, pt in dense), 1e-8, grid))
        tp = bundle.sample_tilde(rng, points, 1)
        dens = hz.MeasureDensity(t.reduced_dim - 1, t.f_mu)
        out.append(record("second_invariant_measure", _sup(abs(hz.measure_divergence(t, dens, qt, pt)) for qt, pt in tp),
                          1e-6, grid))

    def roundtrip(qb, pb):
        pb = pb.copy()
        pb[list(setup.k_idx)] = mu
        qs = setup.slice_point(qb[setup.tilde_idx])
        qt, pt = ss.phi_mu(setup, qs, pb)
        qb2, pb2 = ss.phi_mu_inverse(setup, qt, pt)
        return np.max(np.abs(pb2 - pb))

    out.append(record("phi_mu_roundtrip", _sup(roundtrip(qb, pb) for qb, pb in reduced), 1e-10, grid))

    def appendix_c(qb, pb):
        pt = pb[setup.tilde_idx]
        return np.max(np.abs(ss.phi_bar_0(setup, ss.bar_horizontal_lift_mom(setup, qb, pt)) - pt))

    out.append(record("lift_then_identify", _sup(appendix_c(qb, pb) for qb, pb in reduced), 1e-10, grid))
    # first stage: no multiplier of the form f(phi) from a small candidate family works
    cands = [lambda q, k=k: np.sin(q[1]) ** k for k in (0.5, 1.0, 2.0)] + [lambda q: np.cos(q[1]) + 2.0]
    worst = np.inf
    for c in cands:
        f = hz.Multiplier(c)
        worst = min(worst, _sup(np.max(np.abs(hz.ns_condition_residual(rs, f, qb, pb))) for qb, pb in reduced))
    out.append(record("first_stage_not_hamiltonizable", worst, 1e-3, grid, above=True))
    return out


def hj_solution(bundle, energy=None, constants=None, sign=1):
    d = bundle.hj_defaults
    E = d.get("energy") if energy is None else energy
    c = dict(d.get("constants", {}))
    c.update(constants or {})
    sol = hj.separable_solve(bundle.name, E, c, bundle.params, sign)
    if bundle.tilde is not None:
        gamma = hj.gamma_second_stage(bundle.second_stage, bundle.tilde, sol)
        H_c = lambda qt, pt: ss.second_chaplygin_hamiltonian(bundle.tilde, qt, pt)  # noqa: E731
    else:
        gamma = hj.gamma_first_stage(bundle.reduced, bundle.multiplier, sol)
        H_c = lambda qb, pb: hz.chaplygin_hamiltonian(bundle.reduced, bundle.multiplier, qb, pb)  # noqa: E731
    return sol, gamma, H_c


def hj_suite(bundle, rng, points, grid, energy=None, constants=None, sign=1):
    out = []
    sol, gamma, H_c = hj_solution(bundle, energy, constants, sign)
    Q = bundle.sample_q(rng, points)
    rs = bundle.reduced
    if bundle.tilde is not None:
        base = [q[rs.shape_idx][bundle.second_stage.tilde_idx] for q in Q]
    else:
        base = [rs.project_point(q) for q in Q]
    try:
        out.append(record("chaplygin_hj", hj.hj_residual(H_c, sol, base), 1e-9, grid))
        out.append(record("dW_closed", _sup(sol.form.closedness_residual(b) for b in base), 1e-8, grid))
        res = hj.nh_hj_verify(bundle.system, gamma, sol.energy, Q, rs)
    except NHKError as exc:
        out.append(record("hj_domain", np.inf, 0.0, dict(grid, error=str(exc))))
        return out, sol, gamma
    for key, val in res.items():
        out.append(record(f"nh_hj_{key}", val, 1e-8, grid))
    return out, sol, gamma


def run_all(bundle, seed=0, points=200, fiber_draws=20):
    rng = np.random.default_rng(seed)
    grid = {"points": points, "fiber_draws": fiber_draws, "seed": seed, "domain": _domain_spec(bundle)}
    out = []
    out += core_suite(bundle, rng, points, fiber_draws, grid)
    out += oracle_suite(bundle, rng, points, grid)
    out += multiplier_suite(bundle, rng, points, fiber_draws, grid)
    out += second_stage_suite(bundle, rng, points, fiber_draws, grid)
    if bundle.hj_defaults:
        out += hj_suite(bundle, rng, points, grid)[0]
    return out


def _domain_spec(bundle):
    return {"q": np.asarray(bundle.domain["q"], dtype=float).tolist(),
            "p": np.asarray(bundle.domain["p"], dtype=float).tolist()}
