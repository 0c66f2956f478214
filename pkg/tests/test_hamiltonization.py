import numpy as np
import pytest

from nhk import hamiltonization as hz
from nhk.diff import divergence, wedge_square_4
from nhk.errors import ZeroMultiplier
from nhk.reduction import canonical_form

ONE = hz.Multiplier.constant(1.0)


def test_psi_identity_for_unit_multiplier(rng):
    pb = rng.normal(size=3)
    np.testing.assert_array_equal(hz.psi_f(ONE, np.zeros(3), pb), pb)


def test_psi_knife_edge_value(knife):
    out = hz.psi_f(knife.multiplier, np.array([np.pi / 3, 0.0]), np.array([2.0, 2.0]))
    np.testing.assert_allclose(out, [1.0, 1.0], rtol=1e-15)


def test_psi_roundtrip(knife, rng):
    f = knife.multiplier
    for qb, pb in knife.sample_reduced(rng, 50):
        back = hz.psi_f(f, qb, hz.psi_f(f, qb, pb, "forward"), "inverse")
        np.testing.assert_allclose(back, pb, rtol=1e-12, atol=1e-12)


def test_zero_multiplier_raises():
    f = hz.Multiplier(lambda q: np.cos(q[0]))
    with pytest.raises(ZeroMultiplier):
        f(np.array([np.pi / 2]))


def test_chaplygin_hamiltonian_vrd_is_hbar(vrd, rng):
    for qb, pb in vrd.sample_reduced(rng, 20):
        assert hz.chaplygin_hamiltonian(vrd.reduced, vrd.multiplier, qb, pb) == vrd.reduced.reduced_hamiltonian(qb, pb)


def test_chaplygin_hamiltonian_knife_edge(knife, rng):
    for qb, pb in knife.sample_reduced(rng, 50):
        val = hz.chaplygin_hamiltonian(knife.reduced, knife.multiplier, qb, pb)
        assert abs(val - knife.oracles["hbar_c"](qb, pb)) < 1e-12
    qb = np.array([0.5, 2.0])
    assert hz.chaplygin_hamiltonian(knife.reduced, knife.multiplier, qb, np.zeros(2)) == pytest.approx(
        knife.reduced.reduced_potential(qb), abs=1e-15)


def test_hamiltonized_field_unit_multiplier(knife, rng):
    for qb, pb in knife.sample_reduced(rng, 10):
        a = np.concatenate(hz.hamiltonized_field(knife.reduced, ONE, qb, pb))
        b = np.concatenate(knife.reduced.vector_field(qb, pb))
        np.testing.assert_allclose(a, b, atol=1e-14)


@pytest.mark.parametrize("name", ["vrd", "knife-edge"])
def test_hamiltonized_field_is_canonical(name, vrd, knife, rng):
    b = vrd if name == "vrd" else knife
    for qb, pb in b.sample_reduced(rng, 100):
        a = np.concatenate(hz.hamiltonized_field(b.reduced, b.multiplier, qb, pb))
        c = np.concatenate(hz.chaplygin_canonical_field(b.reduced, b.multiplier, qb, pb))
        assert np.max(np.abs(a - c)) < 1e-7


def test_sufficient_condition_knife_edge(knife, rng):
    rs, f = knife.reduced, knife.multiplier
    worst = 0.0
    for qb, pb in knife.sample_reduced(rng, 100, 5):
        u, w = rng.normal(size=2), rng.normal(size=2)
        worst = max(worst, abs(hz.sufficient_condition_residual(rs, f, qb, pb, u, w)))
    assert worst < 1e-9


def test_sufficient_condition_vrd_exact(vrd, rng):
    for qb, pb in vrd.sample_reduced(rng, 20):
        # df = 0 exactly; Xi cancels to roundoff
        assert np.max(np.abs(hz.sufficient_condition_matrix(vrd.reduced, vrd.multiplier, qb, pb))) < 1e-15


def test_wrong_multiplier_leaves_xi(knife, rng):
    rs = knife.reduced
    for qb, pb in knife.sample_reduced(rng, 20):
        u, w = rng.normal(size=2), rng.normal(size=2)
        res = hz.sufficient_condition_residual(rs, ONE, qb, pb, u, w)
        xi = u @ rs.xi_matrix(qb, pb) @ w
        assert abs(abs(res) - abs(xi)) < 1e-12
    assert abs(xi) > 1e-3


def test_ns_condition(vrd, knife, snake, rng):
    for qb, pb in knife.sample_reduced(rng, 50):
        assert np.max(np.abs(hz.ns_condition_residual(knife.reduced, knife.multiplier, qb, pb))) < 1e-8
    for qb, pb in vrd.sample_reduced(rng, 20):
        assert np.max(np.abs(hz.ns_condition_residual(vrd.reduced, vrd.multiplier, qb, pb))) < 1e-14


@pytest.mark.parametrize("k", [0.5, 1.0, 2.0, 3.0])
def test_snakeboard_first_stage_candidates_fail(snake, k, rng):
    f = hz.Multiplier(lambda q: np.sin(q[1]) ** k)
    worst = max(np.max(np.abs(hz.ns_condition_residual(snake.reduced, f, qb, pb)))
                for qb, pb in snake.sample_reduced(rng, 30))
    assert worst > 1e-2


def test_invariant_measure_knife_edge(knife, rng):
    rs, f = knife.reduced, knife.multiplier
    good = hz.MeasureDensity(1, f)
    bad = hz.MeasureDensity(2, f)
    worst_bad = 0.0
    for qb, pb in knife.sample_reduced(rng, 50):
        assert abs(hz.measure_divergence(rs, good, qb, pb)) < 1e-6
        worst_bad = max(worst_bad, abs(hz.measure_divergence(rs, bad, qb, pb)))
    assert worst_bad > 1e-3


def test_liouville_vrd(vrd, rng):
    for qb, pb in vrd.sample_reduced(rng, 20):
        assert abs(hz.measure_divergence(vrd.reduced, hz.MeasureDensity(0, ONE), qb, pb)) < 1e-8


def test_flow_conjugacy(vrd, knife):
    assert hz.flow_conjugacy_check(knife.reduced, knife.multiplier, [0.6, 1.0, 0.2, 0.4], 0.0) == 0.0
    assert hz.flow_conjugacy_check(vrd.reduced, vrd.multiplier, [0.1, 0.2, 1.0, -0.5], 1.0, dt=1e-2) < 1e-9
    assert hz.flow_conjugacy_check(knife.reduced, knife.multiplier, [0.6, 1.0, 0.2, 0.4], 0.5, dt=1e-3) < 1e-6


def test_conformal_form(knife, vrd, rng):
    for qb, pb in knife.sample_reduced(rng, 5):
        assert hz.conformal_form_residual(knife.reduced, knife.multiplier, qb, pb) < 1e-8
        assert hz.conformal_form_residual(vrd.reduced, ONE, *vrd.sample_reduced(rng, 1)[0]) < 1e-8
    generic = max(hz.conformal_form_residual(knife.reduced, ONE, qb, pb) for qb, pb in knife.sample_reduced(rng, 5))
    assert generic > 1e-3


def test_hamiltonized_energy_conserved(knife):
    from nhk.dynamics import rk4
    rs, f = knife.reduced, knife.multiplier
    z0 = np.array([0.6, 1.0, 0.05, 0.4])
    _, Z = rk4(hz.chaplygin_field_z(rs, f), z0, 5.0, 1e-2)
    H = np.array([hz.chaplygin_hamiltonian(rs, f, z[:2], z[2:]) for z in Z])
    assert np.max(np.abs(H - H[0])) < 1e-7


# ---------------------------------------------------------------- pullback identities

def test_pullback_theta_and_xi(knife, rng):
    rs, f = knife.reduced, knife.multiplier
    inv = hz.psi_f_map(f, "inverse")

    def xi_form(y):
        W = np.zeros((4, 4))
        W[:2, :2] = rs.xi_matrix(y[:2], y[2:])
        return W

    for qb, pb in knife.sample_reduced(rng, 30):
        z = np.concatenate([qb, pb])
        th = hz.pullback_oneform(inv, z, hz.liouville_theta)
        np.testing.assert_allclose(th, hz.liouville_theta(z) / f(qb), atol=1e-9)
        P = hz.pullback_twoform_matrix(inv, z, xi_form)
        np.testing.assert_allclose(P, xi_form(z) / f(qb), atol=1e-9)


def test_divergence_identity(rng):
    # div(f X) = f div_{f dz}(X) for smooth test data on R^4
    A = rng.normal(size=(4, 4))

    def X(z):
        return A @ np.sin(z) + z**2

    def f(z):
        return 2.0 + np.cos(z[0] * z[1]) + 0.1 * z[2] ** 2

    for _ in range(20):
        z = rng.normal(size=4)
        lhs = divergence(lambda y: f(y) * X(y), z)
        rhs = f(z) * divergence(X, z, lambda y: np.log(f(y)))
        assert abs(lhs - rhs) < 1e-6


def test_wedge_power(knife, rng):
    f = knife.multiplier
    fwd = hz.psi_f_map(f, "forward")
    W0 = canonical_form(2)
    for qb, pb in knife.sample_reduced(rng, 30):
        z = np.concatenate([qb, pb])
        pulled = hz.pullback_twoform_matrix(fwd, z, lambda y: W0)
        frame = rng.normal(size=(4, 4))
        lhs = wedge_square_4(pulled, frame)
        rhs = f(qb) ** 2 * wedge_square_4(W0, frame)
        assert abs(lhs - rhs) < 1e-8 * max(1.0, abs(rhs))


def test_condition_scan(knife, rng):
    samples = knife.sample_reduced(rng, 10)
    tangents = [(rng.normal(size=2), rng.normal(size=2)) for _ in range(3)]
    assert hz.condition_scan(knife.reduced, knife.multiplier, samples, tangents) < 1e-9
