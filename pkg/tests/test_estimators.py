import json
import math

import numpy as np
import pytest

import oracles
from bounded_sysid.errors import DimensionMismatch, Infeasible, SingularGram, UnboundedSet
from bounded_sysid.estimators import (EstimateReport, Method, SmePolytope, cls_estimate,
                                      diameter_directions, directional_widths, estimation_error,
                                      ols_estimate, ols_sme_estimate, sme_contains, sme_diameter,
                                      sme_polytope)
from bounded_sysid.system import (Trajectory, make_noise_model, make_rng,
                                  random_system, simulate)


def scalar_traj(*xs):
    return Trajectory(np.array(xs, dtype=float).reshape(-1, 1))


def sim(n, T, seed, w_bar=2.0, rho=0.7, kind="uniform"):
    s = random_system(n, -5, 5, rho, make_rng(seed, "sys"))
    m = make_noise_model(kind, w_bar, 0.8 * w_bar if kind == "tgauss" else None)
    return s, simulate(s, m, T, make_rng(seed, "noise"))


def row_diameter(P, i):
    V = oracles.vertices(P.row(i).G, P.row(i).h)
    D = V[:, None, :] - V[None, :, :]
    return float(np.sqrt(np.max(np.sum(D * D, axis=-1))))


# -- OLS -----------------------------------------------------------------------

def test_ols_zero_residual_data():
    r = ols_estimate(scalar_traj(0, 1, 0.5, 0.25))
    assert r.A_hat[0, 0] == 0.5 and r.residual_sse == 0.0


def test_ols_single_pair():
    assert ols_estimate(scalar_traj(0, 1, 0.3)).A_hat[0, 0] == pytest.approx(0.3, abs=1e-15)


def test_ols_matches_explicit_2x2_normal_equations():
    _, traj = sim(2, 50, 1)
    X, Y = traj.states[:-1], traj.states[1:]
    S = X.T @ X
    C = Y.T @ X
    det = S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]
    inv = np.array([[S[1, 1], -S[0, 1]], [-S[1, 0], S[0, 0]]]) / det
    np.testing.assert_allclose(ols_estimate(traj).A_hat, C @ inv, atol=1e-10)


def test_ols_singular_gram():
    with pytest.raises(SingularGram):
        ols_estimate(Trajectory(np.zeros((5, 2))))


# -- SME set -------------------------------------------------------------------

def test_sme_scalar_interval_drops_first_constraint():
    # |x_1 - a x_0| <= w_bar fails for x_1 = 2 > w_bar but carries no information on a
    P = sme_polytope(scalar_traj(0, 2, 1), 1.0)
    assert P.num_pairs == 1
    assert sme_contains(P, [[0.0]]) and sme_contains(P, [[1.0]])
    assert not sme_contains(P, [[1.0 + 2e-9]]) and not sme_contains(P, [[-2e-9]])


def test_true_system_is_member():
    for seed in range(10):
        s, traj = sim(3, 300, seed)
        assert sme_contains(sme_polytope(traj, 2.0), s.A)


def test_nested_sets_by_random_probe():
    _, traj = sim(2, 40, 3)
    P_short = sme_polytope(traj.prefix(10), 2.0)
    P_long = sme_polytope(traj.prefix(11), 2.0)
    rng = np.random.default_rng(0)
    ols = ols_estimate(traj.prefix(10)).A_hat
    hits = 0
    for _ in range(1000):
        A = ols + rng.uniform(-1, 1, (2, 2))
        if sme_contains(P_long, A):
            hits += 1
            assert sme_contains(P_short, A)
    assert hits > 0


def test_sme_contains_boundary_and_dimension():
    P = SmePolytope.from_pairs([[1.0]], [[2.0]], 1.0)        # a in [1, 3]
    assert sme_contains(P, [[3.0]])
    assert not sme_contains(P, [[3.0 + 2e-9]])
    with pytest.raises(DimensionMismatch):
        sme_contains(P, np.eye(2))


# -- OLS-SME -------------------------------------------------------------------

def test_ols_sme_keeps_feasible_ols():
    _, traj = sim(3, 200, 4)
    ols = ols_estimate(traj)
    r = ols_sme_estimate(traj, 50.0, ols=ols)
    assert r.A_hat.tobytes() == ols.A_hat.tobytes()
    assert r.in_sme_set


def test_ols_sme_interval_projection():
    P = SmePolytope.from_pairs([[1.0]], [[2.0]], 1.0)        # [1, 3]
    traj = scalar_traj(0, 1, 2)
    fake = EstimateReport(Method.OLS, np.array([[0.5]]), 0.0, False)
    r = ols_sme_estimate(traj, 1.0, ols=fake, polytope=P)
    assert r.A_hat[0, 0] == pytest.approx(1.0, abs=1e-8)


def _ols_outside(n, T, seeds):
    for seed in seeds:
        s, traj = sim(n, T, seed)
        ols = ols_estimate(traj)
        P = sme_polytope(traj, 2.0)
        if not sme_contains(P, ols.A_hat):
            return s, traj, ols, P
    raise AssertionError("no instance with OLS outside the set")


def test_ols_sme_matches_oracle_n2():
    _, traj, ols, P = _ols_outside(2, 12, range(100))
    r = ols_sme_estimate(traj, 2.0, ols=ols, polytope=P)
    for i in range(2):
        Pi = P.row(i)
        ref = oracles.qp_by_enumeration(np.eye(2), ols.A_hat[i], Pi.G, Pi.h)
        np.testing.assert_allclose(r.A_hat[i], ref, atol=1e-6)


# -- CLS -----------------------------------------------------------------------

def test_cls_inactive():
    assert cls_estimate(scalar_traj(0, 1, 2), 3.0).A_hat[0, 0] == pytest.approx(2.0)
    assert cls_estimate(scalar_traj(0, 1, 2), 0.5).A_hat[0, 0] == pytest.approx(2.0)


def test_cls_empty_intersection():
    # pairs (1, 2), (2, 1), (1, 0) with w_bar = 0.5: [1.5, 2.5] and [-0.5, 0.5] are disjoint
    with pytest.raises(Infeasible, match="row 0"):
        cls_estimate(scalar_traj(0, 1, 2, 1, 0), 0.5)


def test_cls_matches_oracle_n2():
    _, traj, ols, P = _ols_outside(2, 30, range(200))
    r = cls_estimate(traj, 2.0, ols=ols, polytope=P)
    X, Y = traj.states[:-1], traj.states[1:]
    for i in range(2):
        Pi = P.row(i)
        ref = oracles.qp_by_enumeration(2 * X.T @ X, 2 * X.T @ Y[:, i], Pi.G, Pi.h)
        np.testing.assert_allclose(r.A_hat[i], ref, atol=1e-6)


def test_feasibility_chain_and_sse_order():
    for seed in range(15):
        s, traj = sim(3, 150, 100 + seed, kind="uniform" if seed % 2 else "tgauss")
        P = sme_polytope(traj, 2.0)
        ols = ols_estimate(traj, 2.0)
        blend = ols_sme_estimate(traj, 2.0, ols=ols, polytope=P)
        cls = cls_estimate(traj, 2.0, ols=ols, polytope=P)
        assert sme_contains(P, s.A)
        assert blend.in_sme_set and cls.in_sme_set
        assert sme_contains(P, blend.A_hat, 1e-6) and sme_contains(P, cls.A_hat, 1e-6)
        assert ols.residual_sse <= cls.residual_sse <= blend.residual_sse


def test_report_json():
    _, traj = sim(2, 60, 5)
    r = cls_estimate(traj, 2.0)
    d = json.loads(json.dumps(r.to_dict()))
    assert d["method"] == "cls" and d["n"] == 2 and len(d["A_hat"]) == 2
    assert isinstance(d["diagnostics"], list) and len(d["diagnostics"]) == 2


# -- diameter ------------------------------------------------------------------

def test_diameter_scalar_single_pair():
    P = sme_polytope(scalar_traj(0, 2, 1), 1.0)
    assert sme_diameter(P, extra_directions=0) == 1.0


def test_diameter_scalar_two_intervals():
    x = 1.0 / 1.4
    y = 1.0 + 0.2 * x
    P = SmePolytope.from_pairs([[2.0], [x]], [[1.0], [y]], 1.0)    # [0, 1] and [0.2, 3]
    assert sme_diameter(P, extra_directions=5) == pytest.approx(0.8, abs=1e-12)


def test_diameter_n2_against_vertex_oracle():
    for seed in range(5):
        _, traj = sim(2, 10, 40 + seed)
        P = sme_polytope(traj, 2.0)
        oracle = math.sqrt(sum(row_diameter(P, i) ** 2 for i in range(2)))
        est = sme_diameter(P, extra_directions=200, rng=make_rng(seed, "d"))
        assert 0.9 * oracle <= est <= oracle * (1 + 1e-9)


def test_diameter_bounds_errors_of_members_scalar():
    s, traj = sim(1, 200, 7)
    P = sme_polytope(traj, 2.0)
    d = sme_diameter(P, extra_directions=0)
    for r in (ols_sme_estimate(traj, 2.0), cls_estimate(traj, 2.0)):
        assert abs(r.A_hat[0, 0] - s.A[0, 0]) <= d


def test_diameter_monotone_on_prefixes():
    _, traj = sim(3, 2000, 8)
    dirs = diameter_directions(3, 30, make_rng(1, "dirs"))
    prev = math.inf
    for T in (50, 100, 400, 1000, 2000):
        cur = float(np.max(directional_widths(sme_polytope(traj.prefix(T), 2.0), dirs)))
        assert cur <= prev + 1e-9
        prev = cur


def test_diameter_unbounded():
    with pytest.raises(UnboundedSet):
        sme_diameter(sme_polytope(Trajectory(np.zeros((4, 2))), 1.0))
    # states confined to a line leave the orthogonal direction free
    X = np.zeros((4, 2))
    X[1:, 0] = [1.0, 0.5, 0.25]
    with pytest.raises(UnboundedSet):
        sme_diameter(sme_polytope(Trajectory(X), 1.0), extra_directions=0)


def test_directions_shape_and_norm():
    D = diameter_directions(3, 7, make_rng(0))
    assert D.shape == (16, 3, 3)
    np.testing.assert_allclose(np.linalg.norm(D.reshape(16, -1), axis=1), 1.0)


# -- error metric --------------------------------------------------------------

def test_estimation_error():
    A = np.array([[0.3, 0.1], [0.0, 0.2]])
    assert estimation_error(A, A) == 0.0
    D = np.diag([3.0, -4.0])
    assert estimation_error(D, np.zeros((2, 2))) == pytest.approx(4.0)
    assert estimation_error(D, np.zeros((2, 2)), "frobenius") == pytest.approx(5.0)
    rng = np.random.default_rng(0)
    for _ in range(20):
        E = rng.standard_normal((3, 3))
        assert estimation_error(E, 0 * E) <= estimation_error(E, 0 * E, "frobenius") + 1e-12
    with pytest.raises(DimensionMismatch):
        estimation_error(np.eye(2), np.eye(3))


def test_method_parse():
    assert Method.parse("OLS_SME") is Method.OLS_SME
    with pytest.raises(ValueError):
        Method.parse("ridge")
