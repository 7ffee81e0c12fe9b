"""Acceptance suite: one test per criterion, each at the stated tolerance.

A one-line PASS/FAIL summary per criterion is printed at the end of the
pytest run (see conftest.py).
"""

import json
import time

import numpy as np
import pytest

import oracles
from bounded_sysid.bench import ExperimentConfig, run_convergence_experiment
from bounded_sysid.cli import main
from bounded_sysid.estimators import (Method, cls_estimate, diameter_directions,
                                      directional_widths, ols_estimate, ols_sme_estimate,
                                      sme_contains, sme_polytope)
from bounded_sysid.numerics import SupportOracle, kkt_residual, project_polytope, qp_solve
from bounded_sysid.parallel import resolve_workers
from bounded_sysid.system import make_noise_model, make_rng, random_system, simulate
from bounded_sysid.theory import (check_envelope, check_lemma3, check_tv,
                                  thm1_sample_lower_bound)

criterion = pytest.mark.criterion
SEED = 20240611


def note(request, text):
    request.node.criterion_detail = text
    print(f"\n{text}")


@pytest.mark.slow
@criterion(1, "convergence rates on the reference configuration")
def test_c1_rates(request):
    cfg = ExperimentConfig()      # n = 4, [-5, 5], rho 0.7, uniform w_bar 2, 50 trials, 20 T
    assert cfg.trials >= 50 and len(cfg.T_grid) == 20
    assert cfg.T_grid[0] == 100 and cfg.T_grid[-1] == 10_000
    t0 = time.perf_counter()
    rep = run_convergence_experiment(cfg, resolve_workers())
    elapsed = time.perf_counter() - t0
    s = rep.slopes()
    note(request, " ".join(f"{k}={v:.3f}" for k, v in s.items())
         + f" missing={rep.missing_cells} {elapsed:.0f}s")
    assert -0.65 <= s["ols"] <= -0.35
    for m in ("ols-sme", "cls", "sme-diameter"):
        assert -1.25 <= s[m] <= -0.75, m
    assert elapsed <= 600


@criterion(2, "sample lower bound calculator")
def test_c2_thm1(request):
    v = thm1_sample_lower_bound(0.01, 0.99, 4, 0.25, 2.0)
    note(request, f"value={v!r}")
    assert v == 25.25
    for eps in (0.01, 0.003, 0.7, 1e-5):
        assert thm1_sample_lower_bound(eps / 2, 0.99, 4, 0.25, 2.0) == \
            2 * thm1_sample_lower_bound(eps, 0.99, 4, 0.25, 2.0)


@criterion(3, "TV estimate below the analytic bound + 3 SE")
def test_c3_tv_sandwich(request):
    t0 = time.perf_counter()
    res = check_tv(reps=100_000, seed=SEED, workers=resolve_workers())
    elapsed = time.perf_counter() - t0
    note(request, f"{len(res)} cells, min margin {min(r.margin for r in res):.4f}, {elapsed:.1f}s")
    assert len(res) == 9
    assert all(r.passed for r in res), [r.detail for r in res if not r.passed]
    assert elapsed <= 120


@criterion(4, "variance bound dominates the Monte-Carlo value")
def test_c4_lemma3(request):
    res = check_lemma3(reps=10_000, seed=SEED, workers=resolve_workers())
    labels = {r.label for r in res}
    assert {f"a={a} T={T}" for a in (0.0, 0.5, -0.5, 0.9) for T in (10, 100)} == labels
    worst = min(res, key=lambda r: r.margin)
    note(request, f"{len(res)} cells, tightest {worst.label}: {worst.detail}")
    assert all(r.passed for r in res), [r.detail for r in res if not r.passed]


@criterion(5, "state envelope never reached")
def test_c5_envelope(request):
    res = check_envelope(reps=1000, seed=SEED, workers=resolve_workers())
    note(request, "; ".join(r.detail for r in res))
    assert len(res) == 3 and all(r.passed for r in res)


@criterion(6, "feasibility and SSE ordering over 200 instances")
def test_c6_feasibility_and_ordering(request):
    worst_violation = 0.0
    for k in range(200):
        rng = make_rng(SEED, "c6", k)
        n = int(rng.integers(1, 5))
        T = int(rng.integers(n + 10, 400))
        kind = "uniform" if k % 2 == 0 else "tgauss"
        w_bar = float(rng.uniform(0.5, 3.0))
        sys_ = random_system(n, -5, 5, float(rng.uniform(0.3, 0.95)), rng)
        model = make_noise_model(kind, w_bar, w_bar * 0.6 if kind == "tgauss" else None)
        traj = simulate(sys_, model, T, rng)
        P = sme_polytope(traj, w_bar)
        ols = ols_estimate(traj)
        blend = ols_sme_estimate(traj, w_bar, ols=ols, polytope=P)
        cls = cls_estimate(traj, w_bar, ols=ols, polytope=P)
        assert sme_contains(P, sys_.A, 1e-6), k
        assert sme_contains(P, blend.A_hat, 1e-6), k
        assert sme_contains(P, cls.A_hat, 1e-6), k
        assert ols.residual_sse <= cls.residual_sse <= blend.residual_sse, \
            (k, ols.residual_sse, cls.residual_sse, blend.residual_sse)
        for A in (blend.A_hat, cls.A_hat):
            for i in range(n):
                worst_violation = max(worst_violation, float(np.max(P.row(i).violation(A[i]))))
    note(request, f"200 instances, worst constraint violation {worst_violation:.1e}")


@criterion(7, "QP and LP solvers agree with vertex / active-set enumeration")
def test_c7_solver_oracles(request):
    used = qp_checks = lp_checks = 0
    worst_qp = worst_lp = worst_kkt = 0.0
    k = 0
    while used < 100:
        rng = make_rng(SEED, "c7", k)
        k += 1
        n = int(rng.integers(1, 4))
        T = int(rng.integers(n + 2, 13))
        sys_ = random_system(n, -5, 5, float(rng.uniform(0.3, 0.95)), rng)
        traj = simulate(sys_, make_noise_model("uniform", 1.0), T, rng)
        X = traj.states[:-1]
        if np.linalg.matrix_rank(X.T @ X) < n:
            continue
        used += 1
        P = sme_polytope(traj, 1.0)
        ols = ols_estimate(traj)
        gram, cross = X.T @ X, X.T @ traj.states[1:]
        blend = ols_sme_estimate(traj, 1.0, ols=ols, polytope=P)
        cls = cls_estimate(traj, 1.0, ols=ols, polytope=P)
        for i in range(n):
            Pi = P.row(i)
            # the estimators, and direct solves that always run the iteration
            ref_proj = oracles.qp_by_enumeration(np.eye(n), ols.A_hat[i], Pi.G, Pi.h)
            ref_cls = oracles.qp_by_enumeration(2 * gram, 2 * cross[:, i], Pi.G, Pi.h)
            far = ols.A_hat[i] + rng.uniform(-3, 3, n)
            ref_far = oracles.qp_by_enumeration(np.eye(n), far, Pi.G, Pi.h)
            sols = [(project_polytope(ols.A_hat[i], Pi), ref_proj, np.eye(n), ols.A_hat[i]),
                    (qp_solve(2 * gram, 2 * cross[:, i], Pi), ref_cls, 2 * gram, 2 * cross[:, i]),
                    (project_polytope(far, Pi), ref_far, np.eye(n), far)]
            for point, ref in ((blend.A_hat[i], ref_proj), (cls.A_hat[i], ref_cls)):
                worst_qp = max(worst_qp, float(np.max(np.abs(point - ref))))
                assert np.max(np.abs(point - ref)) <= 1e-6
            for sol, ref, Q, b in sols:
                qp_checks += 1
                worst_qp = max(worst_qp, float(np.max(np.abs(sol.point - ref))))
                assert np.max(np.abs(sol.point - ref)) <= 1e-6
                if sol.converged:
                    r = kkt_residual(Q, b, Pi.G, Pi.h, sol.point, sol.multipliers)
                    worst_kkt = max(worst_kkt, r, sol.kkt_residual)
                    assert r <= 1e-8 and sol.kkt_residual <= 1e-8
            # support values along the diameter directions
            V = oracles.vertices(Pi.G, Pi.h)
            oracle = SupportOracle(Pi)
            dirs = diameter_directions(n, 10, make_rng(SEED, "c7dirs", k))
            for D in dirs:
                for c in (D[i], -D[i]):
                    if not np.any(c):
                        continue
                    lp_checks += 1
                    got = oracle.maximize(c)[1]
                    want = float(np.max(V @ c))
                    worst_lp = max(worst_lp, abs(got - want))
                    assert abs(got - want) <= 1e-8
        widths = directional_widths(P, dirs)
        for D, wdt in zip(dirs, widths):
            want = 0.0
            for i in range(n):
                V = oracles.vertices(P.row(i).G, P.row(i).h)
                proj = V @ D[i]
                want += proj.max() - proj.min()
            assert abs(wdt - want) <= 1e-8
    note(request, f"{used} instances, {qp_checks} QP solves (max dev {worst_qp:.1e}, "
         f"max KKT {worst_kkt:.1e}), {lp_checks} LP solves (max dev {worst_lp:.1e})")


@criterion(8, "scalar estimates within the SME interval length")
def test_c8_scalar_tightness(request):
    cfg = ExperimentConfig(n=1, T_grid=(5, 10, 20, 50, 100, 200, 500, 1000, 2000), trials=50,
                           diameter_directions=0)
    rep = run_convergence_experiment(cfg, resolve_workers())
    cells = 0
    for tr in rep.trials:
        length = tr.values[Method.SME_DIAMETER]
        assert np.all(np.isfinite(length))
        for m in (Method.OLS_SME, Method.CLS):
            ok = np.isfinite(tr.values[m])
            cells += int(ok.sum())
            assert np.all(tr.values[m][ok] <= length[ok]), (tr.trial, m)
        assert np.all(np.diff(length) <= 0.0), tr.trial
    note(request, f"{cells} (trial, T, method) cells, missing={rep.missing_cells}")
    assert rep.missing_cells == 0


@criterion(9, "bench CSV is byte-identical across runs and thread counts")
def test_c9_determinism(request, tmp_path, capsys):
    outs = []
    for threads in (1, 2):
        doc = {"system": {"n": 3, "entry_low": -5, "entry_high": 5, "target_rho": 0.7},
               "noise": {"kind": "uniform", "w_bar": 2.0},
               "experiment": {"T_grid": [20, 50, 120, 300], "trials": 4,
                              "diameter_directions": 20},
               "seed": 7,
               "out": {"csv": str(tmp_path / f"run{threads}.csv"),
                       "svg": str(tmp_path / f"run{threads}.svg")}}
        path = tmp_path / f"cfg{threads}.json"
        path.write_text(json.dumps(doc))
        assert main(["bench", str(path), "--threads", str(threads)]) == 0
        outs.append(tmp_path / f"run{threads}.csv")
    capsys.readouterr()
    a, b = (p.read_bytes() for p in outs)
    sa, sb = ((p.with_name(p.stem + ".summary.csv")).read_bytes() for p in outs)
    note(request, f"{len(a.splitlines())} CSV lines, identical={a == b}")
    assert a == b and sa == sb
    assert (tmp_path / "run1.svg").read_bytes() == (tmp_path / "run2.svg").read_bytes()
