import itertools
import threading
from math import factorial, prod

import numpy as np
import pytest

from ltts.derivatives import (BlackBox, BlackBoxError, CoefficientTensor, SmoothnessBudget, default_step,
                              embed, estimate_budget, fd_derivatives, lambda_star, taylor_eval,
                              taylor_eval_batch, truncation_bound)
from ltts.families import KINDS, make_instance
from ltts.features import PatchSpec, dense_features
from ltts.tensor_core import inner_product, simplex_indices


def counted(f):
    return BlackBox(f, lambda X: np.array([f(x) for x in X]))


@pytest.mark.parametrize("N", [1, 2, 3, 6])
def test_fd_query_count(N):
    g = counted(lambda x: float(np.sum(np.sin(x))))
    fd_derivatives(g, np.zeros(N), 2, 1e-3)
    assert g.queries == 1 + 2 * N + 2 * N * (N - 1)
    g.reset()
    fd_derivatives(g, np.zeros(N), 1, 1e-3)
    assert g.queries == 1 + 2 * N


def test_fd_linear_target_has_zero_curvature():
    w = np.array([0.3, -1.2, 2.0])
    g = counted(lambda x: float(w @ x + 0.5))
    for h in (1e-1, 1e-2, 1e-3):
        d = fd_derivatives(g, np.array([0.1, 0.2, 0.3]), 2, h)
        for a, v in d.items():
            if sum(a) == 2:
                assert abs(v) <= 1e-9
            if sum(a) == 1:
                assert v == pytest.approx(w[a.index(1)], abs=1e-9)


def test_fd_expsum_mixed_second():
    inst = make_instance("ExpSum", 2, 2, np.random.default_rng(0), deterministic=True)
    d = fd_derivatives(BlackBox(inst.evaluate, inst.evaluate), np.zeros(2), 2, 1e-3)
    assert d[(1, 1)] == pytest.approx(1.0, abs=1e-5)


def test_fd_rejects_bad_input():
    g = counted(lambda x: 0.0)
    with pytest.raises(ValueError):
        fd_derivatives(g, np.zeros(2), 3, 1e-3)
    with pytest.raises(ValueError):
        fd_derivatives(g, np.zeros(2), 2, 0.0)
    bad = counted(lambda x: np.nan)
    with pytest.raises(BlackBoxError):
        fd_derivatives(bad, np.zeros(2), 2, 1e-3)


def test_blackbox_bound_and_threads():
    g = BlackBox(lambda x: 2.0, g_max=1.0)
    with pytest.raises(BlackBoxError):
        g(np.zeros(1))
    ok = BlackBox(lambda x: 0.5, reentrant=True)
    threads = [threading.Thread(target=lambda: [ok(np.zeros(1)) for _ in range(200)]) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert ok.queries == 1600


def test_embed_scaling_and_support(rng):
    N, p = 3, 2
    derivs = {a: rng.normal() for a in simplex_indices(N, p)}
    one = embed(derivs, PatchSpec((0.0,) * N, 1.0, p))
    small = embed(derivs, PatchSpec((0.0,) * N, 0.1, p))
    for a in simplex_indices(N, p):
        assert one.entry(a) == derivs[a]
        assert small.entry(a) == pytest.approx(0.1 ** sum(a) * derivs[a], rel=1e-15)
    A = one.densify()
    for a in itertools.product(range(3), repeat=3):
        if sum(a) > p:
            assert A[a] == 0.0
    missing = dict(derivs)
    missing.pop((0, 0, 0))
    with pytest.raises(KeyError):
        embed(missing, PatchSpec((0.0,) * N, 1.0, p))


def test_coefficient_tensor_json(rng):
    derivs = {a: rng.normal() for a in simplex_indices(2, 2)}
    A = embed(derivs, PatchSpec((0.1, 0.2), 0.5, 2))
    B = CoefficientTensor.from_json(A.to_json())
    assert B.entries == A.entries and B.x0 == A.x0 and B.r == A.r


def test_taylor_eval_three_ways(rng):
    N, p, r = 3, 3, 0.7
    inst = make_instance("Gauss", N, p, rng)
    A = embed(inst.simplex_derivatives(p), PatchSpec((0.0,) * N, r, p))
    D = A.densify()
    XI = rng.uniform(-1, 1, size=(50, N))
    batch = taylor_eval_batch(A, XI)
    for xi, b in zip(XI, batch):
        classical = sum(r ** sum(a) / prod(factorial(k) for k in a) * inst.exact_derivative(a)
                        * prod(x**k for x, k in zip(xi, a)) for a in simplex_indices(N, p))
        assert taylor_eval(A, xi) == pytest.approx(classical, abs=1e-12)
        assert inner_product(D, dense_features(xi, p)) == pytest.approx(classical, abs=1e-12)
        assert b == pytest.approx(classical, abs=1e-12)
    assert taylor_eval(A, np.zeros(N)) == A.entry((0,) * N)


def test_quadratic_taylor_is_exact(rng):
    inst = make_instance("QuadraticForm", 4, 2, rng)
    P = PatchSpec((0.0,) * 4, 0.8, 2)
    A = embed(inst.simplex_derivatives(2), P)
    X = rng.uniform(-0.8, 0.8, size=(100, 4))
    np.testing.assert_allclose(taylor_eval_batch(A, X / 0.8), inst.evaluate(X), atol=1e-12)


def test_truncation_bound_examples():
    B = SmoothnessBudget(1.0, 1.0)
    assert truncation_bound(B, 1.0, 1, 0) == 1.0
    assert truncation_bound(B, 0.1, 6, 2) == pytest.approx(0.036, rel=1e-12)
    assert truncation_bound(B, 0.05, 6, 2) == pytest.approx(truncation_bound(B, 0.1, 6, 2) / 8)


def test_lambda_star_examples():
    B = SmoothnessBudget(1.0, 1.0)
    assert lambda_star(B, 1.0, 2, 1) == pytest.approx(np.sqrt(3))
    assert lambda_star(B, 1e-9, 5, 3) == pytest.approx(1.0)
    vals = [lambda_star(B, r, 4, 2) for r in np.linspace(0.01, 2, 30)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_budget_validation():
    with pytest.raises(ValueError):
        SmoothnessBudget(-1.0, 1.0)
    with pytest.raises(ValueError):
        SmoothnessBudget(1.0, np.inf)
    with pytest.raises(ValueError):
        SmoothnessBudget(1.0, 1.0, "guess")
    assert SmoothnessBudget(2.0, 3.0).xi_bound(0.5, 2) == pytest.approx(3.0 / 8)


@pytest.mark.parametrize("kind", KINDS)
def test_truncation_and_norm_bounds_hold(kind):
    rng = np.random.default_rng(21)
    N, p, r = 3, 2, 0.3
    inst = make_instance(kind, N, p, rng)
    budget = SmoothnessBudget(max(inst.derivative_bound(k, r) for k in range(p + 1)),
                              inst.derivative_bound(p + 1, r))
    A = embed(inst.simplex_derivatives(p), PatchSpec((0.0,) * N, r, p))
    XI = rng.uniform(-1, 1, size=(2000, N))
    err = np.abs(inst.evaluate(r * XI) - taylor_eval_batch(A, XI))
    assert err.max() <= truncation_bound(budget, r, N, p) + 1e-12
    assert np.linalg.norm(A.densify()) <= lambda_star(budget, r, N, p) * (1 + 1e-12)


def test_estimate_budget_examples(rng):
    quad = make_instance("QuadraticForm", 2, 2, rng)
    P = PatchSpec((0.0, 0.0), 0.5, 2)
    est = estimate_budget(BlackBox(quad.evaluate, quad.evaluate), P)
    assert est.provenance == "estimated"
    assert est.C_p1 == pytest.approx(0.0, abs=1e-4)
    ex = make_instance("ExpSum", 2, 2, rng, deterministic=True)
    g = BlackBox(ex.evaluate, ex.evaluate)
    one = estimate_budget(g, PatchSpec((0.0, 0.0), 1.0, 2), safety=1.0)
    assert one.C_le_p == pytest.approx(np.e**2, rel=1e-3)
    two = estimate_budget(g, PatchSpec((0.0, 0.0), 1.0, 2), safety=2.0)
    assert two.C_le_p == pytest.approx(2 * one.C_le_p, rel=1e-15)


def test_default_step():
    assert default_step(0.1) == pytest.approx(1e-3)
    assert default_step(0.0) == pytest.approx(1e-5)


def test_truncation_slope_at_least_p_plus_07():
    inst = make_instance("Trig", 4, 2, np.random.default_rng(2))
    radii = np.array([0.05, 0.1, 0.2, 0.4])
    errs = []
    rng = np.random.default_rng(0)
    for r in radii:
        A = embed(inst.simplex_derivatives(2), PatchSpec((0.0,) * 4, r, 2))
        XI = rng.uniform(-1, 1, size=(4000, 4))
        errs.append(np.max(np.abs(inst.evaluate(r * XI) - taylor_eval_batch(A, XI))))
    slope = np.polyfit(np.log(radii), np.log(errs), 1)[0]
    assert slope >= 2.7
