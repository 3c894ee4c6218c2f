import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ltts.features import dense_features
from ltts.tensor_core import inner_product, unfold
from ltts.tt import (TTTensor, load_tt, pad_ranks, param_count, random_tt, save_tt, tt_distance_dense,
                     tt_eval, tt_eval_batch, tt_from_dict, tt_norm, tt_svd, tt_to_dict,
                     unfolding_tail_bound, zeros_tt)


def test_core_validation():
    with pytest.raises(ValueError):
        TTTensor((np.zeros((2, 3, 1)),))
    with pytest.raises(ValueError):
        TTTensor((np.zeros((1, 3, 2)), np.zeros((3, 3, 1))))


def test_rank_one_exact(rng):
    vs = [rng.normal(size=3) for _ in range(4)]
    A = np.einsum("a,b,c,d->abcd", *vs)
    tt, rep = tt_svd(A, 1)
    assert tt.ranks == (1, 1, 1)
    assert np.linalg.norm(tt.densify() - A) <= 1e-12 * np.linalg.norm(A)


def test_full_rank_no_truncation(rng):
    A = rng.normal(size=(3, 3, 3, 3))
    tt, rep = tt_svd(A, 100)
    assert tt_distance_dense(tt, A) <= 1e-10 * np.linalg.norm(A)
    assert rep.bound <= 1e-10


def test_tolerance_picks_smallest_ranks(rng):
    A = rng.normal(size=(4, 4, 4))
    tol = 0.3 * np.linalg.norm(A)
    tt, _ = tt_svd(A, 10, tol)
    assert tt_distance_dense(tt, A) <= tol
    assert tt.max_rank <= 10


def test_left_orthonormal_cores(rng):
    tt, _ = tt_svd(rng.normal(size=(4, 4, 4, 4)), 3)
    for c in tt.cores[:-1]:
        M = c.reshape(-1, c.shape[2])
        np.testing.assert_allclose(M.T @ M, np.eye(M.shape[1]), atol=1e-10)


def test_truncation_error_monotone_in_chi(rng):
    A = rng.normal(size=(3, 3, 3, 3, 3))
    errs = [tt_distance_dense(tt_svd(A, chi)[0], A) for chi in range(1, 10)]
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(2, 4), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_tt_svd_bound_property(N, m, chi, seed):
    A = np.random.default_rng(seed).normal(size=(m,) * N)
    tt, rep = tt_svd(A, chi)
    err2 = tt_distance_dense(tt, A) ** 2
    assert err2 <= rep.bound**2 * (1 + 1e-10) + 1e-24
    assert err2 <= unfolding_tail_bound(A, chi) ** 2 * (1 + 1e-10) + 1e-24


def test_eval_matches_dense_inner_product(rng):
    for N, p in [(2, 2), (3, 3), (4, 2)]:
        A = rng.normal(size=(p + 1,) * N)
        tt, _ = tt_svd(A, 2)
        D = tt.densify()
        XI = rng.uniform(-1, 1, size=(30, N))
        batch = tt_eval_batch(tt, XI)
        for xi, b in zip(XI, batch):
            ref = inner_product(D, dense_features(xi, p))
            assert tt_eval(tt, xi) == pytest.approx(ref, abs=1e-10)
            assert b == pytest.approx(ref, abs=1e-10)
        assert tt_eval(tt, np.zeros(N)) == pytest.approx(D[(0,) * N], abs=1e-14)


def test_eval_zero_and_shape_errors():
    z = zeros_tt(3, 3)
    assert tt_eval(z, np.array([0.3, -0.2, 0.9])) == 0.0
    with pytest.raises(ValueError):
        tt_eval(z, np.zeros(2))
    with pytest.raises(ValueError):
        tt_eval_batch(z, np.zeros((4, 2)))


def test_norm(rng):
    tt = random_tt(4, 3, 3, rng)
    assert tt_norm(tt) == pytest.approx(np.linalg.norm(tt.densify()), rel=1e-10)
    assert tt_norm(tt.scaled(-2.5, core=2)) == pytest.approx(2.5 * tt_norm(tt), rel=1e-12)
    assert tt_norm(zeros_tt(3, 2)) == 0.0


def test_param_count():
    tt = TTTensor(tuple(np.zeros(s) for s in [(1, 3, 2)] + [(2, 3, 2)] * 4 + [(2, 3, 1)]))
    assert param_count(tt) == 60
    assert param_count(zeros_tt(5, 4)) == 20


def test_pad_ranks_keeps_tensor(rng):
    A = rng.normal(size=(3, 3, 3, 3))
    tt, _ = tt_svd(A, 1)
    padded = pad_ranks(tt, 3, rng)
    assert padded.ranks == (3, 3, 3)
    assert np.linalg.norm(padded.densify() - tt.densify()) < 1e-6


def test_serialisation_roundtrips(tmp_path, rng):
    tt = random_tt(4, 3, 2, rng)
    back = tt_from_dict(json.loads(json.dumps(tt_to_dict(tt))))
    for a, b in zip(tt.cores, back.cores):
        np.testing.assert_array_equal(a, b)
    save_tt(tt, tmp_path / "s.json", binary=True, extra={"note": 1})
    assert (tmp_path / "s.bin").stat().st_size == sum(8 + 8 * c.size for c in tt.cores)
    back, meta = load_tt(tmp_path / "s.json")
    assert meta["note"] == 1
    for a, b in zip(tt.cores, back.cores):
        np.testing.assert_array_equal(a, b)


def test_cores_are_immutable(rng):
    tt = random_tt(3, 2, 2, rng)
    with pytest.raises(ValueError):
        tt.cores[0][0, 0, 0] = 1.0


def test_reconstruction_is_matrix_product(rng):
    tt = random_tt(3, 3, 2, rng)
    D = tt.densify()
    for a in itertools.product(range(3), repeat=3):
        v = tt.cores[0][:, a[0], :] @ tt.cores[1][:, a[1], :] @ tt.cores[2][:, a[2], :]
        assert D[a] == pytest.approx(v[0, 0], abs=1e-14)
