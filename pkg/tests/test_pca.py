import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavrelay.channel import ChannelParams
from uavrelay.coverage import CoverageMap, map_mae
from uavrelay.pca import CoveragePCA, fraction_of_components, jacobi_eigh, sample_pose_maps
from uavrelay.world import default_bounds, generate_terrain, place_scenario


def _scenario(seed, n=8, cell=100.0):
    t = generate_terrain(seed, n, n, cell, 40.0, 0.3)
    return place_scenario(seed, t, 4, default_bounds(t))


@pytest.fixture(scope="module")
def small_maps():
    return sample_pose_maps(_scenario(0), ChannelParams(), 40, 0)


def _two_pattern_batch(n=200, d=30, seed=0):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(d, 2)))
    a = rng.choice([-3.0, 3.0], size=n)
    b = rng.choice([-1.0, 1.0], size=n)
    # exact balanced signs make the two score series uncorrelated with exact variances
    a[: n // 2], a[n // 2 :] = 3.0, -3.0
    b[::2], b[1::2] = 1.0, -1.0
    return 5.0 + np.outer(a, q[:, 0]) + np.outer(b, q[:, 1]), q


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 24), st.integers(0, 10_000))
def test_jacobi_matches_dense_oracle(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(n, n))
    a = m + m.T
    w, v = jacobi_eigh(a)
    assert np.allclose(np.sort(w), np.linalg.eigvalsh(a), rtol=0, atol=1e-10 * max(1, np.abs(a).max()))
    assert np.allclose(a @ v, v * w, atol=1e-9)
    assert np.allclose(v.T @ v, np.eye(n), atol=1e-10)


def test_jacobi_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        jacobi_eigh(np.zeros((2, 3)))


def test_eigenvalues_match_dense_solver_on_8x8_maps(small_maps):
    model = CoveragePCA(1.0).fit(small_maps)
    X = np.stack([m.values.ravel() for m in small_maps])
    cov = np.cov(X, rowvar=False)
    ref = np.sort(np.linalg.eigvalsh(cov))[::-1][: model.rank_]
    assert np.allclose(model.eigenvalues_, ref, rtol=1e-8, atol=1e-8 * ref[0])
    g = model.basis_ @ model.basis_.T
    assert np.allclose(g, np.eye(model.rank_), atol=1e-8)
    assert np.all(np.diff(model.eigenvalues_) <= 0)


def test_gram_route_matches_covariance_route():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(12, 40))
    wide = CoveragePCA(1.0).fit(X)
    tall = CoveragePCA(1.0).fit(X[:, :10])
    ref = np.sort(np.linalg.eigvalsh(np.cov(X, rowvar=False)))[::-1][: wide.rank_]
    assert wide.rank_ == 11
    assert np.allclose(wide.eigenvalues_, ref, rtol=1e-9)
    assert tall.rank_ == 10
    assert np.allclose(wide.basis_ @ wide.basis_.T, np.eye(11), atol=1e-10)


def test_rank_one_batch():
    rng = np.random.default_rng(2)
    base, pattern = rng.normal(size=25), rng.normal(size=25)
    X = base + np.outer(rng.normal(size=10), pattern)
    for target in (0.5, 0.99, 1.0):
        model = CoveragePCA(target).fit(X)
        assert model.n_components_ == 1
    assert model.explained_variance_curve() == [(1, 1.0)]


def test_two_pattern_batch():
    X, q = _two_pattern_batch()
    model = CoveragePCA(0.9).fit(X)
    assert np.allclose(model.explained_variance_ratio_, [0.9, 0.1], atol=1e-9)
    assert model.n_components_ == 1
    assert CoveragePCA(0.95).fit(X).n_components_ == 2
    curve = model.explained_variance_curve()
    assert [c for c, _ in curve] == [1, 2]
    assert curve[0][1] == pytest.approx(0.9, abs=1e-9)
    assert curve[-1][1] == pytest.approx(1.0, abs=1e-9)
    # the leading direction spans the variance-9 pattern (up to sign)
    assert abs(model.components_[0] @ q[:, 0]) == pytest.approx(1.0, abs=1e-9)


def test_full_target_keeps_the_rank(small_maps):
    model = CoveragePCA(1.0).fit(small_maps)
    assert model.n_components_ == model.rank_ <= len(small_maps) - 1


def test_projection_identities(small_maps):
    model = CoveragePCA(0.99).fit(small_maps)
    mean_map = CoverageMap(model.mean_.reshape(model.map_shape_), 100.0)
    assert np.allclose(model.project(mean_map), 0.0, atol=1e-12)
    e1 = model.mean_ + model.components_[0]
    s = model.transform(e1)[0]
    assert s[0] == pytest.approx(1.0, abs=1e-8)
    assert np.allclose(s[1:], 0.0, atol=1e-8)
    zero = model.reconstruct(np.zeros(model.n_components_))
    assert np.array_equal(zero.values.ravel(), model.mean_)
    a, b = small_maps[0].values.ravel(), small_maps[1].values.ravel()
    for alpha in (0.0, 0.3, 1.0):
        lhs = model.transform(alpha * a + (1 - alpha) * b)[0]
        rhs = alpha * model.transform(a)[0] + (1 - alpha) * model.transform(b)[0]
        assert np.allclose(lhs, rhs, atol=1e-8)


def test_full_rank_round_trip(small_maps):
    model = CoveragePCA(1.0).fit(small_maps)
    for m in small_maps:
        back = model.reconstruct(model.project(m))
        assert np.max(np.abs(back.values - m.values)) <= 1e-6


def test_reconstruction_error_identity(small_maps):
    model = CoveragePCA(0.98).fit(small_maps)
    k = model.n_components_
    for m in small_maps:
        x = m.values.ravel()
        err = np.sum((x - model.inverse_transform(model.transform(x))[0]) ** 2)
        discarded = np.sum(model.full_scores(x)[0][k:] ** 2)
        assert err == pytest.approx(discarded, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_mae_nonincreasing_in_target(seed):
    maps = sample_pose_maps(_scenario(seed, 12), ChannelParams(), 30, seed)
    base = CoveragePCA(1.0).fit(maps)
    maes = []
    for t in (0.96, 0.98, 0.995, 1.0):
        model = base.retarget(t)
        maes.append(np.mean([map_mae(m, model.reconstruct(model.project(m))) for m in maps]))
    assert all(b <= a + 1e-12 for a, b in zip(maes, maes[1:]))
    assert maes[-1] <= 1e-6


def test_fit_errors():
    with pytest.raises(ValueError):
        CoveragePCA().fit(np.zeros((1, 4)))
    with pytest.raises(ValueError):
        CoveragePCA(1.5).fit(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        CoveragePCA(0.0).fit(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        CoveragePCA().fit(np.array([[0.0, np.nan], [1.0, 2.0]]))
    with pytest.raises(ValueError):
        CoveragePCA().fit([CoverageMap(np.zeros((2, 2)), 1.0), CoverageMap(np.zeros((3, 2)), 1.0)])
    model = CoveragePCA().fit(np.random.default_rng(0).normal(size=(5, 4)))
    with pytest.raises(ValueError):
        model.transform(np.zeros((1, 5)))
    with pytest.raises(ValueError):
        model.inverse_transform(np.zeros((1, model.n_components_ + 1)))


def test_estimator_protocol(small_maps):
    model = CoveragePCA(0.97)
    assert model.get_params() == {"variance_target": 0.97, "tol": 1e-14}
    X = np.stack([m.values.ravel() for m in small_maps])
    scores = model.fit_transform(X)
    assert scores.shape == (len(small_maps), model.n_components_)
    assert 0 < fraction_of_components(model) <= 1


def test_save_load_is_exact(tmp_path, small_maps):
    model = CoveragePCA(0.99).fit(small_maps)
    path = tmp_path / "pca.txt"
    model.save(path)
    assert path.read_text().startswith(f"pca {model.n_features_in_} {model.n_components_} 0.99\n")
    back = CoveragePCA.load(path)
    for attr in ("mean_", "eigenvalues_", "basis_", "components_"):
        assert np.array_equal(getattr(back, attr), getattr(model, attr))
    assert back.map_shape_ == model.map_shape_
    path.write_text("nope 1 2 3\n")
    with pytest.raises(ValueError):
        CoveragePCA.load(path)
