"""PCA compression of coverage maps.

``CoveragePCA`` follows the scikit-learn transformer protocol: ``fit`` on a
batch of maps (an ``(n, d)`` array or a list of ``CoverageMap``), then
``transform`` to scores and ``inverse_transform`` back to flattened maps.
The symmetric eigenproblem is solved with cyclic Jacobi rotations.
"""

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .coverage import CoverageMap, compute_coverage_map
from .validation import check_fraction
from .world import Position3D

# relative size below which an eigenvalue counts as zero variance
RANK_TOL = 1e-10
# slack so cumulative ratios of exactly the target are not lost to rounding
RATIO_SLACK = 1e-12


def _round_robin_pairs(n):
    """Rounds of disjoint index pairs covering every pair once (circle method)."""
    players = list(range(n)) + ([None] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p is not None and q is not None]
        rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(a, tol=1e-14, max_sweeps=60):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Pairs are visited in round-robin order so each round applies a set of
    disjoint (hence commuting) rotations at once. Returns ``(w, V)`` with
    ``a @ V[:, i] == w[i] * V[:, i]``, unsorted.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ValueError("matrix is not symmetric")
    a = (a + a.T) / 2.0
    n = a.shape[0]
    v = np.eye(n)
    if n < 2:
        return np.diag(a).copy(), v
    rounds = _round_robin_pairs(n)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), v

    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale:
            break
        for p, q in rounds:
            apq = a[p, q]
            active = np.abs(apq) > 0.0
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            app, aqq = a[p, p], a[q, q]
            with np.errstate(over="ignore", divide="ignore"):
                zeta = (aqq - app) / (2.0 * apq)
                t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            # A <- J^T A J, rows then columns
            rp, rq = a[p, :], a[q, :]
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = a[:, p], a[:, q]
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
            vp, vq = v[:, p], v[:, q]
            v[:, p] = vp * c - vq * s
            v[:, q] = vp * s + vq * c
    return np.diag(a).copy(), v


def _as_matrix(X):
    """Flatten maps to rows; returns ``(matrix, map_shape, cell_size)``."""
    if isinstance(X, CoverageMap):
        X = [X]
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], CoverageMap):
        shape = X[0].shape
        for i, m in enumerate(X):
            if m.shape != shape:
                raise ValueError(f"map {i} has shape {m.shape}, expected {shape}")
        return np.stack([m.values.ravel() for m in X]), shape, X[0].cell_size
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D array of flattened maps, got shape {arr.shape}")
    return arr, None, None


class CoveragePCA(TransformerMixin, BaseEstimator):
    """Principal components of a batch of coverage maps.

    Parameters
    ----------
    variance_target : float in (0, 1]
        The retained component count ``n_components_`` is the smallest k whose
        cumulative explained-variance ratio reaches this target.
    tol : float
        Jacobi convergence threshold on the relative off-diagonal norm.

    Attributes
    ----------
    mean_ : (d,) sample mean used for centring
    eigenvalues_ : (r,) non-zero covariance eigenvalues, descending
    basis_ : (r, d) orthonormal eigenvectors matching ``eigenvalues_``
    components_ : (k, d) the retained leading rows of ``basis_``
    n_components_ : int, k
    explained_variance_ratio_ : (r,) per-component variance share
    """

    def __init__(self, variance_target=0.995, tol=1e-14):
        self.variance_target = variance_target
        self.tol = tol

    def fit(self, X, y=None):
        check_fraction(self.variance_target, "variance_target", low_open=True)
        data, shape, cell = _as_matrix(X)
        n, d = data.shape
        if n < 2:
            raise ValueError(f"PCA needs at least 2 maps, got {n}")
        if not np.all(np.isfinite(data)):
            raise ValueError("maps contain non-finite cells")

        self.mean_ = data.mean(axis=0)
        centred = data - self.mean_
        if d <= n:
            cov = centred.T @ centred / (n - 1)
            w, vecs = jacobi_eigh(cov, tol=self.tol)
            order = np.argsort(-w, kind="stable")
            w, vecs = w[order], vecs[:, order].T
        else:
            # same non-zero spectrum through the n x n Gram matrix
            gram = centred @ centred.T / (n - 1)
            w, u = jacobi_eigh(gram, tol=self.tol)
            order = np.argsort(-w, kind="stable")
            w, u = w[order], u[:, order]
            vecs = None

        w = np.where(w < 0, 0.0, w)
        top = w[0] if w.size else 0.0
        rank = int(np.sum(w > RANK_TOL * top)) if top > 0 else 0
        w = w[:rank]
        if vecs is None:
            vecs = (centred.T @ u[:, :rank] / np.sqrt((n - 1) * w)).T
            # one re-orthonormalization pass against rounding in the Gram route
            q, r = np.linalg.qr(vecs.T)
            vecs = (q * np.sign(np.diag(r))).T
        else:
            vecs = vecs[:rank]

        big = np.argmax(np.abs(vecs), axis=1)
        signs = np.where(vecs[np.arange(rank), big] < 0, -1.0, 1.0)
        self.basis_ = vecs * signs[:, None]
        self.eigenvalues_ = w
        self.n_features_in_ = d
        self.map_shape_ = shape
        self.cell_size_ = cell
        self._set_k()
        return self

    def _set_k(self):
        w = self.eigenvalues_
        total = w.sum()
        if total > 0:
            self.explained_variance_ratio_ = w / total
            cum = np.cumsum(self.explained_variance_ratio_)
            self.n_components_ = int(np.searchsorted(cum, self.variance_target - RATIO_SLACK) + 1)
            self.n_components_ = min(self.n_components_, len(w))
        else:
            self.explained_variance_ratio_ = np.zeros(0)
            self.n_components_ = 0
        self.components_ = self.basis_[: self.n_components_]

    def retarget(self, variance_target):
        """Copy of this fitted model truncated for a different variance target."""
        check_is_fitted(self, "basis_")
        check_fraction(variance_target, "variance_target", low_open=True)
        other = CoveragePCA(variance_target=variance_target, tol=self.tol)
        for attr in ("mean_", "eigenvalues_", "basis_", "n_features_in_", "map_shape_", "cell_size_"):
            setattr(other, attr, getattr(self, attr))
        other._set_k()
        return other

    @property
    def rank_(self):
        return len(self.eigenvalues_)

    def _check_width(self, arr):
        if arr.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features per map, got {arr.shape[1]}")

    def transform(self, X):
        check_is_fitted(self, "components_")
        data, _, _ = _as_matrix(X)
        self._check_width(data)
        return (data - self.mean_) @ self.components_.T

    def full_scores(self, X):
        """Coordinates in the whole non-zero eigenbasis (all ``rank_`` components)."""
        check_is_fitted(self, "basis_")
        data, _, _ = _as_matrix(X)
        self._check_width(data)
        return (data - self.mean_) @ self.basis_.T

    def inverse_transform(self, scores):
        check_is_fitted(self, "components_")
        scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
        if scores.shape[1] != self.n_components_:
            raise ValueError(f"expected {self.n_components_} scores, got {scores.shape[1]}")
        return self.mean_ + scores @ self.components_

    def project(self, coverage_map):
        """Scores of a single map, length ``n_components_``."""
        return self.transform(coverage_map)[0]

    def reconstruct(self, scores, uav_pose=None):
        """Rebuild a ``CoverageMap`` from one score vector."""
        check_is_fitted(self, "components_")
        if self.map_shape_ is None:
            raise ValueError("model was fitted on raw vectors; map shape unknown")
        flat = self.inverse_transform(scores)[0]
        return CoverageMap(flat.reshape(self.map_shape_), self.cell_size_, uav_pose)

    def explained_variance_curve(self):
        """``[(count, cumulative_ratio), ...]`` for counts 1..rank."""
        check_is_fitted(self, "eigenvalues_")
        cum = np.cumsum(self.explained_variance_ratio_)
        return [(i + 1, float(c)) for i, c in enumerate(cum)]

    # -- persistence -------------------------------------------------------

    def save(self, path):
        """Text dump; floats use shortest round-trip repr so loading is exact."""
        check_is_fitted(self, "basis_")

        def fmt(vals):
            return " ".join(repr(float(v)) for v in vals)

        lines = [f"pca {self.n_features_in_} {self.n_components_} {self.variance_target!r}"]
        if self.map_shape_ is not None:
            lines.append(f"shape {self.map_shape_[0]} {self.map_shape_[1]} {self.cell_size_!r}")
        lines.append(fmt(self.mean_))
        lines.append(fmt(self.eigenvalues_))
        lines.extend(fmt(row) for row in self.basis_)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().rstrip("\n").split("\n")
        head = lines[0].split()
        if len(head) != 4 or head[0] != "pca":
            raise ValueError("not a PCA model file: bad header")
        d, k, target = int(head[1]), int(head[2]), float(head[3])
        model = cls(variance_target=target)
        pos = 1
        model.map_shape_, model.cell_size_ = None, None
        if lines[pos].startswith("shape"):
            _, h, w, cell = lines[pos].split()
            model.map_shape_, model.cell_size_ = (int(h), int(w)), float(cell)
            pos += 1

        def parse(line):
            return np.array([float(v) for v in line.split()], dtype=np.float64)

        model.mean_ = parse(lines[pos])
        eig_line = lines[pos + 1]
        model.eigenvalues_ = parse(eig_line) if eig_line.strip() else np.zeros(0)
        rows = [parse(ln) for ln in lines[pos + 2 :]]
        model.basis_ = np.array(rows).reshape(len(rows), d)
        model.n_features_in_ = d
        if len(model.mean_) != d or len(rows) != len(model.eigenvalues_):
            raise ValueError("PCA model file is inconsistent with its header")
        model._set_k()
        if model.n_components_ != k:
            raise ValueError(f"stored k={k} disagrees with recomputed k={model.n_components_}")
        return model


def fit_pca(maps, variance_target):
    """Functional form of ``CoveragePCA(variance_target).fit(maps)``."""
    return CoveragePCA(variance_target=variance_target).fit(maps)


def sample_pose_maps(scenario, params, n_maps, seed):
    """Coverage maps for ``n_maps`` UAV poses drawn uniformly in the bounds."""
    rng = np.random.default_rng(seed)
    b = scenario.bounds
    maps = []
    for _ in range(n_maps):
        pose = Position3D(
            rng.uniform(b.x_min, b.x_max), rng.uniform(b.y_min, b.y_max), rng.uniform(b.z_min, b.z_max)
        )
        maps.append(compute_coverage_map(scenario, pose, params))
    return maps


def fraction_of_components(model):
    """Retained components as a share of the non-zero-variance directions."""
    return model.n_components_ / model.rank_ if model.rank_ else math.nan
