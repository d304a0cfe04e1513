"""Classifiers over normalized feature matrices.

Three interchangeable estimators share the scikit-learn fit/predict
contract, so the evaluation harness is classifier-agnostic:

* :class:`CosineNearestClassifier` - nearest neighbour under cosine
  distance; also handles one-to-many identification.
* :class:`ShrinkageLDA` - binary linear discriminant with a diagonal
  shrinkage of the pooled covariance.
* :class:`SMOSVC` - binary soft-margin SVM trained by sequential minimal
  optimization, with the kernels and per-class cost weighting used by the
  verification protocol; :func:`tune_svm` grid-searches its
  hyper-parameters by stratified cross-validation.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.model_selection import StratifiedKFold
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import _smo
from .errors import NotConvergedError

#: Kernel vocabulary; grid order is fixed for deterministic tie-breaking.
KERNELS = ("linear", "sigmoid", "rbf", "poly")
C_GRID = (0.1, 1.0, 10.0, 100.0)
GAMMA_GRID = (0.01, 0.1, 1.0, 10.0)
DEGREE_GRID = (2, 3)


def kernel_matrix(
    kind: str,
    X: np.ndarray,
    Z: np.ndarray,
    *,
    gamma: float = 0.1,
    degree: int = 3,
    coef0: float = 0.0,
) -> np.ndarray:
    """Gram matrix K[i, j] = kappa(X[i], Z[j]) for the supported kernels."""
    X = np.asarray(X, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    dot = X @ Z.T
    if kind == "linear":
        return dot
    if kind == "sigmoid":
        return np.tanh(gamma * dot + coef0)
    if kind == "rbf":
        sq = np.maximum(
            np.sum(X * X, axis=1)[:, None] + np.sum(Z * Z, axis=1)[None, :] - 2.0 * dot,
            0.0,
        )
        return np.exp(-gamma * sq)
    if kind in ("poly", "polynomial"):
        return (gamma * dot + coef0) ** degree
    raise ValueError(f"unknown kernel {kind!r}; expected one of {KERNELS}")


class CosineNearestClassifier(BaseEstimator, ClassifierMixin):
    """Nearest-neighbour classification under cosine distance.

    The distance between rows u and w is ``1 - (u . w) / (|u| |w|)``; a
    query takes the label of the training row at minimum distance, ties
    broken by the lowest training-row index.  Labels may be binary
    (verification) or subject identities (identification).

    Parameters
    ----------
    reject_distance : float, optional
        Open-set option: queries whose nearest distance exceeds this value
        receive ``reject_label`` instead of the neighbour's label.
    reject_label : optional
        Label returned for rejected queries; required with
        ``reject_distance``.
    """

    def __init__(self, reject_distance=None, reject_label=None):
        self.reject_distance = reject_distance
        self.reject_label = reject_label

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms == 0.0):
            raise ValueError("training rows must have non-zero norm")
        if self.reject_distance is not None and self.reject_label is None:
            raise ValueError("reject_distance requires reject_label")
        self.X_ = X
        self.y_ = y
        self.norms_ = norms
        self.classes_ = np.unique(y)
        return self

    def distances(self, X) -> np.ndarray:
        """Cosine distances of each query row to every training row."""
        check_is_fitted(self, "X_")
        X = check_array(X, dtype=np.float64)
        q_norms = np.linalg.norm(X, axis=1)
        if np.any(q_norms == 0.0):
            raise ValueError("query rows must have non-zero norm")
        sim = (X @ self.X_.T) / np.outer(q_norms, self.norms_)
        return 1.0 - sim

    def predict(self, X):
        dist = self.distances(X)
        nearest = np.argmin(dist, axis=1)
        labels = self.y_[nearest]
        if self.reject_distance is not None:
            rejected = dist[np.arange(len(labels)), nearest] > self.reject_distance
            labels = np.where(rejected, self.reject_label, labels)
        return labels


def identify(template: CosineNearestClassifier, v: np.ndarray):
    """Subject of the training row nearest to one query vector."""
    return template.predict(np.atleast_2d(v))[0]


class ShrinkageLDA(BaseEstimator, ClassifierMixin):
    """Binary linear discriminant with diagonal covariance shrinkage.

    The pooled within-class covariance S is regularised as
    ``(1 - shrinkage) * S + shrinkage * diag(S)`` before solving for the
    weight vector, which keeps the system solvable when columns are
    collinear or the class counts are small relative to the dimension.
    The decision threshold accounts for class priors estimated from the
    training frequencies.
    """

    def __init__(self, shrinkage: float = 1e-3):
        self.shrinkage = shrinkage

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        classes = np.unique(y)
        if classes.size != 2:
            raise ValueError(f"need exactly two classes, got {classes.size}")
        groups = [X[y == c] for c in classes]
        if min(g.shape[0] for g in groups) < 2:
            raise ValueError("each class needs at least two rows")
        n0, n1 = (g.shape[0] for g in groups)
        mu0, mu1 = (g.mean(axis=0) for g in groups)
        centered = [g - m for g, m in zip(groups, (mu0, mu1))]
        pooled = (centered[0].T @ centered[0] + centered[1].T @ centered[1]) / (n0 + n1 - 2)
        lam = self.shrinkage
        shrunk = (1.0 - lam) * pooled + lam * np.diag(np.diag(pooled))
        try:
            w = np.linalg.solve(shrunk, mu1 - mu0)
        except np.linalg.LinAlgError:
            w = np.linalg.lstsq(shrunk, mu1 - mu0, rcond=None)[0]
        self.classes_ = classes
        self.coef_ = w
        self.intercept_ = float(-w @ (mu0 + mu1) / 2.0 + np.log(n1 / n0))
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_ + self.intercept_

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0.0).astype(int)]


class SMOSVC(BaseEstimator, ClassifierMixin):
    """Binary soft-margin SVM solved by sequential minimal optimization.

    Parameters
    ----------
    kernel : 'linear' | 'sigmoid' | 'rbf' | 'poly' | 'precomputed'
        With 'precomputed', ``fit`` expects the training Gram matrix and
        ``predict`` the query-vs-training Gram matrix.
    C : float
        Soft-margin cost.
    gamma, degree, coef0 : kernel parameters (``coef0`` stays 0 in the
        evaluation grid).
    class_weight : dict, optional
        Per-label multipliers of C; the verification harness uses a 14x
        client weight to counter the 1:14 class imbalance.
    tol : float
        KKT gap at which the dual is declared solved.
    max_iter : int, optional
        Pair-update cap; exceeding it raises
        :class:`~earid.errors.NotConvergedError` with diagnostics.
    """

    def __init__(
        self,
        kernel: str = "rbf",
        C: float = 1.0,
        gamma: float = 0.1,
        degree: int = 3,
        coef0: float = 0.0,
        class_weight=None,
        tol: float = 1e-3,
        max_iter: int | None = None,
    ):
        self.kernel = kernel
        self.C = C
        self.gamma = gamma
        self.degree = degree
        self.coef0 = coef0
        self.class_weight = class_weight
        self.tol = tol
        self.max_iter = max_iter

    def _gram(self, X, Z):
        return kernel_matrix(
            self.kernel, X, Z, gamma=self.gamma, degree=self.degree, coef0=self.coef0
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        classes = np.unique(y)
        if classes.size != 2:
            raise ValueError(f"need exactly two classes, got {classes.size}")
        if self.C <= 0:
            raise ValueError("C must be positive")
        y_signed = np.where(y == classes[1], 1.0, -1.0)
        weights = np.ones_like(y_signed)
        if self.class_weight:
            for label, w in self.class_weight.items():
                weights[y == label] = float(w)
        C_vec = self.C * weights
        if self.kernel == "precomputed":
            K = check_array(X)
            if K.shape[0] != K.shape[1]:
                raise ValueError("precomputed kernel must be square")
        else:
            K = self._gram(X, X)
        max_iter = self.max_iter or max(200_000, 500 * K.shape[0])
        alpha, b, n_iter, gap = _smo.solve(
            np.ascontiguousarray(K), y_signed, C_vec, self.tol, max_iter
        )
        if gap > self.tol:
            raise NotConvergedError(
                f"SMO stopped after {n_iter} updates with KKT gap {gap:.3e} "
                f"(tol {self.tol:.1e}, kernel {self.kernel!r}, C {self.C})",
                gap=gap,
                n_iter=n_iter,
            )
        self.classes_ = classes
        self.X_ = X
        self.alpha_ = alpha
        self.y_signed_ = y_signed
        self.C_vec_ = C_vec
        self.intercept_ = float(b)
        self.n_iter_ = int(n_iter)
        self.kkt_gap_ = float(gap)
        self.dual_residual_ = float(abs(np.dot(alpha, y_signed)))
        self.support_ = np.flatnonzero(alpha > 1e-12)
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "alpha_")
        X = check_array(X, dtype=np.float64)
        sv = self.support_
        if self.kernel == "precomputed":
            K = X[:, sv]
        else:
            K = self._gram(X, self.X_[sv])
        return K @ (self.alpha_[sv] * self.y_signed_[sv]) + self.intercept_

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0.0).astype(int)]


def default_grid() -> list[dict]:
    """The documented hyper-parameter grid, in tie-breaking order."""
    grid: list[dict] = []
    for kernel in KERNELS:
        for C in C_GRID:
            if kernel == "linear":
                grid.append({"kernel": kernel, "C": C})
            elif kernel in ("sigmoid", "rbf"):
                grid.extend({"kernel": kernel, "C": C, "gamma": g} for g in GAMMA_GRID)
            else:
                grid.extend(
                    {"kernel": kernel, "C": C, "gamma": g, "degree": d}
                    for g in GAMMA_GRID
                    for d in DEGREE_GRID
                )
    return grid


def _balanced_accuracy(y_true, y_pred, classes) -> Fraction:
    score = Fraction(0)
    for c in classes:
        mask = y_true == c
        total = int(mask.sum())
        correct = int(np.sum(y_pred[mask] == c))
        score += Fraction(correct, total)
    return score / len(classes)


def tune_svm(
    X,
    y,
    *,
    grid: list[dict] | None = None,
    class_weight=None,
    n_splits: int = 5,
    tol: float = 1e-3,
) -> dict:
    """Pick SVM hyper-parameters by stratified cross-validation.

    Scores each grid entry by the mean over folds of the balanced accuracy
    (mean of the two class sensitivities, i.e. 1 - HTER) and returns the
    first entry attaining the maximum, so ties resolve to the documented
    grid order.  Folds are deterministic; scores are exact rationals, so
    the selection is reproducible bit-for-bit.  When the smaller class has
    fewer members than ``n_splits`` the fold count drops to keep every fold
    stratified; fewer than two per class is an error.

    Entries whose training does not converge are skipped.
    """
    X, y = check_X_y(X, y, dtype=np.float64)
    if X.shape[0] < 10:
        raise ValueError(f"need at least 10 rows to tune, got {X.shape[0]}")
    classes, counts = np.unique(y, return_counts=True)
    if classes.size != 2:
        raise ValueError(f"need exactly two classes, got {classes.size}")
    k = min(n_splits, int(counts.min()))
    if k < 2:
        raise ValueError("cannot stratify: a class has fewer than two rows")
    folds = list(StratifiedKFold(n_splits=k, shuffle=False).split(X, y))
    if grid is None:
        grid = default_grid()

    # One dot-product and one squared-distance matrix serve every kernel.
    dot = X @ X.T
    sq = np.maximum(np.diag(dot)[:, None] + np.diag(dot)[None, :] - 2.0 * dot, 0.0)

    best_params = None
    best_score = Fraction(-1)
    for params in grid:
        kind = params["kernel"]
        gamma = params.get("gamma", 0.0)
        if kind == "linear":
            K = dot
        elif kind == "sigmoid":
            K = np.tanh(gamma * dot)
        elif kind == "rbf":
            K = np.exp(-gamma * sq)
        else:
            K = (gamma * dot) ** params["degree"]
        total = Fraction(0)
        converged = True
        for train_idx, val_idx in folds:
            model = SMOSVC(
                kernel="precomputed",
                C=params["C"],
                class_weight=class_weight,
                tol=tol,
            )
            try:
                model.fit(K[np.ix_(train_idx, train_idx)], y[train_idx])
            except NotConvergedError:
                converged = False
                break
            pred = model.predict(K[np.ix_(val_idx, train_idx)])
            total += _balanced_accuracy(y[val_idx], pred, classes)
        if not converged:
            continue
        score = total / len(folds)
        if score > best_score:
            best_score = score
            best_params = params
    if best_params is None:
        raise NotConvergedError("no grid entry converged during tuning")
    return dict(best_params)


def dump_model(model) -> str:
    """Flat audit text for a trained classifier.

    ``key=value`` header lines followed by one CSV row per stored vector
    (support rows with dual coefficients for the SVM, the weight vector for
    the LDA, template rows with labels for the cosine classifier).
    """
    lines = []
    if isinstance(model, SMOSVC):
        check_is_fitted(model, "alpha_")
        lines.append("model=svm")
        lines.append(f"kernel={model.kernel}")
        lines.append(f"C={model.C!r}")
        lines.append(f"gamma={model.gamma!r}")
        lines.append(f"degree={model.degree!r}")
        lines.append(f"coef0={model.coef0!r}")
        lines.append(f"bias={model.intercept_!r}")
        lines.append("columns=alpha,y,features...")
        for idx in model.support_:
            row = [repr(float(model.alpha_[idx])), repr(float(model.y_signed_[idx]))]
            row.extend(repr(float(v)) for v in model.X_[idx])
            lines.append(",".join(row))
    elif isinstance(model, ShrinkageLDA):
        check_is_fitted(model, "coef_")
        lines.append("model=lda")
        lines.append(f"shrinkage={model.shrinkage!r}")
        lines.append(f"bias={model.intercept_!r}")
        lines.append("columns=weights")
        lines.append(",".join(repr(float(v)) for v in model.coef_))
    elif isinstance(model, CosineNearestClassifier):
        check_is_fitted(model, "X_")
        lines.append("model=cosine")
        lines.append("columns=label,features...")
        for label, row in zip(model.y_, model.X_):
            lines.append(",".join([str(label), *(repr(float(v)) for v in row)]))
    else:
        raise TypeError(f"cannot dump {type(model).__name__}")
    return "\n".join(lines) + "\n"
