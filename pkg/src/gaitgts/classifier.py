"""Per-view recognition pipeline: PCA -> multi-class LDA -> Bayes' rule.

Flattened (masked) templates go through constant-feature removal, PCA
keeping a target fraction of variance, a Fisher projection onto at most
C - 1 axes, and a Gaussian classifier with a shared covariance and uniform
priors. A k-nearest-neighbour rule in the same LDA space is available for
comparison.
"""
import io
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from gaitgts.errors import DegenerateData, EmptyGallery, SingularScatter, UnfittedModel

MODEL_FORMAT_VERSION = 1
REGULARIZATION = 1e-6


def flatten(pixels, mask=None, factor=1):
    """Row-major feature vector of a template, optionally block-averaged.

    With a mask, pixels outside it are zeroed before averaging.
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    if mask is not None:
        pixels = pixels * np.asarray(mask)
    if factor > 1:
        h, w = pixels.shape
        pixels = pixels[:h - h % factor, :w - w % factor]
        pixels = pixels.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))
    return pixels.ravel()


def varying_features(X):
    """Indices of columns that are not constant over the rows of X."""
    X = np.asarray(X, dtype=np.float64)
    return np.flatnonzero(np.ptp(X, axis=0) > 0)


def pca_fit(X, variance_target=0.99):
    """Return (mean, basis, eigenvalues) keeping the leading components.

    ``basis`` has orthonormal columns ordered by decreasing eigenvalue; its
    width is the smallest k whose cumulative eigenvalue fraction reaches the
    target. When samples are fewer than dimensions the eigenproblem is solved
    on the n x n Gram matrix instead of the d x d covariance.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("pca_fit needs a 2-D array with at least 2 samples")
    if not 0.0 < variance_target <= 1.0:
        raise ValueError("variance_target must lie in (0, 1]")
    n, d = X.shape
    mean = X.mean(axis=0)
    Xc = X - mean
    gram = n <= d
    evals, evecs = np.linalg.eigh(Xc @ Xc.T if gram else Xc.T @ Xc)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    total = evals.clip(min=0.0).sum()
    if total <= 0.0:
        raise DegenerateData("total variance is zero")
    keep = evals > total * 1e-12
    evals, evecs = evals[keep], evecs[:, keep]
    cumulative = np.cumsum(evals) / total
    k = int(np.searchsorted(cumulative, variance_target - 1e-12) + 1)
    k = min(k, evals.size)
    evals, evecs = evals[:k], evecs[:, :k]
    if gram:
        basis = (Xc.T @ evecs) / np.sqrt(evals)
    else:
        basis = evecs
    # fix the sign so the largest-magnitude loading of each axis is positive
    flip = np.sign(basis[np.abs(basis).argmax(axis=0), np.arange(k)])
    basis = basis * np.where(flip == 0, 1.0, flip)
    return mean, basis, evals / (n - 1)


def retained_fraction(X, basis):
    """Fraction of the total variance of X captured by the basis columns."""
    Xc = np.asarray(X, dtype=np.float64)
    Xc = Xc - Xc.mean(axis=0)
    total = np.sum(Xc * Xc)
    proj = Xc @ basis
    return float(np.sum(proj * proj) / total)


@dataclass
class LdaProjection:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    ridge: float = 0.0

    @property
    def degenerate(self):
        """True when no axis carries between-class separation."""
        return bool(np.all(self.eigenvalues <= 1e-10 * max(1.0, float(np.abs(self.eigenvalues).max(initial=0.0)))))


def _scatter(Z, y, classes):
    mu = Z.mean(axis=0)
    dim = Z.shape[1]
    sw = np.zeros((dim, dim))
    sb = np.zeros((dim, dim))
    for c in classes:
        Zc = Z[y == c]
        mc = Zc.mean(axis=0)
        D = Zc - mc
        sw += D.T @ D
        diff = (mc - mu)[:, None]
        sb += Zc.shape[0] * (diff @ diff.T)
    return sw, sb


def lda_fit(Z, y):
    """Fisher projection maximising between- over within-class scatter.

    The within-class scatter is regularised with ``eps * I`` where
    ``eps = 1e-6 * trace(Sw) / dim``; if Sw is exactly zero the total scatter
    trace is used instead.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("lda_fit needs at least 2 classes")
    counts = Counter(y.tolist())
    if min(counts.values()) < 2:
        raise ValueError("every class needs at least 2 samples")
    dim = Z.shape[1]
    sw, sb = _scatter(Z, y, classes)
    eps = REGULARIZATION * np.trace(sw) / dim
    if eps <= 0.0:
        eps = REGULARIZATION * np.trace(sw + sb) / dim
    if not eps > 0.0:
        raise SingularScatter("within-class and between-class scatter are both zero")
    try:
        evals, evecs = scipy.linalg.eigh(sb, sw + eps * np.eye(dim))
    except np.linalg.LinAlgError as exc:
        raise SingularScatter(str(exc)) from exc
    order = np.argsort(evals)[::-1]
    k = min(classes.size - 1, dim)
    evals, evecs = evals[order][:k], evecs[:, order][:, :k]
    flip = np.sign(evecs[np.abs(evecs).argmax(axis=0), np.arange(k)])
    evecs = evecs * np.where(flip == 0, 1.0, flip)
    return LdaProjection(evecs, evals, float(eps))


@dataclass
class BayesModel:
    labels: np.ndarray
    means: np.ndarray
    covariance: np.ndarray
    precision: np.ndarray


def bayes_fit(W, y, prior_scatter=None):
    """Gaussian class models with a pooled within-class covariance.

    ``prior_scatter`` is added to the pooled residual scatter before
    normalising; the full chain passes the LDA ridge mapped into LDA space so
    that both stages see the same regularised within-class scatter.
    """
    W = np.asarray(W, dtype=np.float64)
    y = np.asarray(y)
    labels = np.unique(y)
    means = np.stack([W[y == c].mean(axis=0) for c in labels])
    resid = W - means[np.searchsorted(labels, y)]
    dof = max(W.shape[0] - labels.size, 1)
    scatter = resid.T @ resid
    if prior_scatter is not None:
        scatter = scatter + prior_scatter
    cov = scatter / dof
    dim = W.shape[1]
    eps = REGULARIZATION * np.trace(cov) / dim
    if eps <= 0.0:
        eps = REGULARIZATION
    cov = cov + eps * np.eye(dim)
    return BayesModel(labels, means, cov, np.linalg.inv(cov))


def mahalanobis_sq(model, W):
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    diff = W[:, None, :] - model.means[None, :, :]
    return np.einsum("nci,ij,ncj->nc", diff, model.precision, diff)


def bayes_predict(model, W):
    """Maximum posterior label under uniform priors; ties go to the lower label."""
    if model is None:
        raise UnfittedModel("bayes model has not been fitted")
    W = np.asarray(W, dtype=np.float64)
    single = W.ndim == 1
    d2 = mahalanobis_sq(model, W)
    pred = model.labels[np.argmin(d2, axis=1)]
    return pred[0] if single else pred


def knn_predict(gallery, labels, x, k=1):
    """Majority vote of the k nearest gallery vectors (Euclidean).

    Ties between labels go to the label with the nearest member among the k,
    then to the lower label.
    """
    gallery = np.atleast_2d(np.asarray(gallery, dtype=np.float64))
    labels = np.asarray(labels)
    if gallery.shape[0] == 0:
        raise EmptyGallery("kNN gallery is empty")
    if k < 1:
        raise ValueError("k must be at least 1")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    k = min(k, gallery.shape[0])
    out = []
    for row in X:
        d2 = np.sum((gallery - row) ** 2, axis=1)
        order = np.lexsort((labels, d2))[:k]
        votes = Counter()
        nearest = {}
        for idx in order:
            lab = labels[idx]
            votes[lab] += 1
            nearest.setdefault(lab, d2[idx])
        best = min(votes, key=lambda lab: (-votes[lab], nearest[lab], lab))
        out.append(best)
    out = np.asarray(out, dtype=labels.dtype)
    return out[0] if single else out


@dataclass
class ClassifierModel:
    """Fitted pipeline for one view."""

    features: np.ndarray
    mean: np.ndarray
    basis: np.ndarray
    projection: np.ndarray
    bayes: BayesModel
    gallery: np.ndarray = field(repr=False)
    gallery_labels: np.ndarray = field(repr=False)
    lda_eigenvalues: np.ndarray = field(default=None, repr=False)

    @property
    def labels(self):
        return self.bayes.labels

    @property
    def pca_components(self):
        return self.basis.shape[1]

    def transform(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return ((X[:, self.features] - self.mean) @ self.basis) @ self.projection

    def predict(self, X, knn=None):
        W = self.transform(X)
        if knn:
            return knn_predict(self.gallery, self.gallery_labels, W, k=knn)
        return bayes_predict(self.bayes, W)


def fit_classifier(X, y, variance_target=0.99):
    """Fit the full chain on gallery rows X with identity labels y."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y lengths differ")
    features = varying_features(X)
    if features.size == 0:
        raise DegenerateData("every feature is constant over the gallery")
    Xf = X[:, features]
    mean, basis, _ = pca_fit(Xf, variance_target)
    Z = (Xf - mean) @ basis
    lda = lda_fit(Z, y)
    W = Z @ lda.matrix
    # W^T (Sw + eps I) W: without the ridge term, axes drawn from the null space
    # of Sw get a near-zero variance here and dominate every distance
    bayes = bayes_fit(W, y, lda.ridge * (lda.matrix.T @ lda.matrix))
    return ClassifierModel(features, mean, basis, lda.matrix, bayes, W, y, lda.eigenvalues)


def save_model(model, path_or_file):
    arrays = dict(
        format_version=np.array([MODEL_FORMAT_VERSION]),
        features=model.features, mean=model.mean, basis=model.basis,
        projection=model.projection, class_means=model.bayes.means,
        covariance=model.bayes.covariance, precision=model.bayes.precision,
        labels=model.bayes.labels, gallery=model.gallery,
        gallery_labels=model.gallery_labels,
        lda_eigenvalues=model.lda_eigenvalues if model.lda_eigenvalues is not None else np.zeros(0),
    )
    np.savez(path_or_file, **arrays)


def load_model(path_or_file):
    with np.load(path_or_file, allow_pickle=False) as data:
        version = int(data["format_version"][0])
        if version != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {version}")
        bayes = BayesModel(data["labels"], data["class_means"], data["covariance"], data["precision"])
        return ClassifierModel(data["features"], data["mean"], data["basis"], data["projection"],
                               bayes, data["gallery"], data["gallery_labels"], data["lda_eigenvalues"])


def model_to_bytes(model):
    buf = io.BytesIO()
    save_model(model, buf)
    return buf.getvalue()
