"""View-angle estimation from the trajectory of silhouette extremities.

The topmost and bottom-most foreground points of the first and last scene
frames define two lines; their slopes separate the non-coronal views. A
bounding-box overlap test catches walks toward or away from the camera,
which are told apart by whether the silhouette grows or shrinks.
"""
from dataclasses import dataclass

import numpy as np

from gaitgts.errors import DegenerateTrajectory, EmptySilhouette
from gaitgts.imagecore import bounding_box
from gaitgts.templates import VIEW_ANGLES

CORONAL_ANGLES = (0, 180)
NON_CORONAL_ANGLES = tuple(a for a in VIEW_ANGLES if a not in CORONAL_ANGLES)
OVERLAP_THRESHOLD = 0.5
MIN_COLUMN_TRAVEL = 2


def extremity_points(frame):
    """((row, col) of the topmost pixel, (row, col) of the bottom-most pixel).

    Ties on a row go to the leftmost column.
    """
    frame = np.asarray(frame)
    rows = np.flatnonzero(frame.any(axis=1))
    if rows.size == 0:
        raise EmptySilhouette("frame has no foreground")
    top, bottom = int(rows[0]), int(rows[-1])
    return (top, int(np.flatnonzero(frame[top])[0])), (bottom, int(np.flatnonzero(frame[bottom])[0]))


def bbox_iou(a, b):
    t0, b0, l0, r0 = bounding_box(a)
    t1, b1, l1, r1 = bounding_box(b)
    ih = min(b0, b1) - max(t0, t1) + 1
    iw = min(r0, r1) - max(l0, l1) + 1
    inter = max(ih, 0) * max(iw, 0)
    area0 = (b0 - t0 + 1) * (r0 - l0 + 1)
    area1 = (b1 - t1 + 1) * (r1 - l1 + 1)
    return inter / float(area0 + area1 - inter)


def coronal_check(first, last, threshold=OVERLAP_THRESHOLD):
    """True when the first and last silhouettes overlap (bounding-box IoU >= threshold)."""
    if np.shape(first) != np.shape(last):
        raise ValueError("frames must share dimensions")
    return bbox_iou(first, last) >= threshold


@dataclass(frozen=True)
class ViewFeatures:
    m_p: float
    m_q: float
    coronal: bool
    area_ratio: float = 1.0

    def __post_init__(self):
        if not self.coronal and not (np.isfinite(self.m_p) and np.isfinite(self.m_q)):
            raise ValueError("non-coronal features need finite slopes")

    @property
    def vector(self):
        return np.array([self.m_p, self.m_q])


def _slope(p0, p1):
    drow = p1[0] - p0[0]
    dcol = p1[1] - p0[1]
    if abs(dcol) < MIN_COLUMN_TRAVEL:
        return None
    return drow / dcol


def extract_view_features(frames):
    """Slopes of the top and bottom extremity paths in scene coordinates."""
    if len(frames) < 2:
        raise ValueError("need at least 2 frames")
    first, last = np.asarray(frames[0]), np.asarray(frames[-1])
    coronal = coronal_check(first, last)
    ratio = float(np.count_nonzero(last)) / float(np.count_nonzero(first))
    p1, q1 = extremity_points(first)
    pn, qn = extremity_points(last)
    m_p, m_q = _slope(p1, pn), _slope(q1, qn)
    if m_p is None or m_q is None:
        if not coronal:
            raise DegenerateTrajectory("extremities moved fewer than 2 columns on a non-coronal walk")
        return ViewFeatures(float("nan"), float("nan"), True, ratio)
    return ViewFeatures(float(m_p), float(m_q), bool(coronal), ratio)


def coronal_direction(features):
    """0 for an approaching walker (growing silhouette), 180 for a receding one."""
    return 0 if features.area_ratio >= 1.0 else 180


@dataclass
class ViewEstimator:
    angles: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def log_likelihoods(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.empty(self.angles.size)
        for i, (mu, cov) in enumerate(zip(self.means, self.covariances)):
            diff = x - mu
            sign, logdet = np.linalg.slogdet(cov)
            out[i] = -0.5 * (diff @ np.linalg.solve(cov, diff) + logdet)
        return out

    def estimate(self, features):
        if features.coronal:
            return coronal_direction(features)
        return int(self.angles[int(np.argmax(self.log_likelihoods(features.vector)))])


def fit_view_estimator(features, angles, ridge=1e-6):
    """Gaussian class models on (m_p, m_q) for each non-coronal angle.

    Samples flagged coronal, or labelled 0/180, do not take part in fitting.
    """
    angles = np.asarray(angles)
    X = []
    y = []
    for f, a in zip(features, angles):
        if f.coronal or int(a) in CORONAL_ANGLES:
            continue
        X.append(f.vector)
        y.append(int(a))
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    missing = [a for a in NON_CORONAL_ANGLES if a not in set(y.tolist())]
    if missing:
        raise ValueError(f"training data lacks non-coronal angles {missing}")
    resid = [X[y == a] - X[y == a].mean(axis=0) for a in NON_CORONAL_ANGLES]
    resid = np.concatenate(resid)
    dof = max(resid.shape[0] - len(NON_CORONAL_ANGLES), 1)
    pooled = resid.T @ resid / dof
    pooled = pooled + ridge * max(float(np.trace(pooled)) / 2.0, 1e-12) * np.eye(2)
    means, covs = [], []
    for a in NON_CORONAL_ANGLES:
        Xa = X[y == a]
        n = Xa.shape[0]
        scatter = (Xa - Xa.mean(axis=0)).T @ (Xa - Xa.mean(axis=0))
        means.append(Xa.mean(axis=0))
        # one pseudo-observation of the pooled within-class spread keeps tiny classes well posed
        covs.append((scatter + pooled) / n)
    return ViewEstimator(np.array(NON_CORONAL_ANGLES), np.array(means), np.array(covs))


def estimate_view(estimator, features):
    return estimator.estimate(features)


def robust_view_features(frames):
    """Like extract_view_features, but a non-coronal walk whose extremities
    barely move horizontally is reported as coronal: it can only be heading
    along the camera axis."""
    try:
        return extract_view_features(frames)
    except DegenerateTrajectory:
        first, last = np.asarray(frames[0]), np.asarray(frames[-1])
        ratio = float(np.count_nonzero(last)) / float(np.count_nonzero(first))
        return ViewFeatures(float("nan"), float("nan"), True, ratio)


def estimate_view_from_frames(estimator, frames):
    return estimator.estimate(robust_view_features(frames))


def save_estimator(estimator, path_or_file):
    np.savez(path_or_file, format_version=np.array([1]), angles=estimator.angles,
             means=estimator.means, covariances=estimator.covariances)


def load_estimator(path_or_file):
    with np.load(path_or_file, allow_pickle=False) as data:
        return ViewEstimator(data["angles"], data["means"], data["covariances"])
