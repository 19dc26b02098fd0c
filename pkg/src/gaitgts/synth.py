"""Synthetic walkers rendered as binary silhouettes in a CASIA-B style layout.

A walker is an articulated figure (head disc, elliptical torso, capsule
limbs) walking in a straight line on the ground plane. The camera sees the
path at the requested view angle: 0 walks toward the camera, 90 crosses the
frame left to right, 180 walks away. Depth is rendered as a linear change
of scale along the path.

Covariates change the figure the way the real ones change silhouettes: a
bag adds a blob at the hip and stiffens one arm, a coat widens the torso,
hangs down over the thighs and damps the arm swing.
"""
import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from gaitgts import kernels
from gaitgts.errors import IoFailure
from gaitgts.imagecore import save_png
from gaitgts.templates import VIEW_ANGLES, Covariate

FRAME_SHAPE = (240, 320)
HORIZON_ROW = 100.0
CAMERA_HEIGHT = 60.0
DEPTH_SCALE = 0.0012
MANIFEST = "manifest.csv"
MANIFEST_FIELDS = ("subject", "covariate", "seq", "angle", "frames", "period")


_LATTICE_CELLS = 270
_LATTICE_STRIDE = 97  # coprime with 270, so the first 270 subjects get distinct cells


@dataclass(frozen=True)
class BodyProportions:
    """Body dimensions in pixels at unit scale, plus gait dynamics."""

    height: float
    leg: float
    thigh_share: float
    torso: float
    head_radius: float
    torso_width: float
    torso_depth: float
    hip_width: float
    thigh_radius: float
    shank_radius: float
    arm_radius: float
    leg_swing: float
    knee_flex: float
    arm_swing: float
    period: int

    @classmethod
    def from_seed(cls, seed, index=None):
        """Random proportions from ``seed``.

        With a subject ``index``, height, torso width and hip width are taken
        from 2-pixel lattices instead (9 x 6 x 5 cells, visited in scrambled
        order), so any two of the first 270 subjects differ by at least 2
        pixels in one of them.
        """
        rng = np.random.default_rng(seed)
        u = lambda lo, hi: float(rng.uniform(lo, hi))  # noqa: E731
        height = u(92.0, 108.0)
        torso_width = u(0.20, 0.30) * height
        hip_width = u(0.11, 0.17) * height
        if index is not None:
            cell = (int(index) * _LATTICE_STRIDE) % _LATTICE_CELLS
            height = 92.0 + 2.0 * (cell % 9)
            torso_width = 20.0 + 2.0 * (cell // 9 % 6)
            hip_width = 11.0 + 2.0 * (cell // 54)
        leg = u(0.44, 0.52) * height
        head_radius = u(0.055, 0.075) * height
        neck = u(0.02, 0.04) * height
        torso = height - leg - 2 * head_radius - neck - 0.03 * height
        return cls(
            height=height, leg=leg, thigh_share=u(0.48, 0.54), torso=torso,
            head_radius=head_radius, torso_width=torso_width,
            torso_depth=u(0.12, 0.18) * height, hip_width=hip_width,
            thigh_radius=u(0.040, 0.060) * height, shank_radius=u(0.025, 0.042) * height,
            arm_radius=u(0.022, 0.034) * height, leg_swing=u(0.30, 0.48),
            knee_flex=u(0.45, 0.95), arm_swing=u(0.20, 0.50), period=int(rng.integers(22, 29)),
        )

    @property
    def neck(self):
        return self.height - self.leg - 2 * self.head_radius - self.torso - 0.03 * self.height


@dataclass(frozen=True)
class WalkerSpec:
    subject: int
    covariate: Covariate = Covariate.NORMAL
    view: int = 90
    seq: int = 1
    corpus_seed: int = 0
    period: int = None
    frame_count: int = None
    body: BodyProportions = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "covariate", Covariate.parse(self.covariate))
        if self.view not in VIEW_ANGLES:
            raise ValueError(f"view {self.view} is not one of {VIEW_ANGLES}")
        if self.body is None:
            body = BodyProportions.from_seed((self.corpus_seed, self.subject), index=self.subject - 1)
            object.__setattr__(self, "body", body)
        if self.period is None:
            object.__setattr__(self, "period", self.body.period)
        if self.period < 10:
            raise ValueError("stride period must be at least 10 frames")
        if self.frame_count is None:
            object.__setattr__(self, "frame_count", 2 * self.period + self.period // 2)
        if self.frame_count < 2 * self.period:
            raise ValueError("frame count must cover at least two periods")

    @property
    def subject_id(self):
        return f"{self.subject:03d}"

    @property
    def sequence_key(self):
        return f"{self.subject_id}-{self.covariate.value}-{self.seq:02d}-{self.view:03d}"


_COV_INDEX = {Covariate.NORMAL: 0, Covariate.BAG: 1, Covariate.COAT: 2}


class _Camera:
    def __init__(self, view, root_x, root_z):
        theta = np.deg2rad(view)
        self.fwd_x = np.sin(theta)
        self.lat_x = np.cos(theta)
        self.root_x = root_x
        self.scale = 1.0 - DEPTH_SCALE * root_z

    def point(self, fwd, up, lat):
        x = self.root_x + fwd * self.fwd_x + lat * self.lat_x
        return FRAME_SHAPE[1] / 2.0 + self.scale * x, HORIZON_ROW + self.scale * (CAMERA_HEIGHT - up)

    def half_width(self, lateral_half, forward_half):
        return self.scale * float(np.hypot(lateral_half * self.lat_x, forward_half * self.fwd_x))


def _capsule(canvas, cam, p0, p1, radius):
    x0, y0 = cam.point(*p0)
    x1, y1 = cam.point(*p1)
    kernels.fill_capsule(canvas, x0, y0, x1, y1, radius * cam.scale, 255)


def _ellipse(canvas, cam, centre, lateral_half, forward_half, vertical_half):
    cx, cy = cam.point(*centre)
    kernels.fill_ellipse(canvas, cx, cy, cam.half_width(lateral_half, forward_half),
                         vertical_half * cam.scale, 255)


def _rect(canvas, cam, centre_fwd, top_up, bottom_up, half_width):
    cx, top = cam.point(centre_fwd, top_up, 0.0)
    _, bottom = cam.point(centre_fwd, bottom_up, 0.0)
    h, w = canvas.shape
    r0, r1 = max(int(np.ceil(top)), 0), min(int(np.floor(bottom)), h - 1)
    c0, c1 = max(int(np.ceil(cx - half_width)), 0), min(int(np.floor(cx + half_width)), w - 1)
    if r0 <= r1 and c0 <= c1:
        canvas[r0:r1 + 1, c0:c1 + 1] = 255


def _sequence_nuisance(spec):
    rng = np.random.default_rng((spec.corpus_seed, spec.subject, spec.seq, spec.view,
                                 _COV_INDEX[spec.covariate], 7))
    phase_rng = np.random.default_rng((spec.corpus_seed, spec.subject, spec.seq, 11))
    return dict(
        leg_gain=float(rng.uniform(0.96, 1.04)),
        arm_gain=float(rng.uniform(0.9, 1.1)),
        offset=float(rng.uniform(-5.0, 5.0)),
        phase=float(phase_rng.uniform(0.0, 2 * np.pi)),
    )


def render_sequence(spec):
    """Scene frames of one walk as an (N, 240, 320) uint8 stack with values {0, 255}."""
    b = spec.body
    nz = _sequence_nuisance(spec)
    cov = spec.covariate
    leg_swing = b.leg_swing * nz["leg_gain"]
    arm_swing = b.arm_swing * nz["arm_gain"] * (0.35 if cov is Covariate.COAT else 1.0)
    arm_radius = b.arm_radius * (1.5 if cov is Covariate.COAT else 1.0)
    torso_w = b.torso_width * (1.3 if cov is Covariate.COAT else 1.0)
    torso_d = b.torso_depth * (1.45 if cov is Covariate.COAT else 1.0)
    thigh = b.leg * b.thigh_share
    shank = b.leg - thigh
    ankle_h = 0.03 * b.height
    foot = 0.13 * b.height
    speed = 4.0 * b.leg * np.sin(leg_swing) / spec.period
    path = speed * (spec.frame_count - 1)
    theta = np.deg2rad(spec.view)
    frames = np.zeros((spec.frame_count,) + FRAME_SHAPE, dtype=np.uint8)
    for t in range(spec.frame_count):
        phi = 2 * np.pi * t / spec.period + nz["phase"]
        along = speed * t - path / 2.0
        cam = _Camera(spec.view, along * np.sin(theta) + nz["offset"], -along * np.cos(theta))
        canvas = frames[t]
        legs = []
        for side in (1.0, -1.0):
            phase = phi + (0.0 if side > 0 else np.pi)
            alpha = leg_swing * np.sin(phase)
            beta = b.knee_flex * max(0.0, np.cos(phase))
            drop = thigh * np.cos(alpha) + shank * np.cos(alpha - beta)
            legs.append((side, alpha, beta, drop))
        pelvis = ankle_h + max(leg[3] for leg in legs)
        for side, alpha, beta, _ in legs:
            lat = side * b.hip_width / 2.0
            hip = (0.0, pelvis, lat)
            knee = (thigh * np.sin(alpha), pelvis - thigh * np.cos(alpha), lat)
            ankle = (knee[0] + shank * np.sin(alpha - beta), knee[1] - shank * np.cos(alpha - beta), lat)
            _capsule(canvas, cam, hip, knee, b.thigh_radius)
            _capsule(canvas, cam, knee, ankle, b.shank_radius)
            sole = ankle[1] - ankle_h + ankle_h / 2.0
            _capsule(canvas, cam, (ankle[0] - 0.15 * foot, sole, lat), (ankle[0] + 0.85 * foot, sole, lat),
                     ankle_h / 2.0)
        neck = pelvis + b.torso
        _ellipse(canvas, cam, (0.0, pelvis, 0.0), b.hip_width / 2.0 + b.thigh_radius,
                 b.thigh_radius * 1.2, b.thigh_radius * 1.2)
        _ellipse(canvas, cam, (0.0, pelvis + b.torso / 2.0, 0.0), torso_w / 2.0, torso_d / 2.0,
                 b.torso * 0.56)
        if cov is Covariate.COAT:
            hem = pelvis - 0.6 * thigh
            _rect(canvas, cam, 0.0, neck - 0.05 * b.height, hem, cam.half_width(torso_w / 2.0, torso_d / 2.0))
        head_centre = (0.0, neck + b.neck + b.head_radius, 0.0)
        _capsule(canvas, cam, (0.0, neck - 0.02 * b.height, 0.0), head_centre, b.head_radius * 0.45)
        _ellipse(canvas, cam, head_centre, b.head_radius, b.head_radius, b.head_radius)
        shoulder_up = neck - 0.04 * b.height
        upper, fore = 0.19 * b.height, 0.17 * b.height
        for side in (1.0, -1.0):
            phase = phi + (0.0 if side > 0 else np.pi)
            swing = -arm_swing * np.sin(phase)
            if cov is Covariate.BAG and side > 0:
                swing *= 0.3
            lat = side * (torso_w / 2.0 + arm_radius * 0.6)
            shoulder = (0.0, shoulder_up, lat)
            elbow = (upper * np.sin(swing), shoulder_up - upper * np.cos(swing), lat)
            bend = swing * 1.3 + 0.15
            hand = (elbow[0] + fore * np.sin(bend), elbow[1] - fore * np.cos(bend), lat)
            _capsule(canvas, cam, shoulder, elbow, arm_radius)
            _capsule(canvas, cam, elbow, hand, arm_radius * 0.9)
        if cov is Covariate.BAG:
            bag_w, bag_d, bag_h = 0.10 * b.height, 0.16 * b.height, 0.20 * b.height
            lat = torso_w / 2.0 + bag_w / 2.0
            centre = (-0.02 * b.height, pelvis + 0.04 * b.height, lat)
            _ellipse(canvas, cam, centre, bag_w / 2.0, bag_d / 2.0, bag_h / 2.0)
            _capsule(canvas, cam, (0.0, shoulder_up, torso_w / 2.0), (centre[0], centre[1] + bag_h / 2.0, lat),
                     0.008 * b.height)
    return frames


def generate(spec):
    """Render a walk; returns (frames, manifest entry)."""
    frames = render_sequence(spec)
    entry = dict(subject=spec.subject_id, covariate=spec.covariate.value, seq=spec.seq,
                 angle=spec.view, frames=spec.frame_count, period=spec.period)
    return frames, entry


def sequence_dir(root, spec):
    return os.path.join(root, spec.subject_id, f"{spec.covariate.value}-{spec.seq:02d}", f"{spec.view:03d}")


def _write_one(args):
    root, spec = args
    frames, entry = generate(spec)
    folder = sequence_dir(root, spec)
    os.makedirs(folder, exist_ok=True)
    for i, frame in enumerate(frames, start=1):
        save_png(os.path.join(folder, f"{spec.sequence_key}-{i:03d}.png"), frame)
    return entry


def write_corpus(specs, root, jobs=1):
    """Write every spec as PNG frames under ``root`` plus ``manifest.csv``."""
    try:
        os.makedirs(root, exist_ok=True)
        work = [(root, s) for s in specs]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                entries = list(pool.map(_write_one, work, chunksize=4))
        else:
            entries = [_write_one(w) for w in work]
        entries.sort(key=lambda e: (e["subject"], e["covariate"], e["seq"], e["angle"]))
        with open(os.path.join(root, MANIFEST), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS)
            writer.writeheader()
            writer.writerows(entries)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return entries


def read_manifest(root):
    with open(os.path.join(root, MANIFEST), newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for key in ("seq", "angle", "frames", "period"):
            r[key] = int(r[key])
    return rows


def casia_like_specs(n_subjects, corpus_seed=0, sequences=(6, 2, 2), views=VIEW_ANGLES):
    """Specs for ``n_subjects`` with the CASIA-B sequence counts per covariate."""
    specs = []
    for subject in range(1, n_subjects + 1):
        for cov, count in zip((Covariate.NORMAL, Covariate.BAG, Covariate.COAT), sequences):
            for seq in range(1, count + 1):
                for view in views:
                    specs.append(WalkerSpec(subject, cov, view, seq, corpus_seed))
    return specs


def spec_summary(spec):
    d = asdict(spec.body)
    d.update(subject=spec.subject, covariate=spec.covariate.value, view=spec.view, seq=spec.seq)
    return d
