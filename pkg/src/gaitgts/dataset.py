"""CASIA-B corpus indexing, tuning/evaluation splits and CCR evaluation."""
import csv
import dataclasses
import hashlib
import io
import logging
import os
import re
from dataclasses import dataclass, field

import numpy as np

from gaitgts.classifier import fit_classifier, load_model, model_to_bytes, save_model
from gaitgts.errors import (EmptyCorpus, EmptyInput, LengthMismatch, MalformedName, NoCycleFound,
                            TooFewSubjects)
from gaitgts.ga import TuningSet, masked_rows
from gaitgts.imagecore import SilhouetteSequence, binarize, detect_gait_cycle, load_png, normalize
from gaitgts.segmentation import build_mask, format_hypothesis
from gaitgts.templates import VIEW_ANGLES, Covariate, compute_template, from_bytes, to_bytes
from gaitgts.viewest import ViewFeatures, robust_view_features

log = logging.getLogger(__name__)

COVARIATES = (Covariate.NORMAL, Covariate.BAG, Covariate.COAT)
_NAME = re.compile(r"^(\d{3})-(nm|bg|cl)-(\d{2})-(\d{3})-(\d{3})\.png$")


@dataclass(frozen=True, order=True)
class GaitRecord:
    subject: str
    cov_order: int = field(repr=False)
    seq: int
    view: int
    covariate: Covariate = field(compare=False)
    frames: tuple = field(default=(), compare=False, repr=False)

    @classmethod
    def create(cls, subject, covariate, seq, view, frames=()):
        covariate = Covariate.parse(covariate)
        return cls(subject, COVARIATES.index(covariate), seq, view, covariate, tuple(frames))

    @property
    def key(self):
        return f"{self.subject}-{self.covariate.value}-{self.seq:02d}-{self.view:03d}"


def _parse_frame(root, path):
    rel = os.path.relpath(path, root)
    parts = rel.split(os.sep)
    m = _NAME.match(parts[-1])
    if m is None or len(parts) != 4:
        raise MalformedName(rel)
    subject, cond, seq, view, frame = m.groups()
    if parts[0] != subject or parts[1] != f"{cond}-{seq}" or parts[2] != view:
        raise MalformedName(rel, "directory names disagree with the file name")
    if int(view) not in VIEW_ANGLES:
        raise MalformedName(rel, f"angle {view} is not a CASIA-B view")
    return subject, cond, int(seq), int(view), int(frame)


def scan_corpus(root):
    """Return (records, malformed) for every PNG frame under ``root``."""
    if not os.path.isdir(root):
        raise EmptyCorpus(f"{root} is not a directory")
    groups = {}
    malformed = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            if not name.lower().endswith(".png"):
                continue
            path = os.path.join(dirpath, name)
            try:
                subject, cond, seq, view, frame = _parse_frame(root, path)
            except MalformedName as exc:
                malformed.append(exc)
                continue
            groups.setdefault((subject, cond, seq, view), []).append((frame, path))
    records = [GaitRecord.create(s, c, q, v, [p for _, p in sorted(frames)])
               for (s, c, q, v), frames in groups.items()]
    records.sort()
    if not records:
        raise EmptyCorpus(f"no well-formed silhouette frames under {root}")
    return records, malformed


def load_corpus(root):
    records, malformed = scan_corpus(root)
    for exc in malformed:
        log.warning("skipping %s", exc)
    return records


@dataclass(frozen=True)
class SplitPlan:
    tuning_subjects: tuple
    evaluation_subjects: tuple
    seed: int
    gallery_seqs: tuple = (1, 2, 3, 4)
    probe_seqs: dict = field(default_factory=lambda: {
        Covariate.NORMAL: (5, 6), Covariate.BAG: (1, 2), Covariate.COAT: (1, 2)})

    def is_gallery(self, covariate, seq):
        return covariate is Covariate.NORMAL and seq in self.gallery_seqs

    def is_probe(self, covariate, seq):
        return seq in self.probe_seqs[covariate]


def make_split(records, seed, tuning_size=24):
    """Draw ``tuning_size`` tuning subjects; the rest form the evaluation set."""
    subjects = sorted({r.subject for r in records})
    if len(subjects) <= tuning_size:
        raise TooFewSubjects(f"{len(subjects)} subjects cannot leave an evaluation set "
                             f"after drawing {tuning_size} tuning subjects")
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(subjects), size=tuning_size, replace=False)
    tuning = tuple(sorted(subjects[i] for i in picked))
    evaluation = tuple(s for s in subjects if s not in set(tuning))
    return SplitPlan(tuning, evaluation, seed)


def compute_ccr(predictions, truths):
    predictions = list(predictions)
    truths = list(truths)
    if len(predictions) != len(truths):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(truths)} truths")
    if not truths:
        raise EmptyInput("no predictions to score")
    return sum(p == t for p, t in zip(predictions, truths)) / len(truths)


# --- per-sequence processing -------------------------------------------------

def process_frames(raw_frames, kind, threshold=128):
    """Template, view features and cycle span of one sequence of scene frames."""
    scene = [binarize(f, threshold) for f in raw_frames]
    features = robust_view_features(scene)
    norm = np.stack([normalize(f) for f in scene])
    try:
        start, end = detect_gait_cycle(norm)
    except NoCycleFound:
        start, end = 0, norm.shape[0]
    template = compute_template(SilhouetteSequence(norm[start:end]), kind)
    return template, features, (start, end)


def process_record(record, kind, threshold=128):
    raw = [load_png(p) for p in record.frames]
    template, features, span = process_frames(raw, kind, threshold)
    template = dataclasses.replace(template, view=record.view, covariate=record.covariate,
                                   subject=record.subject)
    return template, features, span


def record_input_hash(record, extra=""):
    """Digest of a sequence's frame files (names and bytes) plus ``extra``."""
    h = hashlib.sha256(extra.encode())
    for p in record.frames:
        h.update(os.path.basename(p).encode())
        with open(p, "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()


# --- template store ----------------------------------------------------------

INDEX_FIELDS = ("key", "subject", "covariate", "seq", "view", "kind", "file", "input_hash",
                "content_hash", "m_p", "m_q", "coronal", "area_ratio", "cycle_start", "cycle_end")


@dataclass(frozen=True)
class StoreEntry:
    key: str
    subject: str
    covariate: Covariate
    seq: int
    view: int
    features: ViewFeatures
    file: str = ""
    input_hash: str = ""
    content_hash: str = ""
    cycle: tuple = (0, 0)


class TemplateStore:
    """Templates on disk plus an ``index.csv`` with metadata and view features."""

    def __init__(self, root):
        self.root = root
        self.entries = {}
        path = os.path.join(root, "index.csv")
        if os.path.exists(path):
            with open(path, newline="") as fh:
                for row in csv.DictReader(fh):
                    e = StoreEntry(
                        row["key"], row["subject"], Covariate.parse(row["covariate"]), int(row["seq"]),
                        int(row["view"]),
                        ViewFeatures(float(row["m_p"]), float(row["m_q"]), row["coronal"] == "1",
                                     float(row["area_ratio"])),
                        row["file"], row["input_hash"], row["content_hash"],
                        (int(row["cycle_start"]), int(row["cycle_end"])))
                    self.entries[e.key] = e

    def put(self, template, features, span, input_hash, key):
        data = to_bytes(template)
        fname = f"{key}.gtpl"
        os.makedirs(self.root, exist_ok=True)
        with open(os.path.join(self.root, fname), "wb") as fh:
            fh.write(data)
        self.entries[key] = StoreEntry(key, template.subject, template.covariate,
                                       int(key.split("-")[2]), template.view, features, fname,
                                       input_hash, hashlib.sha256(data).hexdigest(), tuple(span))

    def write_index(self):
        os.makedirs(self.root, exist_ok=True)
        with open(os.path.join(self.root, "index.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(INDEX_FIELDS)
            for key in sorted(self.entries):
                e = self.entries[key]
                f = e.features
                w.writerow([e.key, e.subject, e.covariate.value, e.seq, e.view, "", e.file,
                            e.input_hash, e.content_hash, repr(float(f.m_p)), repr(float(f.m_q)),
                            int(f.coronal), repr(float(f.area_ratio)), e.cycle[0], e.cycle[1]])

    def pixels(self, entry):
        with open(os.path.join(self.root, entry.file), "rb") as fh:
            return from_bytes(fh.read()).pixels

    def select(self, subjects, view=None, predicate=None):
        subjects = set(subjects)
        out = [e for e in self.entries.values() if e.subject in subjects
               and (view is None or e.view == view) and (predicate is None or predicate(e))]
        return sorted(out, key=lambda e: e.key)


class MemoryStore:
    """In-memory stand-in for TemplateStore (used by tests and benchmarks)."""

    def __init__(self):
        self.entries = {}
        self._pixels = {}

    def put(self, template, features, span=(0, 0), input_hash="", key=None):
        key = key or f"{template.subject}-{template.covariate.value}-{template.view:03d}-{len(self.entries)}"
        seq = int(key.split("-")[2]) if key.count("-") >= 3 else 0
        self.entries[key] = StoreEntry(key, template.subject, template.covariate, seq,
                                       template.view, features, cycle=tuple(span))
        self._pixels[key] = np.asarray(template.pixels, dtype=np.float32)

    def pixels(self, entry):
        return self._pixels[entry.key]

    select = TemplateStore.select


def _matrix(store, entries):
    return np.stack([np.asarray(store.pixels(e), dtype=np.float64).ravel() for e in entries])


def build_tuning_set(store, plan, view, variance_target=0.99, downsample=1):
    def in_gallery(e):
        return plan.is_gallery(e.covariate, e.seq)

    gallery = store.select(plan.tuning_subjects, view, in_gallery)
    probes = {}
    for cov in COVARIATES:
        entries = store.select(plan.tuning_subjects, view,
                               lambda e, c=cov: e.covariate is c and plan.is_probe(c, e.seq))
        X = _matrix(store, entries) if entries else np.zeros((0, 0))
        probes[cov] = (X, np.array([e.subject for e in entries]))
    X = _matrix(store, gallery) if gallery else np.zeros((0, 0))
    return TuningSet(X, np.array([e.subject for e in gallery]), probes,
                     variance_target=variance_target, downsample=downsample)


# --- evaluation ----------------------------------------------------------------

@dataclass
class CcrTable:
    cells: dict
    counts: dict = field(default_factory=dict)

    def cell(self, angle, cov):
        return self.cells.get((angle, cov), float("nan"))

    def angle_mean(self, angle):
        return float(np.mean([self.cell(angle, c) for c in COVARIATES]))

    def covariate_mean(self, cov):
        return float(np.mean([self.cell(a, cov) for a in VIEW_ANGLES]))

    @property
    def mean(self):
        return float(np.mean([self.cell(a, c) for a in VIEW_ANGLES for c in COVARIATES]))

    def rows(self):
        out = []
        for a in VIEW_ANGLES:
            out.append([str(a)] + [self.cell(a, c) for c in COVARIATES] + [self.angle_mean(a)])
        out.append(["mean"] + [self.covariate_mean(c) for c in COVARIATES] + [self.mean])
        return out

    def to_csv(self):
        buf = io.StringIO()
        buf.write("angle,normal,bag,coat,mean\n")
        for row in self.rows():
            buf.write(",".join([row[0]] + [f"{v:.6f}" for v in row[1:]]) + "\n")
        return buf.getvalue()

    def to_text(self):
        lines = [f"{'angle':>6} {'normal':>8} {'bag':>8} {'coat':>8} {'mean':>8}"]
        for row in self.rows():
            lines.append(f"{row[0]:>6} " + " ".join(f"{100 * v:8.2f}" for v in row[1:]))
        return "\n".join(lines) + "\n"


def _model_cache_key(hypothesis, view, entries, variance_target, downsample):
    h = hashlib.sha256()
    h.update(format_hypothesis(view, hypothesis).encode())
    h.update(f"{variance_target!r}:{downsample}".encode())
    for e in entries:
        h.update(f"{e.key}:{e.content_hash}".encode())
    return h.hexdigest()[:32]


def fit_view_model(store, plan, view, hypothesis, variance_target=0.99, downsample=1, cache_dir=None):
    """Classifier for one view trained on the masked evaluation gallery."""
    gallery = store.select(plan.evaluation_subjects, view, lambda e: plan.is_gallery(e.covariate, e.seq))
    key = None
    if cache_dir:
        key = _model_cache_key(hypothesis, view, gallery, variance_target, downsample)
        path = os.path.join(cache_dir, f"{key}.npz")
        if os.path.exists(path):
            return load_model(path)
    mask = build_mask(hypothesis)
    X = masked_rows(_matrix(store, gallery), mask, downsample)
    model = fit_classifier(X, np.array([e.subject for e in gallery]), variance_target)
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        tmp = os.path.join(cache_dir, f"{key}.tmp")
        with open(tmp, "wb") as fh:
            fh.write(model_to_bytes(model))
        os.replace(tmp, os.path.join(cache_dir, f"{key}.npz"))
    return model


def evaluate_view_invariant(store, plan, hypotheses, estimator=None, knn=None, variance_target=0.99,
                            downsample=1, cache_dir=None):
    """CCR per (true angle, covariate) with probes routed by estimated view.

    With ``estimator=None`` each probe goes to the classifier of its true
    view (known-view protocol).
    """
    probes = store.select(plan.evaluation_subjects, None, lambda e: plan.is_probe(e.covariate, e.seq))
    routed = {}
    for e in probes:
        view = e.view if estimator is None else estimator.estimate(e.features)
        routed.setdefault(view, []).append(e)
    hits, totals = {}, {}
    for view in sorted(routed):
        hyp = hypotheses[view]
        model = fit_view_model(store, plan, view, hyp, variance_target, downsample, cache_dir)
        entries = routed[view]
        X = masked_rows(_matrix(store, entries), build_mask(hyp), downsample)
        pred = model.predict(X, knn=knn)
        for e, p in zip(entries, pred):
            cell = (e.view, e.covariate)
            totals[cell] = totals.get(cell, 0) + 1
            hits[cell] = hits.get(cell, 0) + int(p == e.subject)
    cells = {c: hits[c] / totals[c] for c in totals}
    return CcrTable(cells, totals)


def save_table(table, out_dir, stem="ccr_table"):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, f"{stem}.csv"), "w") as fh:
        fh.write(table.to_csv())
    with open(os.path.join(out_dir, f"{stem}.txt"), "w") as fh:
        fh.write(table.to_text())


__all__ = ["GaitRecord", "SplitPlan", "CcrTable", "TemplateStore", "MemoryStore", "scan_corpus",
           "load_corpus", "make_split", "compute_ccr", "evaluate_view_invariant", "build_tuning_set",
           "process_record", "process_frames", "save_model"]
