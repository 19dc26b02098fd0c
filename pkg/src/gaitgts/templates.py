"""Collation of a silhouette sequence into a single gait template."""
import enum
import struct
from dataclasses import dataclass, replace

import numpy as np

from gaitgts import kernels
from gaitgts.imagecore import SilhouetteSequence, save_png

VIEW_ANGLES = (0, 18, 36, 54, 72, 90, 108, 126, 144, 162, 180)


class TemplateKind(enum.Enum):
    GEI = "gei"
    GENI = "geni"
    AEI = "aei"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


class Covariate(enum.Enum):
    NORMAL = "nm"
    BAG = "bg"
    COAT = "cl"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        text = str(value).lower()
        for member in cls:
            if text in (member.value, member.name.lower()):
                return member
        raise ValueError(f"unknown covariate {value!r}")


_KIND_CODES = {TemplateKind.GEI: 0, TemplateKind.GENI: 1, TemplateKind.AEI: 2}
_COV_CODES = {Covariate.NORMAL: 0, Covariate.BAG: 1, Covariate.COAT: 2}


@dataclass(frozen=True)
class GaitTemplate:
    pixels: np.ndarray
    kind: TemplateKind = TemplateKind.GEI
    view: int = 90
    covariate: Covariate = Covariate.NORMAL
    subject: str = ""

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 2:
            raise ValueError(f"template must be 2-D, got shape {pixels.shape}")
        if pixels.size and (pixels.min() < 0.0 or pixels.max() > 1.0):
            raise ValueError("template pixels must lie in [0, 1]")
        if self.view not in VIEW_ANGLES:
            raise ValueError(f"view {self.view} is not one of {VIEW_ANGLES}")
        object.__setattr__(self, "pixels", pixels)

    def with_pixels(self, pixels):
        return replace(self, pixels=pixels)


def _as_sequence(seq):
    return seq if isinstance(seq, SilhouetteSequence) else SilhouetteSequence(seq)


def compute_gei(seq, **meta):
    """Per-pixel mean of the binary frames."""
    seq = _as_sequence(seq)
    occupancy, _ = kernels.accumulate_frames(seq.frames)
    return GaitTemplate(occupancy / len(seq), kind=TemplateKind.GEI, **meta)


def binary_entropy(p):
    """Entropy in bits of a Bernoulli(p) variable, elementwise, 0*log(0) = 0."""
    p = np.asarray(p, dtype=np.float64)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log2(p), 0.0) - np.where(q > 0, q * np.log2(q), 0.0)
    return np.clip(h, 0.0, 1.0)


def compute_geni(seq, **meta):
    seq = _as_sequence(seq)
    occupancy, _ = kernels.accumulate_frames(seq.frames)
    return GaitTemplate(binary_entropy(occupancy / len(seq)), kind=TemplateKind.GENI, **meta)


def compute_aei(seq, **meta):
    """Mean absolute difference of consecutive frames."""
    seq = _as_sequence(seq)
    _, motion = kernels.accumulate_frames(seq.frames)
    return GaitTemplate(motion / (len(seq) - 1), kind=TemplateKind.AEI, **meta)


_COLLATORS = {
    TemplateKind.GEI: compute_gei,
    TemplateKind.GENI: compute_geni,
    TemplateKind.AEI: compute_aei,
}


def compute_template(seq, kind, **meta):
    return _COLLATORS[TemplateKind.parse(kind)](seq, **meta)


def export_png(template, path):
    save_png(path, np.floor(template.pixels * 255.0 + 0.5).astype(np.uint8))


# record layout: magic, version, kind, covariate, view, height, width,
# subject byte length, subject utf-8, then height*width little-endian float32
_MAGIC = b"GTPL"
_VERSION = 1
_HEADER = struct.Struct("<4sBBBHHHH")


def to_bytes(template):
    subject = template.subject.encode("utf-8")
    h, w = template.pixels.shape
    head = _HEADER.pack(_MAGIC, _VERSION, _KIND_CODES[template.kind],
                        _COV_CODES[template.covariate], template.view, h, w, len(subject))
    body = np.ascontiguousarray(template.pixels, dtype="<f4").tobytes()
    return head + subject + body


def from_bytes(data):
    magic, version, kind, cov, view, h, w, n = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise ValueError("not a gait template record")
    if version != _VERSION:
        raise ValueError(f"unsupported template record version {version}")
    offset = _HEADER.size
    subject = bytes(data[offset:offset + n]).decode("utf-8")
    offset += n
    pixels = np.frombuffer(data, dtype="<f4", count=h * w, offset=offset).reshape(h, w)
    kinds = {v: k for k, v in _KIND_CODES.items()}
    covs = {v: k for k, v in _COV_CODES.items()}
    return GaitTemplate(pixels.astype(np.float64), kind=kinds[kind], view=view,
                        covariate=covs[cov], subject=subject)


def save_template(template, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(template))


def load_template(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
