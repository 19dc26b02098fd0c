"""Pixel kernels, compiled when the extension is built.

The Cython module ``gaitgts._kernels`` is used when importable; otherwise
the numpy versions in ``gaitgts._fallback`` are used. Setting the
environment variable ``GAITGTS_PURE_PYTHON=1`` forces the fallback.
"""
import os

from gaitgts import _fallback

BACKEND = "python"
_impl = _fallback

if not os.environ.get("GAITGTS_PURE_PYTHON"):
    try:
        from gaitgts import _kernels as _impl  # noqa: F811
        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback

accumulate_frames = _impl.accumulate_frames
resample_any = _impl.resample_any
fill_capsule = _impl.fill_capsule
fill_ellipse = _impl.fill_ellipse

__all__ = ["BACKEND", "accumulate_frames", "resample_any", "fill_capsule", "fill_ellipse"]
