"""Kernel selection: compiled extension when importable, numpy otherwise.

Set ``SARREFLECT_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _fallback

_compiled = None
if os.environ.get("SARREFLECT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[no-redef]
    except ImportError:  # pragma: no cover - depends on the build
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def _impl(name: str, backend: str | None):
    if backend == "python" or (backend is None and _compiled is None):
        return getattr(_fallback, name)
    if _compiled is None:
        raise RuntimeError("compiled kernels are not available")
    return getattr(_compiled, name)


def trihedral_far_field(incidence, azimuth, plate_side, phase_constant, backend=None):
    """Summed normalised far-field integrals, shape ``incidence.shape + (2,)``."""
    inc, az = np.broadcast_arrays(np.asarray(incidence, dtype=float),
                                  np.asarray(azimuth, dtype=float))
    shape = inc.shape
    flat_i = np.ascontiguousarray(inc.ravel())
    flat_a = np.ascontiguousarray(az.ravel())
    out = _impl("trihedral_far_field", backend)(flat_i, flat_a, float(plate_side),
                                                 float(phase_constant))
    return np.asarray(out).reshape(shape + (2,))


def chirp_echo_accumulate(out, t0, fs, tau, amp, f0, rate, duration, backend=None):
    """Add demodulated chirp echoes (one per row) into ``out`` in place."""
    tau = np.ascontiguousarray(tau, dtype=float)
    amp = np.ascontiguousarray(amp, dtype=float)
    _impl("chirp_echo_accumulate", backend)(out, float(t0), float(fs), tau, amp,
                                            float(f0), float(rate), float(duration))
    return out


def sinc_interp(data, pos, taps=8, backend=None):
    """Windowed-sinc interpolation of each row of ``data`` at fractional ``pos``."""
    data = np.ascontiguousarray(data, dtype=np.complex128)
    pos = np.ascontiguousarray(pos, dtype=float)
    return np.asarray(_impl("sinc_interp", backend)(data, pos, int(taps)))


def splat_patches(out, table, phase, row0, col0, sub_r, sub_c, value, ramp, col_rel,
                  backend=None):
    """Accumulate scaled, azimuth-phase-ramped response patches into ``out`` in place."""
    as_long = lambda a: np.ascontiguousarray(a, dtype=np.int64)  # noqa: E731
    as_f = lambda a: np.ascontiguousarray(a, dtype=float)  # noqa: E731
    _impl("splat_patches", backend)(
        out, np.ascontiguousarray(table, dtype=np.complex128), as_long(phase), as_long(row0),
        as_long(col0), as_long(sub_r), as_long(sub_c),
        np.ascontiguousarray(value, dtype=np.complex128), as_f(ramp), as_f(col_rel))
    return out
