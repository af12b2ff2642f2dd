"""Pure numpy implementations of the compiled kernels (same signatures)."""
from __future__ import annotations

import numpy as np


def trihedral_far_field(incidence, azimuth, plate_side, phase_constant):
    from .scattering import trihedral_far_field_reference

    return trihedral_far_field_reference(incidence, azimuth, plate_side, phase_constant)


def chirp_echo_accumulate(out, t0, fs, tau, amp, f0, rate, duration):
    t = t0 + np.arange(out.shape[1]) / fs
    for i in np.flatnonzero(amp):
        dt = t - tau[i]
        live = (dt >= -0.5 * duration) & (dt <= 0.5 * duration)
        carrier = f0 * tau[i]
        carrier -= np.floor(carrier)
        ph = np.pi * (2.0 * carrier - rate * dt[live] ** 2)
        out[i, live] += amp[i] * (np.cos(ph) + 1j * np.sin(ph))


def sinc_interp(data, pos, taps):
    rows, cols = data.shape
    half = taps // 2
    i0 = np.floor(pos).astype(np.int64)
    fr = pos - i0
    out = np.zeros(pos.shape, dtype=np.complex128)
    wsum = np.zeros(pos.shape)
    row_idx = np.arange(rows)[:, None]
    for q in range(-half + 1, half + 1):
        x = q - fr
        w = np.sinc(x) * 0.5 * (1.0 + np.cos(np.pi * x / half))
        wsum += w
        idx = i0 + q
        ok = (idx >= 0) & (idx < cols)
        vals = data[row_idx, np.clip(idx, 0, cols - 1)]
        out += np.where(ok, w * vals, 0.0)
    nz = wsum != 0.0
    out[nz] /= wsum[nz]
    return out


def splat_patches(out, table, phase, row0, col0, sub_r, sub_c, value, ramp, col_rel):
    H, W = out.shape
    P, Q = table.shape[3:]
    j = np.arange(Q)
    for r in range(len(value)):
        r0, c0 = int(row0[r]), int(col0[r])
        i_lo, i_hi = max(0, -r0), min(P, H - r0)
        j_lo, j_hi = max(0, -c0), min(Q, W - c0)
        if i_lo >= i_hi or j_lo >= j_hi:
            continue
        ph = ramp[r] * (j[j_lo:j_hi] - col_rel[r])
        colf = value[r] * (np.cos(ph) + 1j * np.sin(ph))
        out[r0 + i_lo:r0 + i_hi, c0 + j_lo:c0 + j_hi] += (
            colf[None, :] * table[phase[r], sub_r[r], sub_c[r], i_lo:i_hi, j_lo:j_hi])
