# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Semantics mirror ``sarreflect._fallback`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, fabs, floor, fmod, M_PI

cnp.import_array()

ctypedef double complex cplx

cdef extern from "complex.h" nogil:
    double complex cexp(double complex)

DEF MAXV = 24

# plate -> normal axis, in-plane axes
cdef int NAX[4]
cdef int UAX[4]
cdef int VAX[4]
NAX[1] = 2; UAX[1] = 0; VAX[1] = 1
NAX[2] = 0; UAX[2] = 1; VAX[2] = 2
NAX[3] = 1; UAX[3] = 0; VAX[3] = 2

cdef int PATH_LEN[15]
cdef int PATH_SEQ[15][3]
_paths = ((1,), (2,), (3,), (1, 2), (2, 1), (1, 3), (3, 1), (2, 3), (3, 2),
          (1, 2, 3), (1, 3, 2), (2, 1, 3), (2, 3, 1), (3, 1, 2), (3, 2, 1))
for _i, _p in enumerate(_paths):
    PATH_LEN[_i] = len(_p)
    for _j, _q in enumerate(_p):
        PATH_SEQ[_i][_j] = _q


cdef inline double complex _phi1(double x) nogil:
    cdef double s
    if fabs(x) < 1e-8:
        return 1.0 + 0.5j * x
    s = sin(0.5 * x)
    return (-2.0 * s * s + 1j * sin(x)) / (1j * x)


cdef double complex _divided_exp(double d1, double d2) nogil:
    cdef double span = d2 - d1
    cdef double complex w1, w2, total, h, p1, p2
    cdef double fact
    cdef int n, i
    cdef double complex pw1[17]
    cdef double complex pw2[17]
    if span < 0.1:
        w1 = 1j * d1
        w2 = 1j * d2
        pw1[0] = 1.0
        pw2[0] = 1.0
        for i in range(1, 17):
            pw1[i] = pw1[i - 1] * w1
            pw2[i] = pw2[i - 1] * w2
        total = 0.0
        fact = 2.0
        for n in range(16):
            h = 0.0
            for i in range(n + 1):
                h = h + pw1[i] * pw2[n - i]
            total = total + h / fact
            fact *= n + 3
        return total
    return (_phi1(d2) - _phi1(d1)) / (1j * span)


cdef double complex _triangle(double *u, double *v, int i0, int i1, int i2,
                              double cu, double cv) nogil:
    cdef double twice = fabs((u[i1] - u[i0]) * (v[i2] - v[i0]) - (v[i1] - v[i0]) * (u[i2] - u[i0]))
    cdef double a0, a1, a2, lo, mid, hi, t
    if twice == 0.0:
        return 0.0
    a0 = cu * u[i0] + cv * v[i0]
    a1 = cu * u[i1] + cv * v[i1]
    a2 = cu * u[i2] + cv * v[i2]
    # sort three values
    if a0 > a1:
        t = a0; a0 = a1; a1 = t
    if a1 > a2:
        t = a1; a1 = a2; a2 = t
    if a0 > a1:
        t = a0; a0 = a1; a1 = t
    lo = a0; mid = a1; hi = a2
    return twice * cexp(1j * mid) * _divided_exp(lo - mid, hi - mid)


cdef int _clip(double *u, double *v, int n, int axis, double bound, int keep_above,
               double *ou, double *ov, double eps) nogil:
    """Clip against u >= bound (axis 0) / v >= bound (axis 1), or <= when keep_above == 0."""
    cdef int i, m = 0
    cdef double pu, pv, cu_, cv_, sp, sc, t
    if n == 0:
        return 0
    pu = u[n - 1]; pv = v[n - 1]
    sp = (pu if axis == 0 else pv) - bound
    if not keep_above:
        sp = -sp
    for i in range(n):
        cu_ = u[i]; cv_ = v[i]
        sc = (cu_ if axis == 0 else cv_) - bound
        if not keep_above:
            sc = -sc
        if sc >= -eps:
            if sp < -eps:
                t = sp / (sp - sc)
                ou[m] = pu + t * (cu_ - pu); ov[m] = pv + t * (cv_ - pv); m += 1
            ou[m] = cu_; ov[m] = cv_; m += 1
        elif sp >= -eps:
            t = sp / (sp - sc)
            ou[m] = pu + t * (cu_ - pu); ov[m] = pv + t * (cv_ - pv); m += 1
        pu = cu_; pv = cv_; sp = sc
        if m >= MAXV - 2:
            break
    return m


cdef void _coefficients(int idx, double st, double ct, double sp, double cp,
                        double *ctheta, double *cphi, double *wu, double *wv) nogil:
    ctheta[0] = 0.0; wu[0] = 0.0; wv[0] = 0.0
    if idx == 0:
        cphi[0] = ct; wu[0] = 2 * st * cp; wv[0] = 2 * st * sp
    elif idx == 1:
        cphi[0] = st * cp; wu[0] = 2 * st * sp; wv[0] = 2 * ct
    elif idx == 2:
        cphi[0] = st * sp; wu[0] = 2 * st * cp; wv[0] = 2 * ct
    elif idx == 3:
        ctheta[0] = -2 * st * ct * sp; cphi[0] = -st * cp; wu[0] = 2 * st * sp
    elif idx == 4:
        ctheta[0] = -2 * ct * ct * sp * cp; cphi[0] = -ct * (cp * cp - sp * sp); wv[0] = 2 * st * sp
    elif idx == 5:
        ctheta[0] = 2 * st * ct * cp; cphi[0] = -st * sp; wu[0] = 2 * st * cp
    elif idx == 6:
        ctheta[0] = 2 * ct * ct * sp * cp; cphi[0] = ct * (cp * cp - sp * sp); wu[0] = 2 * st * cp
    elif idx == 7:
        ctheta[0] = -2 * st * ct * cp; cphi[0] = st * sp; wv[0] = 2 * ct
    elif idx == 8:
        ctheta[0] = 2 * st * ct * sp; cphi[0] = st * cp; wv[0] = 2 * ct
    elif idx == 9 or idx == 11:
        cphi[0] = -st * sp
    elif idx == 10 or idx == 13:
        cphi[0] = -st * cp
    else:
        cphi[0] = -ct


cdef void _far_field_one(double inc, double az, double a, double k,
                         double complex *nt, double complex *nphi) nogil:
    cdef double st, ct, sp, cp, area2, ctheta, cphi, wu, wv, mu
    cdef double kd[3]
    cdef double P[MAXV][3]
    cdef double u[MAXV]
    cdef double v[MAXV]
    cdef double tu[MAXV]
    cdef double tv[MAXV]
    cdef int idx, step, n, i, plate, prev, ax, nax
    cdef double complex integ
    nt[0] = 0.0
    nphi[0] = 0.0
    az = fmod(az, 2 * M_PI)
    if az < 0:
        az += 2 * M_PI
    if not (inc >= 0.0 and inc <= 0.5 * M_PI and az >= 0.0 and az <= 0.5 * M_PI):
        return
    st = sin(inc); ct = cos(inc); sp = sin(az); cp = cos(az)
    for idx in range(15):
        kd[0] = -st * cp; kd[1] = -st * sp; kd[2] = -ct
        plate = PATH_SEQ[idx][0]
        if kd[NAX[plate]] >= 0.0:
            continue
        # full square of the first plate
        n = 4
        for i in range(4):
            P[i][0] = 0.0; P[i][1] = 0.0; P[i][2] = 0.0
        P[1][UAX[plate]] = a
        P[2][UAX[plate]] = a; P[2][VAX[plate]] = a
        P[3][VAX[plate]] = a
        for step in range(1, PATH_LEN[idx]):
            prev = plate
            plate = PATH_SEQ[idx][step]
            kd[NAX[prev]] = -kd[NAX[prev]]
            nax = NAX[plate]
            if kd[nax] >= 0.0:
                n = 0
                break
            for i in range(n):
                mu = -P[i][nax] / kd[nax]
                u[i] = P[i][UAX[plate]] + mu * kd[UAX[plate]]
                v[i] = P[i][VAX[plate]] + mu * kd[VAX[plate]]
            n = _clip(u, v, n, 0, 0.0, 1, tu, tv, 1e-15)
            n = _clip(tu, tv, n, 0, a, 0, u, v, 1e-15 * a if a > 1 else 1e-15)
            n = _clip(u, v, n, 1, 0.0, 1, tu, tv, 1e-15)
            n = _clip(tu, tv, n, 1, a, 0, u, v, 1e-15 * a if a > 1 else 1e-15)
            for i in range(n):
                P[i][0] = 0.0; P[i][1] = 0.0; P[i][2] = 0.0
                P[i][UAX[plate]] = u[i]
                P[i][VAX[plate]] = v[i]
            if n < 3:
                n = 0
                break
        if n < 3:
            continue
        for i in range(n):
            u[i] = P[i][UAX[plate]]
            v[i] = P[i][VAX[plate]]
        area2 = 0.0
        for i in range(n):
            area2 += u[i] * v[(i + 1) % n] - u[(i + 1) % n] * v[i]
        if fabs(0.5 * area2) <= 1e-24:
            continue
        _coefficients(idx, st, ct, sp, cp, &ctheta, &cphi, &wu, &wv)
        integ = 0.0
        for i in range(1, n - 1):
            integ = integ + _triangle(u, v, 0, i, i + 1, k * wu, k * wv)
        nt[0] = nt[0] + ctheta * integ
        nphi[0] = nphi[0] + cphi * integ


def trihedral_far_field(double[::1] incidence, double[::1] azimuth, double plate_side,
                        double phase_constant):
    cdef Py_ssize_t n = incidence.shape[0], i
    out = np.zeros((n, 2), dtype=np.complex128)
    cdef cplx[:, ::1] o = out
    cdef double complex a, b
    with nogil:
        for i in range(n):
            _far_field_one(incidence[i], azimuth[i], plate_side, phase_constant, &a, &b)
            o[i, 0] = a
            o[i, 1] = b
    return out


def chirp_echo_accumulate(cplx[:, ::1] out, double t0, double fs, double[::1] tau,
                          double[::1] amp, double f0, double rate, double duration):
    cdef Py_ssize_t rows = out.shape[0], cols = out.shape[1], i, n, n0, n1
    cdef double t, dt, carrier, ph, lo, hi
    with nogil:
        for i in range(rows):
            if amp[i] == 0.0:
                continue
            carrier = f0 * tau[i]
            carrier = carrier - floor(carrier)
            lo = (tau[i] - 0.5 * duration - t0) * fs
            hi = (tau[i] + 0.5 * duration - t0) * fs
            n0 = <Py_ssize_t> floor(lo) - 1
            n1 = <Py_ssize_t> floor(hi) + 2
            if n0 < 0:
                n0 = 0
            if n1 > cols:
                n1 = cols
            for n in range(n0, n1):
                t = t0 + n / fs
                dt = t - tau[i]
                if dt < -0.5 * duration or dt > 0.5 * duration:
                    continue
                ph = M_PI * (2.0 * carrier - rate * dt * dt)
                out[i, n] = out[i, n] + amp[i] * (cos(ph) + 1j * sin(ph))


def sinc_interp(cplx[:, ::1] data, double[:, ::1] pos, int taps):
    cdef Py_ssize_t rows = data.shape[0], cols = data.shape[1], m = pos.shape[1]
    cdef Py_ssize_t i, j, q, i0, idx
    cdef int half = taps // 2
    cdef double p, x, w, wsum, fr
    cdef double complex acc
    out = np.zeros((rows, m), dtype=np.complex128)
    cdef cplx[:, ::1] o = out
    with nogil:
        for i in range(rows):
            for j in range(m):
                p = pos[i, j]
                i0 = <Py_ssize_t> floor(p)
                fr = p - i0
                acc = 0.0
                wsum = 0.0
                for q in range(-half + 1, half + 1):
                    x = q - fr
                    if fabs(x) < 1e-12:
                        w = 1.0
                    else:
                        w = sin(M_PI * x) / (M_PI * x)
                    w *= 0.5 * (1.0 + cos(M_PI * x / half))
                    wsum += w
                    idx = i0 + q
                    if idx >= 0 and idx < cols:
                        acc = acc + w * data[i, idx]
                if wsum != 0.0:
                    o[i, j] = acc / wsum
    return out


def splat_patches(cplx[:, ::1] out, cplx[:, :, :, :, ::1] table, long[::1] phase,
                  long[::1] row0, long[::1] col0, long[::1] sub_r, long[::1] sub_c,
                  cplx[::1] value, double[::1] ramp, double[::1] col_rel):
    cdef Py_ssize_t nref = value.shape[0], H = out.shape[0], W = out.shape[1]
    cdef Py_ssize_t P = table.shape[3], Q = table.shape[4], r, i, j, rr, cc
    cdef double complex colf[512]
    cdef double ph
    if Q > 512:
        raise ValueError("patch too wide")
    with nogil:
        for r in range(nref):
            for j in range(Q):
                ph = ramp[r] * (j - col_rel[r])
                colf[j] = value[r] * (cos(ph) + 1j * sin(ph))
            for i in range(P):
                rr = row0[r] + i
                if rr < 0 or rr >= H:
                    continue
                for j in range(Q):
                    cc = col0[r] + j
                    if cc < 0 or cc >= W:
                        continue
                    out[rr, cc] = out[rr, cc] + colf[j] * table[phase[r], sub_r[r], sub_c[r], i, j]
