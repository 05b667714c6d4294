# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical kernels.

Operation-for-operation twin of ``_pykernels``; the two must stay in sync so
that seeded runs agree across backends.
"""
import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport exp, log, sqrt, fabs, isfinite, isnan, copysign, INFINITY
from numpy.random cimport bitgen_t

cnp.import_array()

cdef double _LANCZOS_G = 5.24218750000000000
cdef double _LANCZOS_C0 = 0.999999999999997092
cdef double[14] _LANCZOS_COF
_LANCZOS_COF[:] = [
    57.1562356658629235, -59.5979603554754912, 14.1360979747417471,
    -0.491913816097620199, 0.339946499848118887e-4, 0.465236289270485756e-4,
    -0.983744753048795646e-4, 0.158088703224912494e-3, -0.210264441724104883e-3,
    0.217439618115212643e-3, -0.164318106536763890e-3, 0.844182239838527433e-4,
    -0.261908384015814087e-4, 0.368991826595316234e-5,
]
cdef double _SQRT_2PI = 2.5066282746310005
cdef double _EPS = 1e-16
cdef double _FPMIN = 1e-300
cdef int _MAX_ITER = 100000
TINY_GAMMA = 1e-300
GRAD_CLAMP = 1e6
cdef double _TINY_GAMMA = 1e-300
cdef double _GRAD_CLAMP = 1e6


cdef inline double _lgamma(double x) nogil:
    cdef double y = x
    cdef double tmp = x + _LANCZOS_G
    cdef double ser = _LANCZOS_C0
    cdef int j
    tmp = (x + 0.5) * log(tmp) - tmp
    for j in range(14):
        y += 1.0
        ser += _LANCZOS_COF[j] / y
    return tmp + log(_SQRT_2PI * ser / x)


cdef inline double _digamma(double x) nogil:
    cdef double acc = 0.0
    cdef double r, series
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    r = 1.0 / (x * x)
    series = r * (1.0 / 12 - r * (1.0 / 120 - r * (1.0 / 252 - r * (
        1.0 / 240 - r * (1.0 / 132 - r * (691.0 / 32760 - r / 12.0))))))
    return acc + log(x) - 0.5 / x - series


cdef inline double _trigamma(double x) nogil:
    cdef double acc = 0.0
    cdef double r, series
    while x < 10.0:
        acc += 1.0 / (x * x)
        x += 1.0
    r = 1.0 / (x * x)
    series = r * (1.0 / 6 - r * (1.0 / 30 - r * (1.0 / 42 - r * (
        1.0 / 30 - r * (5.0 / 66 - r * (691.0 / 2730 - r * 7.0 / 6))))))
    return acc + 1.0 / x + 0.5 * r + series / x


cdef void _lower_series(double x, double a, double* s_out, double* ds_out) nogil:
    cdef double ap = a
    cdef double term = 1.0 / a
    cdef double dterm = -term / a
    cdef double s = term
    cdef double ds = dterm
    cdef double inv_sum = 1.0 / a
    cdef int it
    for it in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        inv_sum += 1.0 / ap
        dterm = -term * inv_sum
        s += term
        ds += dterm
        if fabs(term) < fabs(s) * _EPS and fabs(dterm) <= fabs(ds) * _EPS:
            break
    s_out[0] = s
    ds_out[0] = ds


cdef void _upper_fraction(double x, double a, double* h_out, double* dlogh_out) nogil:
    cdef double b = x + 1.0 - a
    cdef double db = -1.0
    cdef double c = 1.0 / _FPMIN
    cdef double dc = 0.0
    cdef double d = 1.0 / b
    cdef double dd = -db / (b * b)
    cdef double h = d
    cdef double dlogh = dd / d
    cdef double an, dan, draw, ddraw, cold, delta, ddelta, step
    cdef int i
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        dan = <double>i
        b += 2.0
        draw = an * d + b
        ddraw = dan * d + an * dd + db
        if fabs(draw) < _FPMIN:
            draw = _FPMIN
        d = 1.0 / draw
        dd = -ddraw * d * d
        cold = c
        c = b + an / cold
        dc = db + dan / cold - an * dc / (cold * cold)
        if fabs(c) < _FPMIN:
            c = _FPMIN
        delta = d * c
        ddelta = dd * c + d * dc
        h *= delta
        step = ddelta / delta
        dlogh += step
        if fabs(delta - 1.0) < _EPS and fabs(step) <= _EPS * fabs(dlogh) + 1e-300:
            break
    h_out[0] = h
    dlogh_out[0] = dlogh


cdef void _gamma_cdf(double x, double a, double* value, double* pdf, double* dval) nogil:
    cdef double logx, lg, pre, psi, s, ds, h, dlogh, q
    if x == 0.0:
        value[0] = 0.0
        dval[0] = 0.0
        if a == 1.0:
            pdf[0] = 1.0
        elif a < 1.0:
            pdf[0] = INFINITY
        else:
            pdf[0] = 0.0
        return
    logx = log(x)
    lg = _lgamma(a)
    pre = exp(a * logx - x - lg)
    pdf[0] = exp((a - 1.0) * logx - x - lg)
    psi = _digamma(a)
    if x < a + 1.0:
        _lower_series(x, a, &s, &ds)
        value[0] = pre * s
        dval[0] = pre * ((logx - psi) * s + ds)
    else:
        _upper_fraction(x, a, &h, &dlogh)
        q = pre * h
        value[0] = 1.0 - q
        dval[0] = -q * (logx - psi + dlogh)


cdef int _implicit_grad(double z, double a, double* out) nogil:
    cdef double logz = log(z)
    cdef double psi = _digamma(a)
    cdef double s, ds, h, dlogh, g
    if z < a + 1.0:
        _lower_series(z, a, &s, &ds)
        g = -z * ((logz - psi) * s + ds)
    else:
        _upper_fraction(z, a, &h, &dlogh)
        g = z * h * (logz - psi + dlogh)
    if not isfinite(g) or fabs(g) > _GRAD_CLAMP:
        if isnan(g):
            out[0] = _GRAD_CLAMP
        else:
            out[0] = copysign(_GRAD_CLAMP, g)
        return 1
    out[0] = g
    return 0


def lgamma(double x):
    if not x > 0.0:
        raise ValueError(f"lgamma requires x > 0, got {x!r}")
    return _lgamma(x)


def digamma(double x):
    if not x > 0.0:
        raise ValueError(f"digamma requires x > 0, got {x!r}")
    return _digamma(x)


def trigamma(double x):
    if not x > 0.0:
        raise ValueError(f"trigamma requires x > 0, got {x!r}")
    return _trigamma(x)


def gamma_cdf_eval(double x, double a):
    cdef double value, pdf, dval
    if not a > 0.0 or not x >= 0.0:
        raise ValueError(f"gamma_cdf requires x >= 0 and alpha > 0, got x={x!r}, alpha={a!r}")
    _gamma_cdf(x, a, &value, &pdf, &dval)
    return value, pdf, dval


def implicit_grad(double z, double a):
    cdef double g
    cdef int flag = _implicit_grad(z, a, &g)
    return g, flag


def _check_positive(cnp.ndarray arr, str name):
    if arr.size and not np.all(arr > 0.0):
        raise ValueError(f"{name} requires x > 0")


def lgamma_array(x):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] flat = np.ascontiguousarray(x, dtype=np.float64).ravel()
    _check_positive(flat, "lgamma")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(flat.shape[0])
    cdef Py_ssize_t i
    for i in range(flat.shape[0]):
        out[i] = _lgamma(flat[i])
    return out.reshape(np.shape(x))


def digamma_array(x):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] flat = np.ascontiguousarray(x, dtype=np.float64).ravel()
    _check_positive(flat, "digamma")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(flat.shape[0])
    cdef Py_ssize_t i
    for i in range(flat.shape[0]):
        out[i] = _digamma(flat[i])
    return out.reshape(np.shape(x))


def trigamma_array(x):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] flat = np.ascontiguousarray(x, dtype=np.float64).ravel()
    _check_positive(flat, "trigamma")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(flat.shape[0])
    cdef Py_ssize_t i
    for i in range(flat.shape[0]):
        out[i] = _trigamma(flat[i])
    return out.reshape(np.shape(x))


def gamma_cdf_array(x, a):
    xb, ab = np.broadcast_arrays(np.asarray(x, np.float64), np.asarray(a, np.float64))
    shape = xb.shape
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xf = np.ascontiguousarray(xb).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] af = np.ascontiguousarray(ab).ravel()
    if xf.size and (not np.all(af > 0.0) or not np.all(xf >= 0.0)):
        raise ValueError("gamma_cdf requires x >= 0 and alpha > 0")
    cdef Py_ssize_t n = xf.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] val = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pdf = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dv = np.empty(n)
    cdef Py_ssize_t i
    for i in range(n):
        _gamma_cdf(xf[i], af[i], &val[i], &pdf[i], &dv[i])
    return val.reshape(shape), pdf.reshape(shape), dv.reshape(shape)


def implicit_grad_array(z, a):
    zb, ab = np.broadcast_arrays(np.asarray(z, np.float64), np.asarray(a, np.float64))
    shape = zb.shape
    cdef cnp.ndarray[cnp.float64_t, ndim=1] zf = np.ascontiguousarray(zb).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] af = np.ascontiguousarray(ab).ravel()
    cdef Py_ssize_t n = zf.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef Py_ssize_t i
    cdef long flagged = 0
    for i in range(n):
        flagged += _implicit_grad(zf[i], af[i], &out[i])
    return out.reshape(shape), int(flagged)


cdef inline double _normal(bitgen_t* rng) nogil:
    cdef double u, v, s
    while True:
        u = 2.0 * rng.next_double(rng.state) - 1.0
        v = 2.0 * rng.next_double(rng.state) - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            return u * sqrt(-2.0 * log(s) / s)


cdef double _gamma_one(bitgen_t* rng, double a) nogil:
    cdef double z, u, d, c, x, v, x2, r
    if a < 1.0:
        z = _gamma_one(rng, a + 1.0)
        u = 1.0 - rng.next_double(rng.state)
        r = exp(log(z) + log(u) / a)
        return r if r > _TINY_GAMMA else _TINY_GAMMA
    d = a - 1.0 / 3.0
    c = 1.0 / sqrt(9.0 * d)
    while True:
        x = _normal(rng)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = 1.0 - rng.next_double(rng.state)
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return d * v
        if log(u) < 0.5 * x2 + d * (1.0 - v + log(v)):
            return d * v


def sample_gamma(bit_generator, alpha):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] af = np.ascontiguousarray(alpha, dtype=np.float64).ravel()
    cdef Py_ssize_t n = af.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef Py_ssize_t i
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid bit generator capsule")
    cdef bitgen_t* rng = <bitgen_t*>PyCapsule_GetPointer(capsule, "BitGenerator")
    with bit_generator.lock, nogil:
        for i in range(n):
            out[i] = _gamma_one(rng, af[i])
    return out.reshape(np.shape(alpha))


def ising_sweep(cnp.int8_t[:, :, ::1] spins, double[::1] up_prob, double[:, :, ::1] uniforms):
    cdef Py_ssize_t m, i, j, color
    cdef Py_ssize_t nm = spins.shape[0], rows = spins.shape[1], cols = spins.shape[2]
    cdef int s
    with nogil:
        for color in range(2):
            for m in range(nm):
                for i in range(rows):
                    for j in range((i + color) % 2, cols, 2):
                        s = 0
                        if i > 0:
                            s += spins[m, i - 1, j]
                        if i < rows - 1:
                            s += spins[m, i + 1, j]
                        if j > 0:
                            s += spins[m, i, j - 1]
                        if j < cols - 1:
                            s += spins[m, i, j + 1]
                        if uniforms[m, i, j] < up_prob[s + 4]:
                            spins[m, i, j] = 1
                        else:
                            spins[m, i, j] = -1
    return np.asarray(spins)
