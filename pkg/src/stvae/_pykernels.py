"""Pure-Python implementations of the numerical kernels.

This module mirrors ``_ckernels.pyx`` operation for operation so that both
backends consume random streams identically and agree to rounding.  It is
used whenever the compiled extension is unavailable (or when
``STVAE_PURE_PYTHON=1`` is set).
"""
import math

import numpy as np

# Lanczos approximation, g = 671/128, 14 terms.
_LANCZOS_G = 5.24218750000000000
_LANCZOS_C0 = 0.999999999999997092
_LANCZOS_COF = (
    57.1562356658629235, -59.5979603554754912, 14.1360979747417471,
    -0.491913816097620199, 0.339946499848118887e-4, 0.465236289270485756e-4,
    -0.983744753048795646e-4, 0.158088703224912494e-3, -0.210264441724104883e-3,
    0.217439618115212643e-3, -0.164318106536763890e-3, 0.844182239838527433e-4,
    -0.261908384015814087e-4, 0.368991826595316234e-5,
)
_SQRT_2PI = 2.5066282746310005

_EPS = 1e-16
_FPMIN = 1e-300
_MAX_ITER = 100000
TINY_GAMMA = 1e-300
GRAD_CLAMP = 1e6


def lgamma(x):
    if not x > 0.0:
        raise ValueError(f"lgamma requires x > 0, got {x!r}")
    y = x
    tmp = x + _LANCZOS_G
    tmp = (x + 0.5) * math.log(tmp) - tmp
    ser = _LANCZOS_C0
    for c in _LANCZOS_COF:
        y += 1.0
        ser += c / y
    return tmp + math.log(_SQRT_2PI * ser / x)


def digamma(x):
    if not x > 0.0:
        raise ValueError(f"digamma requires x > 0, got {x!r}")
    acc = 0.0
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    r = 1.0 / (x * x)
    series = r * (1.0 / 12 - r * (1.0 / 120 - r * (1.0 / 252 - r * (
        1.0 / 240 - r * (1.0 / 132 - r * (691.0 / 32760 - r / 12.0))))))
    return acc + math.log(x) - 0.5 / x - series


def trigamma(x):
    if not x > 0.0:
        raise ValueError(f"trigamma requires x > 0, got {x!r}")
    acc = 0.0
    while x < 10.0:
        acc += 1.0 / (x * x)
        x += 1.0
    r = 1.0 / (x * x)
    series = r * (1.0 / 6 - r * (1.0 / 30 - r * (1.0 / 42 - r * (
        1.0 / 30 - r * (5.0 / 66 - r * (691.0 / 2730 - r * 7.0 / 6))))))
    return acc + 1.0 / x + 0.5 * r + series / x


def _lower_series(x, a):
    """Series for P(a, x) without the prefactor, plus its a-derivative.

    Returns (S, dS) with P = exp(a log x - x - lgamma(a)) * S.
    """
    ap = a
    term = 1.0 / a
    dterm = -term / a
    s = term
    ds = dterm
    inv_sum = 1.0 / a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        inv_sum += 1.0 / ap
        dterm = -term * inv_sum
        s += term
        ds += dterm
        if abs(term) < abs(s) * _EPS and abs(dterm) <= abs(ds) * _EPS:
            break
    return s, ds


def _upper_fraction(x, a):
    """Lentz continued fraction for Q(a, x) and d(log h)/da.

    Returns (h, dlogh) with Q = exp(a log x - x - lgamma(a)) * h.
    """
    b = x + 1.0 - a
    db = -1.0
    c = 1.0 / _FPMIN
    dc = 0.0
    d = 1.0 / b
    dd = -db / (b * b)
    h = d
    dlogh = dd / d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        dan = float(i)
        b += 2.0
        draw = an * d + b
        ddraw = dan * d + an * dd + db
        if abs(draw) < _FPMIN:
            draw = _FPMIN
        d = 1.0 / draw
        dd = -ddraw * d * d
        cold = c
        c = b + an / cold
        dc = db + dan / cold - an * dc / (cold * cold)
        if abs(c) < _FPMIN:
            c = _FPMIN
        delta = d * c
        ddelta = dd * c + d * dc
        h *= delta
        step = ddelta / delta
        dlogh += step
        if abs(delta - 1.0) < _EPS and abs(step) <= _EPS * abs(dlogh) + 1e-300:
            break
    return h, dlogh


def gamma_cdf_eval(x, a):
    """(value, pdf, d_value/d_a) of the rate-1 Gamma(a) CDF at x."""
    if not a > 0.0 or not x >= 0.0:
        raise ValueError(f"gamma_cdf requires x >= 0 and alpha > 0, got x={x!r}, alpha={a!r}")
    if x == 0.0:
        pdf = 0.0
        if a == 1.0:
            pdf = 1.0
        elif a < 1.0:
            pdf = math.inf
        return 0.0, pdf, 0.0
    logx = math.log(x)
    lg = lgamma(a)
    pre = math.exp(a * logx - x - lg)
    pdf = math.exp((a - 1.0) * logx - x - lg)
    psi = digamma(a)
    if x < a + 1.0:
        s, ds = _lower_series(x, a)
        value = pre * s
        dval = pre * ((logx - psi) * s + ds)
    else:
        h, dlogh = _upper_fraction(x, a)
        q = pre * h
        value = 1.0 - q
        dval = -q * (logx - psi + dlogh)
    return value, pdf, dval


def implicit_grad(z, a):
    """dz/da at fixed CDF level; returns (grad, clamped_flag).

    The prefactor cancels between numerator and density, so the ratio is
    formed without ever evaluating the density itself.
    """
    logz = math.log(z)
    psi = digamma(a)
    if z < a + 1.0:
        s, ds = _lower_series(z, a)
        g = -z * ((logz - psi) * s + ds)
    else:
        h, dlogh = _upper_fraction(z, a)
        g = z * h * (logz - psi + dlogh)
    if not math.isfinite(g) or abs(g) > GRAD_CLAMP:
        return math.copysign(GRAD_CLAMP, g) if not math.isnan(g) else GRAD_CLAMP, 1
    return g, 0


def lgamma_array(x):
    x = np.asarray(x, dtype=np.float64)
    return np.array([lgamma(v) for v in x.ravel()]).reshape(x.shape)


def digamma_array(x):
    x = np.asarray(x, dtype=np.float64)
    return np.array([digamma(v) for v in x.ravel()]).reshape(x.shape)


def trigamma_array(x):
    x = np.asarray(x, dtype=np.float64)
    return np.array([trigamma(v) for v in x.ravel()]).reshape(x.shape)


def gamma_cdf_array(x, a):
    x, a = np.broadcast_arrays(np.asarray(x, np.float64), np.asarray(a, np.float64))
    out = np.empty((3,) + x.shape)
    flat = out.reshape(3, -1)
    for i, (xv, av) in enumerate(zip(x.ravel(), a.ravel())):
        flat[:, i] = gamma_cdf_eval(xv, av)
    return out[0], out[1], out[2]


def implicit_grad_array(z, a):
    z, a = np.broadcast_arrays(np.asarray(z, np.float64), np.asarray(a, np.float64))
    out = np.empty(z.size)
    flagged = 0
    for i, (zv, av) in enumerate(zip(z.ravel(), a.ravel())):
        out[i], f = implicit_grad(zv, av)
        flagged += f
    return out.reshape(z.shape), flagged


def _normal(rand):
    # Marsaglia polar method; the second variate is discarded.
    while True:
        u = 2.0 * rand() - 1.0
        v = 2.0 * rand() - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            return u * math.sqrt(-2.0 * math.log(s) / s)


def _gamma_one(rand, a):
    if a < 1.0:
        z = _gamma_one(rand, a + 1.0)
        u = 1.0 - rand()
        return max(math.exp(math.log(z) + math.log(u) / a), TINY_GAMMA)
    d = a - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = _normal(rand)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = 1.0 - rand()
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return d * v
        if math.log(u) < 0.5 * x2 + d * (1.0 - v + math.log(v)):
            return d * v


def sample_gamma(bit_generator, alpha):
    """Marsaglia-Tsang draws (rate 1), one per entry of ``alpha``."""
    alpha = np.ascontiguousarray(alpha, dtype=np.float64)
    rand = np.random.Generator(bit_generator).random
    out = np.empty(alpha.size)
    for i, a in enumerate(alpha.ravel()):
        out[i] = _gamma_one(rand, a)
    return out.reshape(alpha.shape)


def ising_sweep(spins, up_prob, uniforms):
    """One checkerboard Gibbs sweep over a stack of lattices, in place.

    ``spins`` is int8 (M, R, C) with values +-1; ``up_prob[k]`` is the
    probability of spin +1 given neighbour sum ``k - 4``; ``uniforms`` has the
    same shape as ``spins``.
    """
    _, rows, cols = spins.shape
    parity = np.add.outer(np.arange(rows), np.arange(cols)) % 2
    for color in (0, 1):
        nsum = np.zeros(spins.shape, dtype=np.int64)
        nsum[:, 1:, :] += spins[:, :-1, :]
        nsum[:, :-1, :] += spins[:, 1:, :]
        nsum[:, :, 1:] += spins[:, :, :-1]
        nsum[:, :, :-1] += spins[:, :, 1:]
        new = np.where(uniforms < up_prob[nsum + 4], 1, -1).astype(np.int8)
        sel = parity == color
        spins[:, sel] = new[:, sel]
    return spins
