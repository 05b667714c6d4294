"""Independent reference computations used only by the tests.

Everything here leans on scipy rather than on the package's own kernels, so
the checks stay independent of the code paths they verify.
"""
import numpy as np
from scipy import integrate, special, stats

# One summary line per acceptance criterion, printed at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def gamma_quantile_bisect(u, alpha):
    """Quantile of Gamma(alpha, rate 1) by plain bisection on scipy's regularized CDF."""
    lo, hi = 0.0, max(1.0, alpha) * 4.0
    while special.gammainc(alpha, hi) < u:
        lo, hi = hi, hi * 2.0
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid
        if special.gammainc(alpha, mid) < u:
            lo = mid
        else:
            hi = mid


def gamma_quantile(u, alpha):
    """Vectorized quantile: scipy's inverse plus two Newton polishing steps."""
    u = np.asarray(u, dtype=np.float64)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=np.float64), u.shape)
    z = special.gammaincinv(alpha, u)
    for _ in range(2):
        pdf = np.exp((alpha - 1) * np.log(z) - z - special.gammaln(alpha))
        z = z - (special.gammainc(alpha, z) - u) / pdf
    return z


class FixedNoise:
    """Replayable noise source with the RngState sampling interface.

    Normal draws are recorded per call and replayed after ``rewind()``.
    Gamma draws are stored as CDF levels u and mapped through the quantile
    of whatever shape is requested, i.e. common random numbers for the
    inverse-CDF reparameterization.
    """

    def __init__(self, seed):
        self._rng = np.random.default_rng(seed)
        self._normals = []
        self._uniforms = []
        self.rewind()

    def rewind(self):
        self._ni = 0
        self._gi = 0

    def standard_normal(self, shape):
        if self._ni == len(self._normals):
            self._normals.append(self._rng.standard_normal(shape))
        out = self._normals[self._ni]
        assert out.shape == tuple(np.atleast_1d(shape)) or out.shape == shape
        self._ni += 1
        return out.copy()

    def gamma(self, alpha):
        alpha = np.asarray(alpha, dtype=np.float64)
        if self._gi == len(self._uniforms):
            self._uniforms.append(self._rng.uniform(0.05, 0.95, alpha.shape))
        u = self._uniforms[self._gi]
        self._gi += 1
        return gamma_quantile(u, alpha)


def t_pdf(z, mu, sigma, nu):
    return stats.t.pdf((z - mu) / sigma, nu) / sigma


def expectation_q(fn, mu, sigma, nu):
    """E_q[fn(z)] for q = St(mu, sigma, nu), p = 1, by adaptive quadrature over R."""
    f = lambda z: t_pdf(z, mu, sigma, nu) * fn(z)  # noqa: E731
    left = integrate.quad(f, -np.inf, mu, limit=500, epsabs=1e-13, epsrel=1e-12)[0]
    right = integrate.quad(f, mu, np.inf, limit=500, epsabs=1e-13, epsrel=1e-12)[0]
    return left + right


def kl_student_t_quadrature(mu, sigma, nu):
    """Both expectations of the tied-nu t-vs-t KL by quadrature (p = 1)."""
    e_maha = expectation_q(lambda z: np.log1p(((z - mu) / sigma) ** 2 / nu), mu, sigma, nu)
    e_prior = expectation_q(lambda z: np.log1p(z * z / nu), mu, sigma, nu)
    half = 0.5 * (nu + 1)
    return -np.log(sigma) - half * e_maha + half * e_prior


def numeric_t_cdf(logpdf, lo=-1e3, hi=1e3, n=20001):
    """CDF built by integrating exp(logpdf) on an arctan-spaced grid.

    Returns a callable; points beyond the grid use direct quadrature.
    """
    pdf = lambda z: np.exp(logpdf(z))  # noqa: E731
    theta = np.linspace(np.arctan(lo), np.arctan(hi), n)
    grid = np.tan(theta)
    left_tail = integrate.quad(pdf, -np.inf, grid[0], limit=200, epsabs=1e-14)[0]
    # Simpson on each cell in the theta variable, where the integrand is smooth.
    a, b = theta[:-1], theta[1:]
    m = 0.5 * (a + b)
    g = lambda t: pdf(np.tan(t)) / np.cos(t) ** 2  # noqa: E731
    cells = (b - a) / 6.0 * (g(a) + 4.0 * g(m) + g(b))
    cdf_grid = left_tail + np.concatenate([[0.0], np.cumsum(cells)])

    def cdf(z):
        z = np.asarray(z, dtype=np.float64)
        out = np.interp(np.arctan(z), theta, cdf_grid)
        for idx in np.flatnonzero((z < grid[0]) | (z > grid[-1])):
            v = z.flat[idx]
            if v < grid[0]:
                out.flat[idx] = integrate.quad(pdf, -np.inf, v, epsabs=1e-14)[0]
            else:
                out.flat[idx] = 1.0 - integrate.quad(pdf, v, np.inf, epsabs=1e-14)[0]
        return out

    return cdf


def rel_err(analytic, numeric, floor=1e-6):
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def ssim_fixture_pairs():
    rng = np.random.default_rng(20240611)
    pairs = []
    for i in range(8):
        base = rng.random((7, 7))
        a = np.kron(base, np.ones((4, 4)))
        b = np.clip(a + (0.05 + 0.05 * i) * rng.standard_normal((28, 28)), 0.0, 1.0)
        pairs.append((a, b))
    return pairs


# Computed once with skimage.metrics.structural_similarity(gaussian_weights=True,
# sigma=1.5, use_sample_covariance=False, data_range=1.0) on ssim_fixture_pairs().
SSIM_GOLDEN = (
    0.9765696850176544, 0.8874437060379143, 0.8051744040275863, 0.7096608867766523,
    0.5158262632437286, 0.5278730806009558, 0.38198004658581863, 0.3749163674142194,
)
SSIM_GOLDEN_MEAN = 0.6474305549630662
