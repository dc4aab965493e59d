"""Quantizers for 2-PAM when the decoder is restricted to fixed metrics.

Given positive relative metrics ``q_1 < ... < q_K`` (plus the implicit zero
output and the negated mirror outputs) the optimal thresholds depend on a
single tilting parameter ``alpha``. The generalized mutual information is
then maximised over ``alpha`` alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from . import numerics
from .channel import BPSK, DiscreteChannel, GaussianChannel, QuantizerScheme, induce_discrete, mutual_information_continuous
from .errors import BracketError, ConvergenceError, DomainError

LN2 = math.log(2.0)


@dataclass(frozen=True)
class MetricAssignment:
    """Positive relative metrics q(1) < ... < q(K); q(0)=0 and q(-i)=-q(i) are implied."""

    values: tuple[float, ...]

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        if not v:
            raise DomainError("need at least one positive metric")
        if v[0] <= 0 or any(b <= a for a, b in zip(v, v[1:])):
            raise DomainError("metrics must be positive and strictly increasing")
        object.__setattr__(self, "values", v)

    @classmethod
    def integer(cls, k: int) -> "MetricAssignment":
        return cls(tuple(range(1, k + 1)))

    @classmethod
    def for_outputs(cls, n: int) -> "MetricAssignment":
        """Integer metrics for an odd number of outputs N = 2K + 1."""
        if n < 3 or n % 2 == 0:
            raise DomainError("mismatched quantizers need an odd N >= 3")
        return cls.integer((n - 1) // 2)

    @property
    def k(self) -> int:
        return len(self.values)

    @property
    def n_outputs(self) -> int:
        return 2 * self.k + 1

    def full(self) -> np.ndarray:
        """Relative metric of every output, ordered along the y axis."""
        q = np.asarray(self.values)
        return np.concatenate((-q[::-1], [0.0], q))

    def with_zero(self) -> np.ndarray:
        return np.concatenate(([0.0], self.values))

    def scaled(self, c: float) -> "MetricAssignment":
        return MetricAssignment(tuple(c * x for x in self.values))


@dataclass
class MismatchedOptResult:
    alpha: float
    scheme: QuantizerScheme
    gmi: float
    relative_loss: float
    dgmi: float


def _as_metrics(metrics) -> MetricAssignment:
    return metrics if isinstance(metrics, MetricAssignment) else MetricAssignment(tuple(metrics))


# ---------------------------------------------------------------------------
# GMI and its alpha-derivative


def _relative_metrics(dc: DiscreteChannel, metrics) -> np.ndarray:
    q = np.asarray(metrics.full() if isinstance(metrics, MetricAssignment) else metrics, dtype=float)
    if q.size != dc.transition.shape[1]:
        raise DomainError("need one relative metric per quantized output")
    if dc.transition.shape[0] != 2:
        raise DomainError("GMI here is defined for binary-input channels")
    return q


def gmi_symmetric(dc: DiscreteChannel, metrics, alpha: float) -> float:
    """GMI (nats) of a binary-input channel under relative metrics at tilt ``alpha``.

    ln 2 + sum_{x,z} P(x,z) ln( e^{a q(x,z)} / sum_x' e^{a q(x',z)} ), with
    q(+1,z) - q(-1,z) = q(z). Rows of ``dc`` are ordered (-1, +1).
    """
    if alpha < 0:
        raise DomainError("alpha must be non-negative")
    if alpha == 0:
        return 0.0
    q = _relative_metrics(dc, metrics)
    p = dc.joint
    loss = p[1] @ numerics.softplus(-alpha * q) + p[0] @ numerics.softplus(alpha * q)
    return LN2 - float(loss)


def _log_softplus(v):
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(v < -30.0, v - 0.5 * np.exp(v), np.log(numerics.softplus(v)))


def log_gmi_deficit(dc: DiscreteChannel, metrics, alpha: float) -> float:
    """ln(ln 2 - GMI), computed without the cancellation in ``gmi_symmetric``.

    At high SNR the GMI sits within 1e-16 of ln 2 and its maximiser can only
    be located through this quantity.
    """
    q = _relative_metrics(dc, metrics)
    with np.errstate(divide="ignore"):
        lp = np.log(dc.prior)[:, None] + dc.log_transition
    terms = np.concatenate((lp[1] + _log_softplus(-alpha * q), lp[0] + _log_softplus(alpha * q)))
    return numerics.log_sum_exp(terms[np.isfinite(terms)])


def dgmi_dalpha(dc: DiscreteChannel, metrics, alpha: float) -> float:
    """Partial derivative of the GMI in alpha at fixed quantizer.

    For a symmetric channel this is sum_z P(z|1) q(z) / (1 + e^{alpha q(z)}).
    """
    q = _relative_metrics(dc, metrics)
    p = dc.joint
    return float(p[1] @ (q * special.expit(-alpha * q)) - p[0] @ (q * special.expit(alpha * q)))


# ---------------------------------------------------------------------------
# thresholds as a function of alpha


def _log_softplus_gap(lo, hi):
    """ln(softplus(hi) - softplus(lo)) for hi > lo, stable for tiny and huge gaps."""
    d = hi - lo
    # softplus(hi) - softplus(lo) = log1p(sigmoid(lo) * expm1(d))
    lu = special.log_expit(lo) + d + np.log(-np.expm1(-d))
    gap = numerics.softplus(lu)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(lu < -30.0, lu - 0.5 * np.exp(lu), np.log(gap))


def threshold_values(metrics, alpha: float, g: float) -> np.ndarray:
    """Positive thresholds b_0..b_{K-1} for tilt ``alpha`` and gain ``g``.

    b_i = (1/2g) ln( -ln((1+e^{a q_i})/(1+e^{a q_{i+1}}))
                      / ln((1+e^{-a q_i})/(1+e^{-a q_{i+1}})) ),  q_0 = 0.
    """
    m = _as_metrics(metrics)
    if g <= 0:
        raise DomainError("g must be positive")
    if alpha <= 0:
        raise DomainError("alpha must be positive: at alpha=0 every boundary coincides")
    q = alpha * m.with_zero()
    lo, hi = q[:-1], q[1:]
    num = _log_softplus_gap(lo, hi)
    den = _log_softplus_gap(-hi, -lo)
    return (num - den) / (2.0 * g)


def thresholds_from_alpha(metrics, alpha: float, g: float) -> QuantizerScheme:
    m = _as_metrics(metrics)
    b = threshold_values(m, alpha, g)
    if np.any(b <= 0) or np.any(np.diff(b) <= 0):
        raise DomainError(f"alpha={alpha} gives non-increasing thresholds {b}")
    return QuantizerScheme.symmetric(b, metrics=tuple(m.full()))


def gmi_at_alpha(ch: GaussianChannel, metrics, alpha: float) -> float:
    """GMI with the thresholds that are optimal for this ``alpha``."""
    m = _as_metrics(metrics)
    if alpha == 0:
        return 0.0
    scheme = thresholds_from_alpha(m, alpha, ch.gain)
    return gmi_symmetric(induce_discrete(ch, BPSK, scheme), m, alpha)


def gmi_of_scheme(ch: GaussianChannel, scheme: QuantizerScheme, metrics, alpha: float | None = None) -> float:
    """GMI of a fixed quantizer; maximised over alpha when ``alpha`` is None."""
    m = _as_metrics(metrics)
    dc = induce_discrete(ch, BPSK, scheme)
    if alpha is not None:
        return gmi_symmetric(dc, m, alpha)
    # GMI is concave in alpha for a fixed quantizer: root of the derivative
    d0 = dgmi_dalpha(dc, m, 0.0)
    if d0 <= 0:
        return 0.0
    hi = 1.0
    while dgmi_dalpha(dc, m, hi) > 0:
        hi *= 2.0
        if hi > 1e8:
            return gmi_symmetric(dc, m, hi)
    a = numerics.find_root(lambda x: dgmi_dalpha(dc, m, x), (0.0, hi), 1e-13)
    return gmi_symmetric(dc, m, a)


# ---------------------------------------------------------------------------
# asymptotic schemes


@dataclass(frozen=True)
class SmallSnrMismatched:
    """Small-SNR scheme per unit noise sigma: thresholds and alpha/g."""

    thresholds: tuple[float, ...]
    alpha_over_g: float
    iterations: int

    @property
    def largest(self) -> float:
        return self.thresholds[-1]


def _small_snr_beta(metrics: MetricAssignment, b: np.ndarray) -> float:
    q = np.asarray(metrics.values)
    e = np.concatenate(([b[0]], b[1:], [np.inf]))
    lo, hi = e[:-1], e[1:]
    # E[q(z) y] and E[q(z)^2] over y ~ N(0,1), both halves counted
    eqy = 2.0 * np.sum(q * (numerics.gaussian_pdf(lo) - numerics.gaussian_pdf(hi)))
    eq2 = 2.0 * np.sum(q * q * numerics.interval_mass(lo, hi))
    return 2.0 * eqy / eq2


def small_snr_mismatched(metrics, tol: float = 1e-10, max_iter: int = 100000) -> SmallSnrMismatched:
    """Zero-SNR optimal thresholds (per unit noise sigma) for fixed metrics.

    Alternates b_i = beta (q_i + q_{i+1}) / 4 with
    beta = E[2 q(z) y] / E[q(z)^2], starting from a uniform scheme, until the
    largest threshold movement drops below ``tol``.
    """
    m = _as_metrics(metrics)
    qz = m.with_zero()
    mids = 0.25 * (qz[:-1] + qz[1:])
    b = (np.arange(m.k) + 0.5) * (2.5 / m.k)  # uniform start over [0, 2.5]
    trace = []
    for it in range(1, max_iter + 1):
        beta = _small_snr_beta(m, b)
        new = beta * mids
        move = float(np.max(np.abs(new - b)))
        trace.append(move)
        b = new
        if move < tol:
            return SmallSnrMismatched(tuple(float(x) for x in b), float(beta), it)
    raise ConvergenceError(f"small-SNR mismatched iteration did not converge for K={m.k}", trace[-50:])


def small_snr_mismatched_scheme(metrics, sigma: float = 1.0) -> QuantizerScheme:
    m = _as_metrics(metrics)
    s = small_snr_mismatched(m)
    return QuantizerScheme.symmetric([sigma * x for x in s.thresholds], metrics=tuple(m.full()))


def large_snr_mismatched(metrics, g: float) -> tuple[float, np.ndarray]:
    """alpha = g^2 / (2 q_K) and b_i = g q_i / (4 q_K) for i = 0..K-1."""
    m = _as_metrics(metrics)
    if g <= 0:
        raise DomainError("g must be positive")
    qk = m.values[-1]
    return g * g / (2.0 * qk), g * m.with_zero()[:-1] / (4.0 * qk)


# ---------------------------------------------------------------------------
# optimisation over alpha


def alpha_bracket(ch: GaussianChannel, metrics) -> tuple[float, float]:
    """Bracket seeded from the small- and large-SNR alpha formulas."""
    m = _as_metrics(metrics)
    g = ch.gain
    a_small = g * small_snr_mismatched(m).alpha_over_g
    a_large = large_snr_mismatched(m, g)[0]
    return 0.1 * min(a_small, a_large), 4.0 * max(a_small, a_large)


def optimize_mismatched(ch: GaussianChannel, metrics, tol: float = numerics.MAX_TOL) -> MismatchedOptResult:
    """Maximise the GMI over alpha with thresholds tied to alpha."""
    m = _as_metrics(metrics)
    if ch.gain <= 0:
        raise DomainError("g must be positive")
    lo, hi = alpha_bracket(ch, m)

    def f(la):
        # search in ln(alpha); maximise GMI by minimising ln(ln 2 - GMI)
        a = math.exp(la)
        dc = induce_discrete(ch, BPSK, thresholds_from_alpha(m, a, ch.gain))
        return -log_gmi_deficit(dc, m, a)

    la, _ = numerics.maximize_scalar(f, (math.log(lo), math.log(hi)), tol * 1e-2)
    alpha = math.exp(la)
    if la - math.log(lo) < 1e-6 or math.log(hi) - la < 1e-6:
        raise BracketError(f"GMI peak at the edge of alpha bracket [{lo}, {hi}]; reseed from the asymptotic formulas")
    deriv = lambda a: dgmi_dalpha(induce_discrete(ch, BPSK, thresholds_from_alpha(m, a, ch.gain)), m, a)  # noqa: E731
    # polish on the stationarity condition when the bracket straddles it
    step = max(alpha * 1e-4, tol)
    a0, a1 = alpha - step, alpha + step
    if deriv(a0) > 0 > deriv(a1):
        alpha = numerics.find_root(deriv, (a0, a1), tol * 1e-4)
    scheme = thresholds_from_alpha(m, alpha, ch.gain)
    dc = induce_discrete(ch, BPSK, scheme)
    gmi = gmi_symmetric(dc, m, alpha)
    cont = mutual_information_continuous(ch, BPSK)
    return MismatchedOptResult(alpha, scheme, gmi, 1.0 - gmi / cont, dgmi_dalpha(dc, m, alpha))


# ---------------------------------------------------------------------------
# high-rate loss


def high_rate_coefficient(g: float) -> float:
    """A = integral of 2 f_Y(y) g^2 / (3 (e^{gy} + e^{-gy})^2) dy for 2-PAM."""
    if g == 0:
        return 0.0

    def integrand(y):
        fy = 0.5 * (numerics.gaussian_pdf(y - g) + numerics.gaussian_pdf(y + g))
        u = np.exp(-2.0 * np.abs(g * y))
        # 1/(e^{gy}+e^{-gy})^2 = u / (1 + u)^2
        return 2.0 * fy * g * g * u / (3.0 * (1.0 + u) ** 2)

    span = g + 40.0
    return numerics.integrate(integrand, -span, span, breaks=[-g, 0.0, g], tol=1e-15)


def high_rate_mismatched_loss(ch: GaussianChannel, n: int) -> float:
    """Asymptotic mismatched capacity loss 4 A ln N / N^2 (nats).

    Only meaningful once sqrt(ln N) >> 1, which practical N never reach.
    """
    if n < 2:
        raise DomainError("N must be at least 2")
    return 4.0 * high_rate_coefficient(ch.gain) * math.log(n) / n**2


def tail_second_moment(x: float) -> float:
    """Integral over y >= 0 of exp(-(x + y)^2 / 2) y^2."""
    x = float(x)
    # factor out exp(-x^2/2) through the scaled complementary error function so the
    # remaining cancellation is only polynomial in x
    mills = math.sqrt(math.pi / 2.0) * float(special.erfcx(x / math.sqrt(2.0)))
    return math.exp(-0.5 * x * x) * ((1.0 + x * x) * mills - x)


def tail_second_moment_bounds(x: float) -> tuple[float, float]:
    """Lower and upper bounds on :func:`tail_second_moment` for x > 0."""
    if x <= 0:
        raise DomainError("bounds hold for x > 0")
    e = math.exp(-0.5 * x * x)
    s = x + 0.5
    lower = (2.0 - math.exp(-s) * (x * x + 3.0 * x + 13.0 / 4.0)) / s**3 * e
    upper = 2.0 / x**3 * e
    return lower, upper


def mismatched_sweep_row(ch: GaussianChannel, scheme: QuantizerScheme, metrics, alpha: float | None = None) -> dict:
    m = _as_metrics(metrics)
    g = gmi_of_scheme(ch, scheme, m, alpha)
    cont = mutual_information_continuous(ch, BPSK)
    return {"snr_db": ch.snr_db, "thresholds": scheme.positive_thresholds(), "gmi_nats": g, "relative_loss": 1.0 - g / cont}
