"""Capacity-optimal output quantizers for matched (maximum-likelihood) decoding.

The numerical optimum is found by repeatedly reassigning every channel
output ``y`` to the quantized output ``z`` maximising
``sum_x P(x) f(y|x) ln P(x|z)``; each pass cannot lower I(X;Z). The
remaining functions give the closed-form and asymptotic approximations
(small/large SNR thresholds, Lloyd-Max reduction, high-rate loss).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from . import numerics
from .channel import (
    BPSK,
    DiscreteChannel,
    GaussianChannel,
    PamConstellation,
    QuantizerScheme,
    fisher_ratio,
    induce_discrete,
    mutual_information_continuous,
    mutual_information_discrete,
    output_density,
)
from .errors import CellCollapseError, ConvergenceError, DomainError

SMALL_SNR_LOSS_LIMIT = math.sqrt(3.0) * math.pi / 2.0


@dataclass
class MatchedOptResult:
    scheme: QuantizerScheme
    capacity: float
    relative_loss: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)


# ---------------------------------------------------------------------------
# the reassignment iteration


def _score_coefficients(ch: GaussianChannel, const: PamConstellation, log_post: np.ndarray) -> np.ndarray:
    """Coefficients c[i, z] of the score polynomial in t = exp(d g y).

    sum_x P(x) f(y|x) ln P(x|z) = (positive factor) * sum_i c[i, z] t**i.
    """
    g = ch.gain
    expo = np.log(const.prior) - 0.5 * (g * const.points) ** 2
    w = np.exp(expo - expo.max())
    return w[:, None] * log_post


def _pair_crossings(coef: np.ndarray) -> np.ndarray:
    """Positive real t where two score polynomials are equal."""
    k, n = coef.shape
    if k == 2:
        a, b = coef[0], coef[1]
        da = a[None, :] - a[:, None]
        db = b[:, None] - b[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = da / db
        iu = np.triu_indices(n, 1)
        t = t[iu]
        return t[np.isfinite(t) & (t > 0)]
    roots = []
    for z in range(n):
        for zz in range(z + 1, n):
            p = (coef[:, z] - coef[:, zz])[::-1]
            nz = np.flatnonzero(np.abs(p) > 0)
            if nz.size == 0:
                continue
            r = np.roots(p[nz[0]:])
            real = r[np.abs(r.imag) <= 1e-9 * np.maximum(1.0, np.abs(r.real))].real
            roots.extend(real[real > 0])
    return np.asarray(roots, dtype=float)


def _scores(coef: np.ndarray, y: np.ndarray, dg: float) -> np.ndarray:
    """Score polynomials evaluated at y, rescaled per point to avoid overflow."""
    k = coef.shape[0]
    u = dg * y
    # t**i / max(1, t)**(k-1) in log form
    expo = np.arange(k)[:, None] * u[None, :] - (k - 1) * np.maximum(u, 0.0)[None, :]
    return np.exp(expo).T @ coef


def reassign(ch: GaussianChannel, const: PamConstellation, scheme: QuantizerScheme, n_outputs: int | None = None) -> QuantizerScheme:
    """One pass of the argmax reassignment; ties go to the lower output index."""
    if ch.gain <= 0:
        raise DomainError("reassignment needs a positive channel gain")
    n = scheme.n_outputs if n_outputs is None else n_outputs
    dc = induce_discrete(ch, const, scheme)
    coef = _score_coefficients(ch, const, dc.log_posterior())
    dg = const.spacing * ch.gain
    t = _pair_crossings(coef)
    ys = np.unique(np.log(t) / dg) if t.size else np.empty(0)
    if ys.size:
        probe = np.concatenate(([ys[0] - 1.0], 0.5 * (ys[:-1] + ys[1:]), [ys[-1] + 1.0]))
    else:
        probe = np.array([0.0])
    lab = np.argmax(_scores(coef, probe, dg), axis=1)
    thresholds, labels = [], [int(lab[0])]
    for j in range(1, lab.size):
        if lab[j] != labels[-1]:
            thresholds.append(float(ys[j - 1]))
            labels.append(int(lab[j]))
    present = set(labels)
    for z in range(n):
        if z not in present:
            raise CellCollapseError(z)
    return QuantizerScheme(tuple(thresholds), tuple(labels), scheme.metrics)


def optimize_thresholds_iterative(
    ch: GaussianChannel,
    const: PamConstellation = BPSK,
    n: int = 3,
    init: QuantizerScheme | None = None,
    tol: float = numerics.ROOT_TOL,
    max_iter: int = 20000,
) -> MatchedOptResult:
    """Iterate the argmax reassignment until no threshold moves more than ``tol``.

    The default starting point is the small-SNR (Lloyd-Max) quantizer. When
    ``max_iter`` runs out the best scheme seen is returned with
    ``converged=False``.
    """
    if n < 2:
        raise DomainError("need at least two quantized outputs")
    if init is None:
        init = small_snr_scheme(n)
    if init.n_outputs != n:
        raise DomainError(f"initial scheme has {init.n_outputs} outputs, expected {n}")
    scheme = init
    cap = mutual_information_discrete(induce_discrete(ch, const, scheme))
    history = [cap]
    best, best_cap = scheme, cap
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = reassign(ch, const, scheme, n)
        cap = mutual_information_discrete(induce_discrete(ch, const, new))
        history.append(cap)
        if cap >= best_cap:
            best, best_cap = new, cap
        if len(new.thresholds) == len(scheme.thresholds) and new.labels == scheme.labels:
            move = max((abs(a - b) for a, b in zip(new.thresholds, scheme.thresholds)), default=0.0)
            if move < tol:
                scheme = new
                converged = True
                break
        scheme = new
    final = scheme if converged else best
    final_cap = mutual_information_discrete(induce_discrete(ch, const, final))
    cont = mutual_information_continuous(ch, const)
    rel = 1.0 - final_cap / cont if cont > 0 else relative_loss(ch, const, final)
    return MatchedOptResult(final, final_cap, min(max(rel, 0.0), 1.0), it, converged, history)


def interval_count_bound(k: int, n: int) -> int:
    """Most disjoint intervals any output can own in an optimal K-PAM, N-output quantizer."""
    if k < 2 or n < 2:
        raise DomainError("K and N must both be at least 2")
    return (n - 1) * ((k - 1) // 2) + 1


def intervals_per_output(scheme: QuantizerScheme) -> list[int]:
    counts = [0] * scheme.n_outputs
    for z in scheme.labels:
        counts[z] += 1
    return counts


# ---------------------------------------------------------------------------
# 2-PAM with three outputs


def b0_root(tol: float = 1e-14) -> float:
    """Leading small-SNR threshold for 2-PAM, three outputs.

    The first-order system ``alpha = 2 b g`` and ``alpha = -g Q'(b)/Q(b)``
    collapses to ``2 b Q(b) = phi(b)``.
    """
    return numerics.find_root(lambda b: 2.0 * b * numerics.q_function(b) - numerics.gaussian_pdf(b), (0.1, 2.0), tol)


B0 = b0_root()


def _three_level_condition(b: float, g: float) -> float:
    # cosh(bg) ln(1 - a^2) + sinh(bg) ln((1 + a)/(1 - a)), a the soft bit,
    # scaled by exp(-bg) to stay finite
    lq_minus = float(numerics.log_q_function(b - g))
    lq_plus = float(numerics.log_q_function(b + g))
    ls = np.logaddexp(lq_minus, lq_plus)
    l1m = math.log(2.0) + lq_plus - ls  # ln(1 - a)
    l1p = math.log(2.0) + lq_minus - ls  # ln(1 + a)
    e = math.exp(-2.0 * b * g)
    ch, sh = 0.5 * (1 + e), 0.5 * (1 - e)
    return ch * (l1m + l1p) + sh * (l1p - l1m)


def exact_threshold_2pam3(g: float, tol: float = 1e-13) -> float:
    """Solve the three-output optimality condition for the positive threshold."""
    if g <= 0:
        return B0
    lo, hi = 1e-12, 1.0
    while _three_level_condition(hi, g) < 0:
        hi *= 2.0
        if hi > 1e3:
            raise DomainError(f"no threshold bracket found at g={g}")
    return numerics.find_root(lambda b: _three_level_condition(b, g), (lo, hi), tol)


def large_snr_threshold_2pam3(g: float) -> float:
    """max(ln g / g, 0)."""
    if g <= 0:
        raise DomainError("g must be positive")
    return max(math.log(g) / g, 0.0)


def small_snr_threshold_2pam3(order: int, g: float) -> float:
    """b0 (order 1) or b0 (1 - g^2/6) clamped at zero (order 2)."""
    if g < 0:
        raise DomainError("g must be non-negative")
    if order == 1:
        return B0
    if order == 2:
        return max(B0 * (1.0 - g * g / 6.0), 0.0)
    raise DomainError("order must be 1 or 2")


# ---------------------------------------------------------------------------
# small-SNR (Lloyd-Max) quantizers


def _centroids(t: np.ndarray) -> np.ndarray:
    e = np.concatenate(([-np.inf], t, [np.inf]))
    mass = numerics.interval_mass(e[:-1], e[1:])
    return (numerics.gaussian_pdf(e[:-1]) - numerics.gaussian_pdf(e[1:])) / mass


def lloyd_residual(t: np.ndarray) -> np.ndarray:
    """Threshold minus the midpoint of its neighbouring centroids."""
    c = _centroids(t)
    return t - 0.5 * (c[:-1] + c[1:])


def _lloyd_max(n: int, tol: float, max_iter: int) -> np.ndarray:
    t = special.ndtri(np.arange(1, n) / n)
    trace = []
    for _ in range(max_iter):
        c = _centroids(t)
        new = 0.5 * (c[:-1] + c[1:])
        move = float(np.max(np.abs(new - t)))
        trace.append(move)
        t = new
        if move < 1e-7:
            break
    sol = optimize.root(lloyd_residual, t, method="hybr")
    if np.all(np.diff(sol.x) > 0) and np.max(np.abs(sol.fun)) < np.max(np.abs(lloyd_residual(t))):
        t = 0.5 * (sol.x - sol.x[::-1])  # re-impose symmetry
    if float(np.max(np.abs(lloyd_residual(t)))) > tol:
        raise ConvergenceError(f"Lloyd-Max iteration for N={n} did not converge", trace)
    return t


_LLOYD_CACHE: dict[int, np.ndarray] = {}


def small_snr_thresholds(n: int, tol: float = 1e-12, max_iter: int = 5000) -> list[float]:
    """Positive thresholds of the N-level MSE-optimal quantizer for a unit normal.

    These are the capacity-optimal thresholds as the SNR goes to zero;
    multiply by the noise standard deviation for unnormalised channels.
    """
    if not 2 <= n <= 64:
        raise DomainError("N must lie in 2..64")
    if n not in _LLOYD_CACHE:
        _LLOYD_CACHE[n] = _lloyd_max(n, tol, max_iter)
    t = _LLOYD_CACHE[n]
    return [float(x) for x in t if x > 1e-12]


def small_snr_scheme(n: int, sigma: float = 1.0) -> QuantizerScheme:
    pos = [sigma * x for x in small_snr_thresholds(n)]
    return QuantizerScheme.symmetric(pos, include_zero=(n % 2 == 0))


# ---------------------------------------------------------------------------
# loss measures


def relative_loss(ch: GaussianChannel, const: PamConstellation, scheme: QuantizerScheme) -> float:
    """R = 1 - I(X;Z)/I(X;Y); at zero gain the Fisher-information limit."""
    if ch.gain == 0:
        return 1.0 - fisher_ratio(scheme)
    iz = mutual_information_discrete(induce_discrete(ch, const, scheme))
    iy = mutual_information_continuous(ch, const)
    return 1.0 - iz / iy


def high_rate_loss(ch: GaussianChannel, const: PamConstellation, n: int) -> float:
    """Minimum high-rate capacity loss (nats) for N cells.

    (g^2 / 24 N^2) * (integral of (f_Y(y) Var(X|y))^(1/3) dy)^3
    """
    if n < 1:
        raise DomainError("N must be positive")
    g = ch.gain
    if g == 0:
        return 0.0
    x = const.points

    def integrand(y):
        fy = output_density(ch, const, y)
        logw = np.log(const.prior)[:, None] - 0.5 * (y[None, :] - g * x[:, None]) ** 2
        logw -= logw.max(axis=0)
        post = np.exp(logw)
        post /= post.sum(axis=0)
        m = (post * x[:, None]).sum(axis=0)
        var = np.maximum((post * x[:, None] ** 2).sum(axis=0) - m * m, 0.0)
        return np.cbrt(fy * var)

    span = g * np.max(np.abs(x)) + 30.0
    total = numerics.integrate(integrand, -span, span, breaks=list(g * x), tol=1e-14)
    return g * g / (24.0 * n * n) * total**3


def high_rate_relative_loss(ch: GaussianChannel, const: PamConstellation, n: int) -> float:
    if ch.gain == 0:
        return SMALL_SNR_LOSS_LIMIT / n**2
    return high_rate_loss(ch, const, n) / mutual_information_continuous(ch, const)


def matched_sweep_row(ch: GaussianChannel, const: PamConstellation, scheme: QuantizerScheme) -> dict:
    dc: DiscreteChannel = induce_discrete(ch, const, scheme)
    cap = mutual_information_discrete(dc)
    return {
        "snr_db": ch.snr_db,
        "thresholds": scheme.positive_thresholds() if scheme.is_symmetric() else list(scheme.thresholds),
        "capacity_nats": cap,
        "relative_loss": relative_loss(ch, const, scheme),
    }
