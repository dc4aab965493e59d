"""Shared numerical kernels: Gaussian tails, quadrature, 1-D search, log-domain sums.

Everything here is a pure function of its inputs; no module state is mutated.
"""

from __future__ import annotations

import contextlib
import contextvars
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import optimize, special

from .errors import BracketError, DomainError, EvaluationError

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)

ROOT_TOL = 1e-10
MAX_TOL = 1e-8

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def q_function(x):
    """Gaussian tail probability Q(x) = P(W > x) for a unit normal W."""
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / SQRT2)


def log_q_function(x):
    """ln Q(x), accurate far into both tails."""
    return special.log_ndtr(-np.asarray(x, dtype=float))


def gaussian_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / SQRT2PI


def interval_mass(lo, hi):
    """P(lo < W < hi) for a unit normal W, without cancellation in the tails."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    upper = q_function(lo) - q_function(hi)
    lower = special.ndtr(hi) - special.ndtr(lo)
    return np.where(lo > 0, upper, lower)


def log_interval_mass(lo, hi):
    """ln P(lo < W < hi), finite whenever lo < hi.

    Works in log space so that cells many sigmas away from the mean keep
    a usable (if tiny) probability.
    """
    lo, hi = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    out = np.empty(lo.shape)
    right = lo > 0
    left = hi < 0
    mid = ~(right | left)
    if right.any():
        a = special.log_ndtr(-lo[right])
        b = special.log_ndtr(-hi[right])
        out[right] = a + _log1mexp(b - a)
    if left.any():
        a = special.log_ndtr(hi[left])
        b = special.log_ndtr(lo[left])
        out[left] = a + _log1mexp(b - a)
    if mid.any():
        out[mid] = np.log(special.ndtr(hi[mid]) - special.ndtr(lo[mid]))
    return out


def _log1mexp(d):
    """ln(1 - e^d) for d <= 0."""
    d = np.asarray(d, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(d > -math.log(2.0), np.log(-np.expm1(d)), np.log1p(-np.exp(d)))


def log_sum_exp(values: Iterable[float]) -> float:
    """ln(sum(exp(v))) with the maximum factored out."""
    v = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
    if v.size == 0:
        raise DomainError("log_sum_exp of an empty sequence")
    m = float(np.max(v))
    if v.size == 1 or not math.isfinite(m):
        return m
    return m + math.log(float(np.sum(np.exp(v - m))))


def softplus(x):
    """ln(1 + e^x), overflow-free."""
    return np.logaddexp(0.0, x)


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and positive weights for a fixed integration rule.

    ``kind`` is ``"gauss-hermite"`` when the weights already carry the unit
    Gaussian density (so ``rule.expect(f)`` is E[f(W)]), or
    ``"adaptive-panel"`` for a plain Lebesgue rule assembled from panels.
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: str

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape:
            raise DomainError("nodes and weights differ in length")
        if self.nodes.size < 16:
            raise DomainError("a quadrature rule needs at least 16 nodes")
        if np.any(self.weights <= 0):
            raise DomainError("quadrature weights must be strictly positive")
        self.nodes.flags.writeable = False
        self.weights.flags.writeable = False

    def apply(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.dot(self.weights, f(self.nodes)))

    def expect(self, f, mean: float = 0.0, std: float = 1.0) -> float:
        """E[f(mean + std*W)]; only meaningful for Gauss-Hermite rules."""
        if self.kind != "gauss-hermite":
            raise DomainError("expect() needs a Gaussian-weighted rule")
        return float(np.dot(self.weights, f(mean + std * self.nodes)))


def gauss_hermite(n: int = 64) -> QuadratureRule:
    """Rule integrating against the unit normal density, exact to degree 2n-1."""
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return QuadratureRule(np.asarray(x, float), np.asarray(w, float) / SQRT2PI, "gauss-hermite")


_PANEL_ORDER = contextvars.ContextVar("panel_order", default=20)


@contextlib.contextmanager
def quadrature_order(order: int):
    """Temporarily change the default Gauss-Legendre panel order of :func:`integrate`."""
    if order < 8:
        raise DomainError("panel order must be at least 8")
    token = _PANEL_ORDER.set(int(order))
    try:
        yield
    finally:
        _PANEL_ORDER.reset(token)


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _legendre(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def panel_rule(edges: Sequence[float], order: int = 16) -> QuadratureRule:
    """Composite Gauss-Legendre rule over consecutive ``edges``."""
    e = np.asarray(edges, dtype=float)
    if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
        raise DomainError("panel edges must be strictly increasing")
    t, w = _legendre(order)
    half = 0.5 * np.diff(e)
    mid = 0.5 * (e[1:] + e[:-1])
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return QuadratureRule(nodes, weights, "adaptive-panel")


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    breaks: Sequence[float] = (),
    tol: float = 1e-13,
    order: int | None = None,
    max_depth: int = 40,
) -> float:
    """Adaptive Gauss-Legendre integral of a vectorised ``f`` over [a, b].

    The range is first split at ``breaks`` (e.g. quantizer thresholds) so
    that each panel sees a smooth integrand; panels are then bisected until
    the one-panel and two-half-panel estimates agree.
    """
    if not (math.isfinite(a) and math.isfinite(b)) or b <= a:
        raise DomainError("integrate needs finite a < b")
    inner = sorted(float(x) for x in breaks if a < x < b)
    edges = [a, *inner, b]
    t, w = _legendre(order or _PANEL_ORDER.get())

    def panel(lo, hi):
        h = 0.5 * (hi - lo)
        return h * float(np.dot(w, f(0.5 * (hi + lo) + h * t)))

    total = 0.0
    stack = [(lo, hi, panel(lo, hi), 0) for lo, hi in zip(edges[:-1], edges[1:])]
    while stack:
        lo, hi, whole, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        left, right = panel(lo, mid), panel(mid, hi)
        if abs(left + right - whole) <= tol * max(1.0, (hi - lo)) or depth >= max_depth:
            total += left + right
        else:
            stack.append((lo, mid, left, depth + 1))
            stack.append((mid, hi, right, depth + 1))
    if not math.isfinite(total):
        raise EvaluationError(float("nan"), total)
    return total


# ---------------------------------------------------------------------------
# one-dimensional search


def maximize_scalar(
    f: Callable[[float], float], bracket: tuple[float, float], tol: float = MAX_TOL
) -> tuple[float, float]:
    """Golden-section search for the maximum of a unimodal ``f`` on ``bracket``.

    Returns ``(argmax, max)``. Raises :class:`EvaluationError` if ``f``
    produces a non-finite value.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    a, b = float(bracket[0]), float(bracket[1])
    if not a < b:
        raise BracketError(f"empty bracket [{a}, {b}]")

    def ev(x):
        v = float(f(x))
        if not math.isfinite(v):
            raise EvaluationError(x, v)
        return v

    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = ev(c), ev(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = ev(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = ev(d)
    if fc >= fd:
        return c, fc
    return d, fd


def find_root(f: Callable[[float], float], bracket: tuple[float, float], tol: float = ROOT_TOL) -> float:
    """Brent root of ``f`` inside a sign-changing bracket."""
    lo, hi = float(bracket[0]), float(bracket[1])
    flo, fhi = float(f(lo)), float(f(hi))
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if not (math.isfinite(flo) and math.isfinite(fhi)) or flo * fhi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: f={flo!r}, {fhi!r}")
    return float(optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))
