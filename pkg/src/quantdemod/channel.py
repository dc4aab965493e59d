"""Constellations, the unit-noise Gaussian channel and quantized discrete channels.

The channel is ``Y = g X + W`` with ``W`` a unit normal and the input
normalised to zero mean and unit variance, so the SNR is simply ``g**2``.
All information quantities are in nats.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import numerics
from .errors import DomainError

_Y_SPAN = 38.0  # unit-normal density underflows beyond this


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class PamConstellation:
    """Equally spaced real constellation with a prior, normalised to unit power."""

    points: np.ndarray
    prior: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points)
        pri = _frozen(self.prior)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "prior", pri)
        if pts.ndim != 1 or pts.size < 2 or pts.shape != pri.shape:
            raise DomainError("need at least two points and a matching prior")
        if np.any(pri < 0) or abs(pri.sum() - 1.0) > 1e-12:
            raise DomainError("prior must be a probability vector")
        d = np.diff(pts)
        if np.any(d <= 0) or np.ptp(d) > 1e-12 * max(1.0, abs(d[0])):
            raise DomainError("PAM points must be strictly increasing and equally spaced")
        mean = float(pri @ pts)
        var = float(pri @ (pts - mean) ** 2)
        if abs(mean) > 1e-12 or abs(var - 1.0) > 1e-12:
            raise DomainError(f"constellation must have zero mean and unit variance (got {mean}, {var})")

    @classmethod
    def uniform(cls, k: int) -> "PamConstellation":
        """K-PAM with uniform prior; 2-PAM is {-1, +1}."""
        if k < 2:
            raise DomainError("K must be at least 2")
        d = math.sqrt(12.0 / (k * k - 1))
        pts = (np.arange(k) - (k - 1) / 2.0) * d
        return cls(pts, np.full(k, 1.0 / k))

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def spacing(self) -> float:
        return float(self.points[1] - self.points[0])

    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.points, -self.points[::-1]) and np.allclose(self.prior, self.prior[::-1]))


BPSK = PamConstellation.uniform(2)


@dataclass(frozen=True)
class GaussianChannel:
    """Amplitude gain ``g`` over unit-variance additive Gaussian noise."""

    gain: float

    def __post_init__(self):
        g = float(self.gain)
        if not math.isfinite(g) or g < 0:
            raise DomainError("channel gain must be finite and non-negative")
        object.__setattr__(self, "gain", g)

    @classmethod
    def from_snr_db(cls, snr_db: float) -> "GaussianChannel":
        return cls(10.0 ** (snr_db / 20.0))

    @property
    def snr(self) -> float:
        return self.gain**2

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.gain**2) if self.gain > 0 else -math.inf


@dataclass(frozen=True)
class QuantizerScheme:
    """Ordered thresholds on the real output axis plus per-interval output labels.

    ``labels[j]`` is the quantized output of the j-th interval (there are
    ``len(thresholds) + 1`` intervals, the outer two half-infinite). When
    ``labels`` is omitted each interval is its own output. ``metrics`` is an
    optional per-output decoding metric used by mismatched decoding.
    """

    thresholds: tuple[float, ...]
    labels: tuple[int, ...] | None = None
    metrics: tuple[float, ...] | None = None

    def __post_init__(self):
        b = tuple(float(x) for x in self.thresholds)
        if any(not math.isfinite(x) for x in b):
            raise DomainError("thresholds must be finite; outer intervals are implicit")
        if any(hi <= lo for lo, hi in zip(b, b[1:])):
            raise DomainError("thresholds must be strictly increasing")
        object.__setattr__(self, "thresholds", b)
        labels = tuple(range(len(b) + 1)) if self.labels is None else tuple(int(z) for z in self.labels)
        if len(labels) != len(b) + 1:
            raise DomainError("need one label per interval")
        if sorted(set(labels)) != list(range(max(labels) + 1)):
            raise DomainError("labels must cover 0..N-1")
        object.__setattr__(self, "labels", labels)
        if self.metrics is not None:
            m = tuple(float(q) for q in self.metrics)
            if len(m) != self.n_outputs:
                raise DomainError("need one metric per quantized output")
            object.__setattr__(self, "metrics", m)

    @classmethod
    def symmetric(cls, positive: Sequence[float], include_zero: bool = False, metrics=None) -> "QuantizerScheme":
        """Scheme with thresholds ``-b[::-1] + [0] + b``."""
        pos = sorted(float(x) for x in positive)
        mid = [0.0] if include_zero else []
        return cls(tuple([-x for x in reversed(pos)] + mid + pos), metrics=metrics)

    @property
    def n_outputs(self) -> int:
        return max(self.labels) + 1

    @property
    def n_intervals(self) -> int:
        return len(self.thresholds) + 1

    def edges(self) -> np.ndarray:
        return np.concatenate(([-np.inf], self.thresholds, [np.inf]))

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        """Thresholds mirror about zero to within ``tol`` (relative to their size)."""
        b = np.asarray(self.thresholds)
        scale = max(1.0, float(np.max(np.abs(b)))) if b.size else 1.0
        return bool(np.all(np.abs(b + b[::-1]) <= tol * scale))

    def positive_thresholds(self) -> list[float]:
        return [x for x in self.thresholds if x > 0]

    def quantize(self, y) -> np.ndarray:
        """Map channel outputs to quantized output labels."""
        idx = np.searchsorted(self.thresholds, np.asarray(y, dtype=float), side="right")
        return np.asarray(self.labels)[idx]

    def to_json(self) -> str:
        return json.dumps({"thresholds": list(self.thresholds), "metrics": None if self.metrics is None else list(self.metrics)})

    @classmethod
    def from_json(cls, text: str) -> "QuantizerScheme":
        d = json.loads(text)
        return cls(tuple(d["thresholds"]), labels=d.get("labels"), metrics=d.get("metrics"))


@dataclass(frozen=True, eq=False)
class DiscreteChannel:
    """Transition matrix P(Z=z|X=x): rows are inputs, columns quantized outputs."""

    transition: np.ndarray
    prior: np.ndarray
    log_transition: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        t = _frozen(self.transition)
        p = _frozen(self.prior)
        object.__setattr__(self, "transition", t)
        object.__setattr__(self, "prior", p)
        if t.ndim != 2 or t.shape[0] != p.size:
            raise DomainError("transition rows must match the prior")
        if np.any(t < 0) or np.any(np.abs(t.sum(axis=1) - 1.0) > 1e-10):
            raise DomainError("transition rows must be probability vectors")
        if self.log_transition is None:
            with np.errstate(divide="ignore"):
                object.__setattr__(self, "log_transition", _frozen(np.log(t)))

    @property
    def joint(self) -> np.ndarray:
        return self.prior[:, None] * self.transition

    @property
    def output_probs(self) -> np.ndarray:
        return self.prior @ self.transition

    def log_posterior(self) -> np.ndarray:
        """ln P(x|z) with the same shape as ``transition``."""
        with np.errstate(divide="ignore"):
            lj = np.log(self.prior)[:, None] + self.log_transition
        m = lj.max(axis=0)
        lz = m + np.log(np.exp(lj - m).sum(axis=0))
        return lj - lz


def transition_density(ch: GaussianChannel, x, y):
    """f(y|x) = phi(y - g x)."""
    return numerics.gaussian_pdf(np.asarray(y, float) - ch.gain * np.asarray(x, float))


def induce_discrete(ch: GaussianChannel, const: PamConstellation, quant: QuantizerScheme) -> DiscreteChannel:
    """Discrete channel seen after quantizing the Gaussian output with ``quant``."""
    e = quant.edges()
    mean = ch.gain * const.points[:, None]
    mass = numerics.interval_mass(e[None, :-1] - mean, e[None, 1:] - mean)
    logm = numerics.log_interval_mass(e[None, :-1] - mean, e[None, 1:] - mean)
    n = quant.n_outputs
    labels = np.asarray(quant.labels)
    if quant.n_intervals == n and np.array_equal(labels, np.arange(n)):
        t, lt = mass, logm
    else:
        t = np.zeros((const.size, n))
        np.add.at(t, (slice(None), labels), mass)
        lt = np.full((const.size, n), -np.inf)
        for z in range(n):
            cols = logm[:, labels == z]
            mx = cols.max(axis=1, keepdims=True)
            lt[:, z] = (mx + np.log(np.exp(cols - mx).sum(axis=1, keepdims=True)))[:, 0]
    s = t.sum(axis=1, keepdims=True)
    return DiscreteChannel(t / s, const.prior, lt - np.log(s))


def mutual_information_discrete(dc: DiscreteChannel) -> float:
    """I(X;Z) in nats; 0 ln 0 is taken as 0."""
    pz = dc.output_probs
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dc.transition > 0, dc.transition / pz[None, :], 1.0)
        terms = np.where(dc.transition > 0, dc.joint * np.log(ratio), 0.0)
    return max(float(terms.sum()), 0.0)


def _continuous_integrand(ch: GaussianChannel, const: PamConstellation):
    g = ch.gain
    x = const.points
    logp = np.log(const.prior)

    def h(w):
        # -sum_x P(x) ln( f_Y(gx + w) / phi(w) ), vectorised over w
        w = np.asarray(w, float)
        delta = x[:, None] - x[None, :]  # x - x'
        expo = logp[None, :, None] - g * delta[:, :, None] * w[None, None, :] - 0.5 * (g * delta[:, :, None]) ** 2
        m = expo.max(axis=1)
        lse = m + np.log(np.exp(expo - m[:, None, :]).sum(axis=1))
        return -(const.prior[:, None] * lse).sum(axis=0) * numerics.gaussian_pdf(w)

    return h


def mutual_information_continuous(ch: GaussianChannel, const: PamConstellation, tol: float = 1e-14) -> float:
    """Unquantized I(X;Y) in nats by adaptive quadrature over the noise."""
    if ch.gain == 0:
        return 0.0
    x = const.points
    g = ch.gain
    # kinks of the log-sum-exp sit where two shifted terms cross
    kinks = sorted({-g * (2 * xi - a - b) / 2 for xi in x for a in x for b in x if a != b})
    val = numerics.integrate(_continuous_integrand(ch, const), -_Y_SPAN, _Y_SPAN, breaks=kinks, tol=tol)
    return max(val, 0.0)


def output_density(ch: GaussianChannel, const: PamConstellation, y):
    y = np.asarray(y, float)
    return (const.prior[:, None] * numerics.gaussian_pdf(y[None, :] - ch.gain * const.points[:, None])).sum(axis=0)


def conditional_output_means(scheme: QuantizerScheme) -> tuple[np.ndarray, np.ndarray]:
    """P(Z=z) and E[W | Z=z] for a unit normal W (the zero-gain output)."""
    e = scheme.edges()
    mass = numerics.interval_mass(e[:-1], e[1:])
    first = numerics.gaussian_pdf(e[:-1]) - numerics.gaussian_pdf(e[1:])
    n = scheme.n_outputs
    labels = np.asarray(scheme.labels)
    pz = np.bincount(labels, weights=mass, minlength=n)
    m1 = np.bincount(labels, weights=first, minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(pz > 0, m1 / pz, 0.0)
    return pz, mean


def fisher_ratio(scheme: QuantizerScheme) -> float:
    """Quantized over unquantized Fisher information at zero gain.

    For the unit-noise Gaussian channel the score at x=0 is ``g*y``, so the
    ratio reduces to sum_z P(z) E[Y|z]^2 under Y ~ N(0, 1).
    """
    pz, mean = conditional_output_means(scheme)
    return float(np.sum(pz * mean**2))
