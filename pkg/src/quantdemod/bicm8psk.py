"""8PSK bit-interleaved demodulation: exact, max-log, GMI and GCR bit metrics.

Bit metrics are arrays whose last axis holds ``(q1, q2, q3)``; ``q_i`` is
credited to a candidate symbol when its i-th bit is 0, so a positive value
favours bit 0. The received sample is taken relative to unit-variance
noise per real dimension, so the log-likelihood of point ``x`` is
``g * (x . y)`` up to terms common to all points.

The fast decomposition follows the eight-region structure of the Gray
labelling: every region has a fixed nearest point and fixed competitors for
each bit, so the three max-log LLRs are three fixed linear functionals of
``y``. Two complex multiplications give the four dot products with vectors
parallel to the region boundaries (whose signs locate the region), and one
more complex multiplication supplies the remaining dot product.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

#: bits (b1, b2, b3) of the point exp(i k pi/4), k = 0..7
LABELS = np.array(
    [
        [1, 1, 1],
        [1, 1, 0],
        [1, 0, 0],
        [1, 0, 1],
        [0, 0, 1],
        [0, 0, 0],
        [0, 1, 0],
        [0, 1, 1],
    ],
    dtype=np.int8,
)
LABELS.flags.writeable = False

POINTS = np.exp(1j * np.pi * np.arange(8) / 4)
POINTS.flags.writeable = False

_ZERO_MASK = LABELS == 0  # (8, 3): point k has bit i equal to 0

GCR_MODES = ("signed", "magnitude")


@dataclass(frozen=True, eq=False)
class Psk8Constellation:
    """Unit-energy 8PSK with its Gray bit labelling."""

    points: np.ndarray = POINTS
    labels: np.ndarray = LABELS

    def __post_init__(self):
        if self.points.shape != (8,) or self.labels.shape != (8, 3):
            raise DomainError("8PSK needs 8 points with 3-bit labels")
        if not np.allclose(np.abs(self.points), 1.0):
            raise DomainError("8PSK points must have unit modulus")

    def is_gray(self) -> bool:
        diff = np.abs(self.labels - np.roll(self.labels, -1, axis=0)).sum(axis=1)
        return bool(np.all(diff == 1))

    def modulate(self, bits) -> np.ndarray:
        """Map an (..., 3) bit array to complex symbols."""
        b = np.asarray(bits, dtype=np.int64)
        return self.points[_LABEL_TO_POINT[b[..., 0] * 4 + b[..., 1] * 2 + b[..., 2]]]

    def bits_of(self, k) -> np.ndarray:
        return self.labels[np.asarray(k) % 8]


_LABEL_TO_POINT = np.empty(8, dtype=np.int64)
_LABEL_TO_POINT[LABELS[:, 0] * 4 + LABELS[:, 1] * 2 + LABELS[:, 2]] = np.arange(8)

PSK8 = Psk8Constellation()


def _dots(y, g) -> np.ndarray:
    """g * (x_k . y) for all eight points, shape (..., 8)."""
    y = np.asarray(y, dtype=complex)
    return float(g) * np.real(y[..., None] * np.conj(POINTS))


def exact_llr(y, g: float = 1.0) -> np.ndarray:
    """Exact per-bit LLRs ``ln sum_{b_i=0} e^{g x.y} - ln sum_{b_i=1} e^{g x.y}``."""
    d = _dots(y, g)
    out = np.empty(d.shape[:-1] + (3,))
    for i in range(3):
        z = _ZERO_MASK[:, i]
        out[..., i] = special.logsumexp(d[..., z], axis=-1) - special.logsumexp(d[..., ~z], axis=-1)
    return out


def maxlog_llr(y, g: float = 1.0) -> np.ndarray:
    """Max-log LLRs ``max_{b_i=0} g x.y - max_{b_i=1} g x.y``."""
    d = _dots(y, g)
    out = np.empty(d.shape[:-1] + (3,))
    for i in range(3):
        z = _ZERO_MASK[:, i]
        out[..., i] = d[..., z].max(axis=-1) - d[..., ~z].max(axis=-1)
    return out


def gmi_bit_metrics(y, g: float = 1.0, scale: float = 1.0, mode: str = "exact") -> np.ndarray:
    """GMI-maximising bit metrics: the marginal bit LLRs times ``scale``."""
    if not scale > 0:
        raise DomainError("the metric scale must be positive")
    if mode == "exact":
        llr = exact_llr(y, g)
    elif mode == "maxlog":
        llr = maxlog_llr(y, g)
    else:
        raise DomainError(f"unknown LLR mode {mode!r}")
    return scale * llr


def gcr_bit_metrics(llr, mode: str = "signed", scale: float = 1.0) -> np.ndarray:
    """Cut-off-rate-optimal bit metrics from max-log LLRs.

    The first two metrics take a correction of half the third LLR's
    magnitude, pushed towards zero, on whichever of them wins the
    comparison of LLR1 against LLR2; the third metric is LLR3 unchanged.
    ``mode="signed"`` compares the LLRs as signed numbers,
    ``mode="magnitude"`` compares their absolute values. Ties are resolved
    as if LLR1 > LLR2.
    """
    if mode not in GCR_MODES:
        raise DomainError(f"GCR mode must be one of {GCR_MODES}")
    if not scale > 0:
        raise DomainError("the metric scale must be positive")
    llr = np.asarray(llr, dtype=float)
    l1, l2, l3 = llr[..., 0], llr[..., 1], llr[..., 2]
    half = 0.5 * np.abs(l3)
    first_small = (l1 < l2) if mode == "signed" else (np.abs(l1) < np.abs(l2))
    q1 = np.where(first_small, l1, l1 - half * np.sign(l1))
    q2 = np.where(first_small, l2 - half * np.sign(l2), l2)
    return scale * np.stack([q1, q2, l3], axis=-1)


# ---------------------------------------------------------------------------
# fast eight-region decomposition


class MultiplicationCounter:
    """Tallies complex multiplications per demodulated symbol."""

    def __init__(self):
        self.multiplications = 0
        self.symbols = 0

    def add(self, n: int) -> None:
        self.multiplications += int(n)

    def per_symbol(self) -> float:
        return self.multiplications / self.symbols if self.symbols else 0.0


_U = np.exp(1j * np.pi * (2 * np.arange(4) + 1) / 8)  # boundary-parallel directions
_ROT_A = np.conj(_U[0])  # y * conj(u0): Re -> y.u0, Im -> y.u2
_ROT_B = np.conj(_U[1])  # y * conj(u1): Re -> y.u1, Im -> y.u3


def _build_region_tables():
    """Per region: how each bit's LLR is formed from the available dot products.

    Returns the sign-code -> region lookup, a (8, 3, 4) coefficient array on
    the step-1 dot products, a (8, 3) coefficient on the step-2 dot product
    and the step-2 direction exponent per region.
    """
    code_of = {}
    for k in range(8):
        s = np.cos(k * np.pi / 4 - (2 * np.arange(4) + 1) * np.pi / 8) > 0
        code_of[int(s @ (1 << np.arange(4)))] = k
    lookup = np.zeros(16, dtype=np.int64)
    for code in range(16):
        if code in code_of:
            lookup[code] = code_of[code]
        else:
            # unreachable except by rounding at |y| ~ 0, where every LLR vanishes
            near = min(code_of, key=lambda c: (bin(c ^ code).count("1"), c))
            lookup[code] = code_of[near]
    coef1 = np.zeros((8, 3, 4))
    coef2 = np.zeros((8, 3))
    step2_dir = np.zeros(8, dtype=np.int64)
    for k in range(8):
        for i in range(3):
            own = LABELS[k, i]
            opp = [j for j in range(8) if LABELS[j, i] != own]
            o = min(opp, key=lambda j: min((j - k) % 8, (k - j) % 8))
            sgn = 1.0 if own == 0 else -1.0
            v = sgn * (POINTS[k] - POINTS[o])
            dist = min((o - k) % 8, (k - o) % 8)
            if dist == 1:
                c = np.real(v * np.conj(_U))
                j = int(np.argmax(np.abs(c)))
                coef1[k, i, j] = c[j]
            elif dist == 2:
                m = int(round(np.angle(v) / (np.pi / 4))) % 8
                step2_dir[k] = m
                coef2[k, i] = abs(v)
            else:
                raise AssertionError("Gray 8PSK competitors are at most two steps away")
    return lookup, coef1, coef2, step2_dir


_REGION_LOOKUP, _COEF1, _COEF2, _STEP2_DIR = _build_region_tables()
_STEP2_ROT = np.conj(np.exp(1j * np.pi * np.arange(8) / 4))


def _cmul(a, b, counter: MultiplicationCounter | None):
    out = a * b
    if counter is not None:
        counter.add(np.size(out))
    return out


def region_of(dots: np.ndarray) -> np.ndarray:
    """Region index (nearest point) from the four boundary-parallel dot products."""
    bits = (np.asarray(dots) >= 0).astype(np.int64)
    return _REGION_LOOKUP[bits @ (1 << np.arange(4))]


def fast_llr_decompose(y, g: float = 1.0, counter: MultiplicationCounter | None = None) -> np.ndarray:
    """Max-log LLRs with three complex multiplications per symbol."""
    y = np.asarray(y, dtype=complex)
    gy = float(g) * y
    p = _cmul(gy, _ROT_A, counter)  # step 1
    r = _cmul(gy, _ROT_B, counter)
    dots = np.stack([p.real, r.real, p.imag, r.imag], axis=-1)
    k = region_of(dots)
    s = _cmul(gy, _STEP2_ROT[_STEP2_DIR[k]], counter).real  # step 2
    if counter is not None:
        counter.symbols += int(np.size(y))
    out = np.einsum("...ij,...j->...i", _COEF1[k], dots)
    return out + _COEF2[k] * s[..., None]


# ---------------------------------------------------------------------------
# symmetries


def label_automorphism(k: int, reflect: bool = False) -> tuple[np.ndarray, np.ndarray] | None:
    """Bit permutation and flips induced by the point map j -> (+/-)j + k.

    Returns ``(perm, flip)`` such that the label of the image of point j is
    ``label(j)[perm] ^ flip``, or ``None`` when the map is not affine on the
    labels. Demodulating the image sample then gives
    ``llr_image[..., i] = (-1)**flip[i] * llr[..., perm[i]]``.
    """
    src = np.arange(8)
    dst = ((-src if reflect else src) + k) % 8
    for perm in itertools.permutations(range(3)):
        p = np.array(perm)
        flip = LABELS[dst[0]] ^ LABELS[src[0]][p]
        if np.array_equal(LABELS[dst], LABELS[src][:, p] ^ flip):
            return p, flip.astype(np.int8)
    return None


def transform_sample(y, k: int, reflect: bool = False):
    """Apply the geometric map matching :func:`label_automorphism` to a sample."""
    y = np.asarray(y, dtype=complex)
    return (np.conj(y) if reflect else y) * np.exp(1j * k * np.pi / 4)


def apply_automorphism(metrics, perm, flip) -> np.ndarray:
    m = np.asarray(metrics, dtype=float)
    return m[..., perm] * np.where(np.asarray(flip) == 1, -1.0, 1.0)


def uncoded_ser_approx(snr: float) -> float:
    """Nearest-neighbour approximation 2 Q(sqrt(2 snr) sin(pi/8)) of the 8PSK SER."""
    return float(special.erfc(math.sqrt(2.0 * snr) * math.sin(math.pi / 8) / math.sqrt(2.0)))
