"""Monte-Carlo 8PSK BICM link with a terminated convolutional code and Viterbi decoding.

Chain per frame: random information bits, rate-1/2 feed-forward
convolutional encoder (terminated with K-1 zero bits), zero padding to a
multiple of 3, block interleaver, Gray 8PSK mapper, complex AWGN, a
pluggable bit demapper, deinterleaver and a soft Viterbi decoder that
maximises ``sum_j q_j * 1(c_j = 0)``.

Randomness uses Philox-4x64 with key ``(seed, stage)`` and counter
``(0, 0, 0, frame)``; stage 0 draws the information bits and stage 1 the
noise. Each frame is therefore reproducible on its own, independent of
batching or scheduling.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bicm8psk
from .errors import ConfigError

DEMAPPERS = ("exact", "maxlog", "gcr", "fast", "hard")
STAGE_BITS = 0
STAGE_NOISE = 1
_Z95 = 1.959963984540054
_U64 = 1 << 64


def gf2_gcd(a: int, b: int) -> int:
    """Greatest common divisor of two GF(2) polynomials given as bit masks."""
    while b:
        while a and a.bit_length() >= b.bit_length():
            a ^= b << (a.bit_length() - b.bit_length())
        a, b = b, a
    return a


@dataclass(frozen=True)
class ConvolutionalCode:
    """Rate-1/n feed-forward code; the generator MSB taps the current input."""

    generators: tuple[int, ...] = (0o133, 0o171)
    constraint_length: int = 7

    def __post_init__(self):
        k = int(self.constraint_length)
        gens = tuple(int(g) for g in self.generators)
        if k < 2 or len(gens) < 2:
            raise ConfigError("need constraint length >= 2 and at least two generators")
        if any(g <= 0 or g >= 1 << k for g in gens):
            raise ConfigError(f"generators {[oct(g) for g in gens]} do not fit constraint length {k}")
        if max(g.bit_length() for g in gens) != k:
            raise ConfigError("no generator reaches the stated constraint length")
        if not any(g & 1 for g in gens):
            raise ConfigError("no generator taps the oldest register bit")
        common = gens[0]
        for g in gens[1:]:
            common = gf2_gcd(common, g)
        if common != 1:
            raise ConfigError("generators share a common factor (catastrophic code)")
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "constraint_length", k)

    @property
    def memory(self) -> int:
        return self.constraint_length - 1

    @property
    def n_states(self) -> int:
        return 1 << self.memory

    @property
    def rate_inverse(self) -> int:
        return len(self.generators)

    def taps(self, g: int) -> list[int]:
        """Delays d (0 = current input) tapped by generator ``g``."""
        k = self.constraint_length
        return [d for d in range(k) if (g >> (k - 1 - d)) & 1]

    def encode(self, info: np.ndarray) -> np.ndarray:
        """Encode (B, L) bits plus a zero tail; returns (B, n*(L+K-1)) interleaved outputs."""
        info = np.asarray(info, dtype=np.uint8)
        b, length = info.shape
        u = np.concatenate([info, np.zeros((b, self.memory), np.uint8)], axis=1)
        n = length + self.memory
        out = np.zeros((b, n, self.rate_inverse), np.uint8)
        for j, g in enumerate(self.generators):
            for d in self.taps(g):
                out[:, d:, j] ^= u[:, : n - d]
        return out.reshape(b, -1)

    def trellis(self) -> tuple[np.ndarray, np.ndarray]:
        """Predecessor states (S, 2) and branch outputs (S, 2, n) into each state.

        The state is the last ``memory`` inputs with the newest at the most
        significant bit; entering state ``s`` means the input was ``s >> (m-1)``.
        """
        m = self.memory
        s = np.arange(self.n_states)
        pred = np.stack([((s << 1) & (self.n_states - 1)) | b for b in (0, 1)], axis=1)
        u = s >> (m - 1)
        reg = (u[:, None] << m) | pred  # (S, 2): full K-bit register
        outs = np.stack(
            [np.array([bin(int(r) & g).count("1") & 1 for r in reg.ravel()]).reshape(reg.shape) for g in self.generators],
            axis=-1,
        )
        return pred, outs.astype(np.uint8)


def viterbi_decode(code: ConvolutionalCode, metrics: np.ndarray, n_info: int) -> np.ndarray:
    """Maximise sum q_j 1(c_j=0) over terminated code paths; metrics shape (B, n*(L+m))."""
    q = np.asarray(metrics, dtype=float)
    b = q.shape[0]
    n = code.rate_inverse
    steps = n_info + code.memory
    if q.shape[1] != n * steps:
        raise ConfigError("metric length does not match the trellis")
    q = q.reshape(b, steps, n)
    pred, outs = code.trellis()
    zero = 1.0 - outs.astype(float)  # (S, 2, n): 1 where the branch emits a 0
    ns = code.n_states
    pm = np.full((b, ns), -np.inf)
    pm[:, 0] = 0.0
    decisions = np.empty((steps, b, ns), dtype=np.uint8)
    for t in range(steps):
        bm = np.einsum("bk,sck->bsc", q[:, t, :], zero)  # (B, S, 2)
        cand = pm[:, pred] + bm
        choice = cand[:, :, 1] > cand[:, :, 0]
        decisions[t] = choice
        pm = np.where(choice, cand[:, :, 1], cand[:, :, 0])
    state = np.zeros(b, dtype=np.int64)
    bits = np.empty((b, steps), dtype=np.uint8)
    rows = np.arange(b)
    top = code.memory - 1
    for t in range(steps - 1, -1, -1):
        bits[:, t] = state >> top
        state = pred[state, decisions[t, rows, state]]
    return bits[:, :n_info]


def brute_force_decode(code: ConvolutionalCode, metrics: np.ndarray, n_info: int) -> np.ndarray:
    """Exhaustive ML over all 2**n_info information words (small frames only)."""
    if n_info > 16:
        raise ConfigError("exhaustive decoding limited to 16 information bits")
    words = ((np.arange(1 << n_info)[:, None] >> np.arange(n_info - 1, -1, -1)) & 1).astype(np.uint8)
    cw = code.encode(words).astype(float)
    score = np.asarray(metrics, float) @ (1.0 - cw).T  # (B, 2**L)
    return words[np.argmax(score, axis=1)]


@dataclass(frozen=True)
class BlockInterleaver:
    """Write row by row, read column by column."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("interleaver dimensions must be positive")

    @classmethod
    def square(cls, length: int) -> "BlockInterleaver":
        r = int(math.isqrt(length))
        while length % r:
            r -= 1
        return cls(r, length // r)

    @property
    def length(self) -> int:
        return self.rows * self.cols

    def permutation(self) -> np.ndarray:
        return np.arange(self.length).reshape(self.rows, self.cols).T.ravel()

    def interleave(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[..., self.permutation()]

    def deinterleave(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        out = np.empty_like(x)
        out[..., self.permutation()] = x
        return out


def frame_rng(seed: int, frame: int, stage: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed % _U64, stage], counter=[0, 0, 0, frame]))


def wilson_interval(k: int, n: int, z: float = _Z95) -> tuple[float, float]:
    if n <= 0:
        return 0.0, 1.0
    p = k / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class SimConfig:
    snr_db: float
    frames: int
    frame_bits: int
    seed: int
    demapper: str = "maxlog"
    generators: tuple[int, ...] = (0o133, 0o171)
    constraint_length: int = 7
    interleaver: tuple[int, int] | None = None
    gcr_mode: str = "signed"

    def __post_init__(self):
        if not math.isfinite(self.snr_db):
            raise ConfigError("snr_db must be finite")
        if self.frames < 1 or self.frame_bits < 1:
            raise ConfigError("frames and frame_bits must be at least 1")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= int(self.seed) < _U64:
            raise ConfigError("seed must be an integer in [0, 2**64)")
        if self.demapper not in DEMAPPERS:
            raise ConfigError(f"demapper must be one of {DEMAPPERS}")
        if self.gcr_mode not in bicm8psk.GCR_MODES:
            raise ConfigError(f"gcr_mode must be one of {bicm8psk.GCR_MODES}")
        object.__setattr__(self, "generators", tuple(int(g) for g in self.generators))
        if self.interleaver is not None:
            object.__setattr__(self, "interleaver", tuple(int(v) for v in self.interleaver))
        code = self.code()
        il = self.block_interleaver()
        if il.length != self.padded_length(code):
            raise ConfigError(f"interleaver {il.rows}x{il.cols} does not cover {self.padded_length(code)} coded bits")

    def code(self) -> ConvolutionalCode:
        return ConvolutionalCode(self.generators, self.constraint_length)

    def coded_length(self, code: ConvolutionalCode | None = None) -> int:
        code = code or self.code()
        return code.rate_inverse * (self.frame_bits + code.memory)

    def padded_length(self, code: ConvolutionalCode | None = None) -> int:
        return 3 * -(-self.coded_length(code) // 3)

    def block_interleaver(self) -> BlockInterleaver:
        if self.interleaver is None:
            return BlockInterleaver.square(self.padded_length())
        return BlockInterleaver(*self.interleaver)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        d = json.loads(text)
        if "generators" in d:
            d["generators"] = tuple(int(g, 8) if isinstance(g, str) else int(g) for g in d["generators"])
        if d.get("interleaver") is not None:
            d["interleaver"] = tuple(d["interleaver"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class SimResult:
    snr_db: float
    demapper: str
    bits: int
    bit_errors: int
    frames: int
    frame_errors: int
    ber: float = field(init=False)
    fer: float = field(init=False)
    ci_lo: float = field(init=False)
    ci_hi: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "ber", self.bit_errors / self.bits)
        object.__setattr__(self, "fer", self.frame_errors / self.frames)
        lo, hi = wilson_interval(self.bit_errors, self.bits)
        object.__setattr__(self, "ci_lo", lo)
        object.__setattr__(self, "ci_hi", hi)

    @property
    def wilson_ci95(self) -> tuple[float, float]:
        return self.ci_lo, self.ci_hi


@dataclass(frozen=True)
class SimFailure:
    config: SimConfig | None
    error: str


def demap(y: np.ndarray, noise_var: float, demapper: str, gcr_mode: str = "signed") -> np.ndarray:
    """Bit metrics (..., 3) for samples with per-component noise variance ``noise_var``."""
    g = 1.0 / noise_var  # x.y / sigma^2 is the log-likelihood up to common terms
    if demapper == "exact":
        return bicm8psk.exact_llr(y, g)
    if demapper == "maxlog":
        return bicm8psk.maxlog_llr(y, g)
    if demapper == "fast":
        return bicm8psk.fast_llr_decompose(y, g)
    if demapper == "gcr":
        return bicm8psk.gcr_bit_metrics(bicm8psk.maxlog_llr(y, g), mode=gcr_mode)
    if demapper == "hard":
        return np.sign(bicm8psk.maxlog_llr(y, 1.0))
    raise ConfigError(f"unknown demapper {demapper!r}")


def _frame_batch(cfg: SimConfig, code, il, first: int, count: int, noise_var: float):
    coded_len = cfg.coded_length(code)
    n_sym = il.length // 3
    info = np.empty((count, cfg.frame_bits), np.uint8)
    noise = np.empty((count, n_sym), complex)
    sigma = math.sqrt(noise_var)
    for i in range(count):
        f = first + i
        info[i] = frame_rng(cfg.seed, f, STAGE_BITS).integers(0, 2, cfg.frame_bits, dtype=np.uint8)
        z = frame_rng(cfg.seed, f, STAGE_NOISE).standard_normal((n_sym, 2))
        noise[i] = sigma * (z[:, 0] + 1j * z[:, 1])
    coded = np.zeros((count, il.length), np.uint8)
    coded[:, :coded_len] = code.encode(info)
    tx = bicm8psk.PSK8.modulate(il.interleave(coded).reshape(count, n_sym, 3))
    q = demap(tx + noise, noise_var, cfg.demapper, cfg.gcr_mode).reshape(count, il.length)
    q = il.deinterleave(q)[:, :coded_len]
    decoded = viterbi_decode(code, q, cfg.frame_bits)
    errs = np.count_nonzero(decoded != info, axis=1)
    return int(errs.sum()), int(np.count_nonzero(errs))


def run_sim(cfg: SimConfig, batch_frames: int = 128) -> SimResult:
    """Simulate ``cfg.frames`` frames; the result depends only on the config."""
    code = cfg.code()
    il = cfg.block_interleaver()
    noise_var = 0.5 * 10.0 ** (-cfg.snr_db / 10.0)  # per real component, Es = 1
    bit_errors = frame_errors = 0
    for first in range(0, cfg.frames, batch_frames):
        count = min(batch_frames, cfg.frames - first)
        be, fe = _frame_batch(cfg, code, il, first, count, noise_var)
        bit_errors += be
        frame_errors += fe
    return SimResult(cfg.snr_db, cfg.demapper, cfg.frames * cfg.frame_bits, bit_errors, cfg.frames, frame_errors)


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("QUANTDEMOD_THREADS", "1")))
    except ValueError:
        return 1


def _safe_run(cfg: SimConfig) -> SimResult | SimFailure:
    try:
        return run_sim(cfg)
    except Exception as exc:  # collected, not fatal to the sweep
        return SimFailure(cfg, f"{type(exc).__name__}: {exc}")


def sweep(cfgs: list[SimConfig], threads: int | None = None) -> list[SimResult | SimFailure]:
    """Run every config; each carries its own seed, so order does not matter."""
    workers = min(threads or thread_cap(), max(1, len(cfgs)))
    if workers == 1:
        return [_safe_run(c) for c in cfgs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_safe_run, cfgs))


def grid_configs(base: SimConfig, snr_dbs) -> list[SimConfig]:
    """One config per SNR with seed ``base.seed + index`` (index in the grid)."""
    d = asdict(base)
    out = []
    for i, s in enumerate(snr_dbs):
        d.update(snr_db=float(s), seed=(base.seed + i) % _U64)
        out.append(SimConfig(**d))
    return out


def simulate_uncoded_ser(snr_db: float, n_symbols: int, seed: int) -> float:
    """Symbol error rate of nearest-point 8PSK detection."""
    rng = frame_rng(seed, 0, STAGE_NOISE)
    k = frame_rng(seed, 0, STAGE_BITS).integers(0, 8, n_symbols)
    sigma = math.sqrt(0.5 * 10.0 ** (-snr_db / 10.0))
    z = rng.standard_normal((n_symbols, 2))
    y = bicm8psk.POINTS[k] + sigma * (z[:, 0] + 1j * z[:, 1])
    k_hat = np.rint(np.angle(y) / (np.pi / 4)).astype(np.int64) % 8
    return float(np.mean(k_hat != k))
