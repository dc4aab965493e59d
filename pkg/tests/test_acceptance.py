"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (printed in the pytest terminal summary)
and then asserts at the stated tolerance.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest
from scipy import special, stats

from quantdemod import bicm8psk, linksim, matched, mismatched
from quantdemod.channel import BPSK, GaussianChannel, mutual_information_continuous

MATCHED_SMALL_SNR = {
    3: [0.6120],
    4: [0.9816],
    5: [0.3823, 1.2443],
    6: [0.6589, 1.4468],
    7: [0.2803, 0.8744, 1.6107],
    8: [0.5005, 1.0499, 1.7479],
    9: [0.2218, 0.6812, 1.1976, 1.8655],
    10: [0.4047, 0.8338, 1.3246, 1.9682],
    11: [0.1837, 0.5599, 0.9656, 1.4357, 2.0592],
    12: [0.3401, 0.6943, 1.0812, 1.5344, 2.1407],
}

MISMATCHED_LARGEST = dict(
    zip(
        range(3, 38, 2),
        [0.6120, 1.2645, 1.6269, 1.8683, 2.0460, 2.1846, 2.2975, 2.3922, 2.4735, 2.5445, 2.6074, 2.6638, 2.7148, 2.7614, 2.8042, 2.8437, 2.8805, 2.9148],
    )
)


def _snr_grid(lo, hi, points):
    return np.linspace(lo, hi, points)


def test_criterion_1_matched_small_snr_thresholds(acceptance):
    t0 = time.perf_counter()
    worst, where = 0.0, None
    count = 0
    for n, want in MATCHED_SMALL_SNR.items():
        got = [b for b in matched.small_snr_thresholds(n) if b > 1e-12]
        assert len(got) == len(want), f"N={n}"
        for a, b in zip(got, want):
            count += 1
            if abs(a - b) > worst:
                worst, where = abs(a - b), n
    dt = time.perf_counter() - t0
    ok = worst <= 5e-4 and dt < 1.0 and count == 30
    acceptance(1, ok, f"matched small-SNR thresholds: {count} values, max |err| = {worst:.2e} (N={where}), {dt:.2f} s")
    assert ok


def test_criterion_2_b0(acceptance):
    b0 = matched.B0
    ok_root = abs(b0 - 0.6120) <= 5e-4
    g = 0.37
    coef = (matched.small_snr_threshold_2pam3(2, g) - b0) / (g * g)
    ok_coef = coef == pytest.approx(-b0 / 6, rel=1e-14)
    worst = 0.0
    for snr_db in _snr_grid(-30.0, -5.0, 26):
        ch = GaussianChannel.from_snr_db(float(snr_db))
        opt = matched.optimize_thresholds_iterative(ch, BPSK, 3).scheme.thresholds[1]
        worst = max(worst, abs(matched.small_snr_threshold_2pam3(2, ch.gain) - opt))
    ok = ok_root and ok_coef and worst <= 2e-2
    acceptance(2, ok, f"b0 = {b0:.6f}, second-order coefficient/b0 = {coef / b0:.15f}, order-2 vs optimizer max |diff| = {worst:.2e} for g^2 <= -5 dB")
    assert ok


def test_criterion_3_mismatched_small_snr_thresholds(acceptance):
    t0 = time.perf_counter()
    bad = []
    worst_spacing = 0.0
    for n, want in MISMATCHED_LARGEST.items():
        res = mismatched.small_snr_mismatched(mismatched.MetricAssignment.for_outputs(n))
        b = np.asarray(res.thresholds)
        if len(b) > 1:
            d = np.diff(b)
            worst_spacing = max(worst_spacing, float(np.max(np.abs(d - d[0]))))
        if abs(res.largest - want) > 5e-4:
            bad.append(f"N={n}: {res.largest:.5f} vs {want:.4f}")
    dt = time.perf_counter() - t0
    ok = not bad and worst_spacing <= 1e-8 and dt < 10.0
    detail = f"mismatched largest thresholds: {18 - len(bad)}/18 within 5e-4, spacing non-uniformity {worst_spacing:.1e}, {dt:.2f} s"
    if bad:
        detail += "; off: " + ", ".join(bad)
    acceptance(3, ok, detail)
    assert ok


def test_criterion_4_point_six_percent(acceptance):
    t0 = time.perf_counter()
    scheme = matched.small_snr_scheme(3)
    worst, at = 0.0, None
    for snr_db in _snr_grid(-10.0, 10.0, 41):
        ch = GaussianChannel.from_snr_db(float(snr_db))
        best = matched.optimize_thresholds_iterative(ch, BPSK, 3).capacity
        cap = matched.matched_sweep_row(ch, BPSK, scheme)["capacity_nats"]
        loss = 1.0 - cap / best
        if loss > worst:
            worst, at = loss, snr_db
    dt = time.perf_counter() - t0
    ok = worst <= 0.006 and dt < 30.0
    acceptance(4, ok, f"max relative loss vs optimizer = {worst:.6f} at {at:.1f} dB (limit 0.006), {dt:.1f} s")
    assert ok


def test_criterion_5_high_rate(acceptance):
    t0 = time.perf_counter()
    ch = GaussianChannel(0.1)
    ratios = {}
    for n in (16, 32):
        res = matched.optimize_thresholds_iterative(ch, BPSK, n)
        ratios[n] = res.relative_loss * n * n / (math.sqrt(3) * math.pi / 2)
    dt = time.perf_counter() - t0
    ok = all(0.8 <= r <= 1.2 for r in ratios.values()) and dt < 120.0
    acceptance(5, ok, "loss*N^2/(sqrt3*pi/2): " + ", ".join(f"N={n}: {r:.4f}" for n, r in ratios.items()) + f", {dt:.1f} s")
    assert ok


def _matched_grid_oracle(g, n):
    """Best symmetric 2-PAM quantizer on a 2001-point grid per positive threshold."""
    grid = np.linspace(0.0, 6.0, 2001)

    def capacity(edges):
        # edges: (..., cells + 1) increasing; capacity of the induced symmetric channel
        pp = stats.norm.cdf(edges[..., 1:] - g) - stats.norm.cdf(edges[..., :-1] - g)
        pm = stats.norm.cdf(edges[..., 1:] + g) - stats.norm.cdf(edges[..., :-1] + g)
        avg = 0.5 * (pp + pm)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = 0.5 * (special.xlogy(pp, pp) + special.xlogy(pm, pm)) - special.xlogy(avg, avg)
        return np.sum(terms, axis=-1)

    inf = np.full_like(grid, np.inf)
    if n == 3:
        edges = np.stack([-inf, -grid, grid, inf], axis=-1)
        return float(np.max(capacity(edges)))
    if n == 5:
        best = -np.inf
        for b1 in grid:
            b2 = grid[grid >= b1]
            one = np.full_like(b2, b1)
            ii = np.full_like(b2, np.inf)
            edges = np.stack([-ii, -b2, -one, one, b2, ii], axis=-1)
            best = max(best, float(np.max(capacity(edges))))
        return best
    raise ValueError(n)


def _mismatched_grid_oracle(g, k):
    """GMI on a 10^4-point alpha grid with the alpha-optimal thresholds, from scratch."""
    # beyond alpha ~ 1e2 the tail differences underflow; the optimum here is O(1)
    alphas = np.geomspace(1e-3, 1e2, 10_000)
    q = np.arange(k + 1, dtype=float)
    sp = lambda v: np.logaddexp(0.0, v)  # noqa: E731
    up = sp(-alphas[:, None] * q[:-1]) - sp(-alphas[:, None] * q[1:])
    down = sp(alphas[:, None] * q[1:]) - sp(alphas[:, None] * q[:-1])
    b = np.log(down / up) / (2 * g)  # positive thresholds b_0 .. b_{K-1}
    inf = np.full((len(alphas), 1), np.inf)
    edges = np.concatenate([-inf, -b[:, ::-1], b, inf], axis=1)
    qfull = np.concatenate([-q[:0:-1], q])
    total = np.full(len(alphas), math.log(2.0))
    for x in (-1.0, 1.0):
        p = stats.norm.cdf(edges[:, 1:] - g * x) - stats.norm.cdf(edges[:, :-1] - g * x)
        total -= 0.5 * np.sum(p * sp(-alphas[:, None] * qfull * x), axis=1)
    return float(np.max(total))


def test_criterion_6_optimizer_vs_grid(acceptance):
    t0 = time.perf_counter()
    worst = -np.inf
    lines = []
    for g in (0.5, 1.0, 2.0):
        ch = GaussianChannel(g)
        for n in (3, 5):
            got = matched.optimize_thresholds_iterative(ch, BPSK, n).capacity
            ref = _matched_grid_oracle(g, n)
            worst = max(worst, ref - got)
            lines.append(f"matched N={n} g={g}: {got - ref:+.1e}")
        got = mismatched.optimize_mismatched(ch, mismatched.MetricAssignment.for_outputs(5)).gmi
        ref = _mismatched_grid_oracle(g, 2)
        worst = max(worst, ref - got)
        lines.append(f"mismatched N=5 g={g}: {got - ref:+.1e}")
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and dt < 300.0
    acceptance(6, ok, f"worst (oracle - optimizer) = {worst:.1e} nats, {dt:.1f} s")
    assert ok, "; ".join(lines)


def test_criterion_7_large_snr_asymptotics(acceptance):
    g = 10.0
    m = mismatched.MetricAssignment.for_outputs(5)
    res = mismatched.optimize_mismatched(GaussianChannel(g), m)
    qk = m.values[-1]
    alpha_ratio = res.alpha * 2 * qk / g**2
    b = np.sort(np.asarray(res.scheme.thresholds))
    b_pos = b[len(b) // 2 :]  # b_0 .. b_{K-1}; the limit b_0 -> 0 carries no ratio
    b_ratios = [bi * 4 * qk / (g * qi) for bi, qi in zip(b_pos[1:], m.values[:-1])]
    ok = 0.8 <= alpha_ratio <= 1.2 and all(0.8 <= r <= 1.2 for r in b_ratios)
    acceptance(7, ok, f"g=10: alpha*2qK/g^2 = {alpha_ratio:.4f}, b_i*4qK/(g q_i) = " + ", ".join(f"{r:.4f}" for r in b_ratios))
    assert ok


def test_criterion_8_fast_llr(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    n = 1_000_000
    y = 4.0 * np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))
    special_pts = 2.0 * np.exp(1j * np.arange(16) * np.pi / 8)  # 8 bisectors and 8 boundaries
    y = np.concatenate([y, special_pts])
    counter = bicm8psk.MultiplicationCounter()
    fast = bicm8psk.fast_llr_decompose(y, counter=counter)
    err = float(np.max(np.abs(fast - bicm8psk.maxlog_llr(y))))
    single = bicm8psk.MultiplicationCounter()
    bicm8psk.fast_llr_decompose(0.7 - 0.2j, counter=single)
    dt = time.perf_counter() - t0
    ok = err <= 1e-12 and counter.per_symbol() == 3.0 and single.multiplications == 3 and dt < 10.0
    acceptance(8, ok, f"max |fast - maxlog| = {err:.1e} over {len(y)} samples, {counter.per_symbol():.0f} complex mults/symbol, {dt:.1f} s")
    assert ok


SIM_SNR_DB = 7.0


@pytest.mark.slow
def test_criterion_9_demapper_ordering(acceptance):
    t0 = time.perf_counter()
    common = dict(snr_db=SIM_SNR_DB, frames=1000, frame_bits=1000, seed=20240601)
    res = {d: linksim.run_sim(linksim.SimConfig(demapper=d, **common)) for d in ("maxlog", "exact", "gcr")}
    mag = linksim.run_sim(linksim.SimConfig(demapper="gcr", gcr_mode="magnitude", **common))
    dt = time.perf_counter() - t0
    gmi, gcr = res["exact"], res["gcr"]
    near_target = 3e-4 <= res["maxlog"].ber <= 3e-3
    separated = gcr.ci_lo > gmi.ci_hi
    tie = not separated and not gcr.ci_hi < gmi.ci_lo
    ordered = gcr.ber >= gmi.ber
    ok = near_target and ordered and (separated or tie) and dt < 300.0
    verdict = "separated" if separated else ("TIE (overlapping intervals)" if tie else "reversed")
    acceptance(
        9,
        ok,
        f"{SIM_SNR_DB} dB, 1e6 info bits: maxlog BER {res['maxlog'].ber:.2e}, GMI (exact) BER {gmi.ber:.2e} "
        f"[{gmi.ci_lo:.2e}, {gmi.ci_hi:.2e}], GCR BER {gcr.ber:.2e} [{gcr.ci_lo:.2e}, {gcr.ci_hi:.2e}] ({verdict}); "
        f"GCR magnitude-mode BER {mag.ber:.2e}; {dt:.0f} s",
    )
    assert ok


def test_criterion_10_property_suites(acceptance):
    import test_properties as tp

    t0 = time.perf_counter()
    suites = {
        "ascent": tp.TestIterationAscent().test_capacity_never_decreases,
        "gmi<=mi": tp.TestGmiBelowMi().test_gmi_never_exceeds_discrete_mi,
        "scale": tp.TestScaleInvariance().test_gmi_depends_on_alpha_times_metric,
        "lloyd": tp.TestLloydStationarity().test_fixed_point,
        "quadrature": tp.TestQuadratureExactness().test_gauss_hermite_moments,
        "tail bounds": tp.TestTailLemma().test_random_points,
    }
    failed = []
    for name, fn in suites.items():
        try:
            fn()
        except AssertionError as exc:
            failed.append(f"{name}: {exc}")
    for x in (1.0, 2.0, 4.0):
        lo, hi = mismatched.tail_second_moment_bounds(x)
        if not lo <= mismatched.tail_second_moment(x) <= hi:
            failed.append(f"tail bounds at x={x}")
    dt = time.perf_counter() - t0
    ok = not failed
    acceptance(10, ok, f"{len(suites)} suites x {tp.TRIALS} trials, {len(failed)} failed, {dt:.1f} s")
    assert ok, failed


def test_criterion_11_monotone_loss_probe(acceptance):
    grid = _snr_grid(-10.0, 10.0, 41)
    summary = []
    for n in (3, 5, 7):
        losses = []
        for snr_db in grid:
            ch = GaussianChannel.from_snr_db(float(snr_db))
            losses.append(matched.optimize_thresholds_iterative(ch, BPSK, n).relative_loss)
        d = np.diff(losses)
        rises = int(np.sum(d > 1e-12))
        summary.append(f"N={n}: {'monotone' if rises == 0 else f'{rises} increases'} ({losses[0]:.4f} -> {losses[-1]:.4f})")
        assert all(np.isfinite(losses))
    acceptance(11, None, "optimal relative loss over 41 points in [-10, 10] dB: " + "; ".join(summary))


def test_continuous_capacity_reference():
    # sanity anchor for the relative-loss denominators used above
    assert mutual_information_continuous(GaussianChannel(0.0), BPSK) == 0.0
    assert mutual_information_continuous(GaussianChannel(10.0), BPSK) == pytest.approx(math.log(2.0), abs=1e-12)
