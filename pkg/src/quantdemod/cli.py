"""Command-line front end: every computation as a subcommand emitting CSV or JSON.

CSV output starts with a ``#``-prefixed manifest block (command line,
config hash, version, seed), then a one-line header and the rows. Floats
are written with 12 significant digits so reruns are byte-identical. The
wall-clock timestamp lives in ``<out>.manifest.json`` next to the output
file rather than in the CSV itself.
"""

from __future__ import annotations

import argparse
import contextvars
import csv
import datetime
import hashlib
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, bicm8psk, linksim, matched, mismatched, numerics
from .channel import BPSK, GaussianChannel, QuantizerScheme
from .errors import ConfigError, QuantDemodError

THRESHOLD_MODES = ("matched-iterative", "matched-small-snr", "matched-large-snr", "mismatched", "mismatched-small-snr")
LN2 = math.log(2.0)


class UsageError(QuantDemodError):
    pass


def _fmt(v, digits: int = 12) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v) + 0.0:.{digits}g}"  # + 0.0 drops the sign of negative zero
    if isinstance(v, (list, tuple, np.ndarray)):
        return ";".join(_fmt(x, digits) for x in v)
    return "" if v is None else str(v)


def _jsonable(v, digits: int = 12):
    if isinstance(v, (float, np.floating)):
        return float(f"{float(v) + 0.0:.{digits}g}")
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x, digits) for x in v]
    if isinstance(v, np.integer):
        return int(v)
    return v


def _threads() -> int:
    return linksim.thread_cap()


def _parallel_map(fn, items):
    """Map preserving order; QUANTDEMOD_THREADS caps the worker count."""
    items = list(items)
    workers = min(_threads(), max(1, len(items)))
    if workers == 1:
        return [fn(x) for x in items]
    ctx = contextvars.copy_context()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda x: ctx.copy().run(fn, x), items))


# ---------------------------------------------------------------------------
# subcommands; each returns (columns, rows, errors)


def _gain(snr_db):
    if snr_db is None:
        raise UsageError("--snr-db is required for this mode")
    return GaussianChannel.from_snr_db(snr_db)


def _listed(scheme: QuantizerScheme) -> list[float]:
    """Non-negative half of a symmetric scheme, every threshold otherwise."""
    if scheme.is_symmetric():
        b = scheme.thresholds
        return list(b[len(b) // 2 :])
    return list(scheme.thresholds)


def _capacity_cols(cap):
    return {"capacity_nats": cap, "capacity_bits": None if cap is None else cap / LN2}


def _threshold_row(mode: str, n: int, snr_db, tol: float) -> dict:
    row = {"mode": mode, "n": n, "snr_db": snr_db, "thresholds": None, "alpha": None, "capacity_nats": None, "capacity_bits": None, "relative_loss": None}
    if n < 2:
        raise UsageError("N must be at least 2")
    if mode.startswith("mismatched") and (n < 3 or n % 2 == 0):
        raise UsageError("mismatched modes need an odd N >= 3")
    if mode == "matched-small-snr":
        scheme = matched.small_snr_scheme(n)
        row["thresholds"] = _listed(scheme)
        if snr_db is not None:
            r = matched.matched_sweep_row(_gain(snr_db), BPSK, scheme)
            row.update(_capacity_cols(r["capacity_nats"]), relative_loss=r["relative_loss"])
    elif mode == "matched-large-snr":
        if n != 3:
            raise UsageError("the large-SNR closed form exists for N=3 only")
        ch = _gain(snr_db)
        b = matched.large_snr_threshold_2pam3(ch.gain)
        row["thresholds"] = [b]
        if b > 0:
            r = matched.matched_sweep_row(ch, BPSK, QuantizerScheme.symmetric([b]))
            row.update(_capacity_cols(r["capacity_nats"]), relative_loss=r["relative_loss"])
    elif mode == "matched-iterative":
        ch = _gain(snr_db)
        res = matched.optimize_thresholds_iterative(ch, BPSK, n, tol=tol)
        row["thresholds"] = _listed(res.scheme)
        row.update(_capacity_cols(res.capacity), relative_loss=res.relative_loss)
    elif mode == "mismatched":
        ch = _gain(snr_db)
        res = mismatched.optimize_mismatched(ch, mismatched.MetricAssignment.for_outputs(n), tol=tol)
        row.update(thresholds=_listed(res.scheme), alpha=res.alpha, relative_loss=res.relative_loss)
        row.update(_capacity_cols(res.gmi))
    elif mode == "mismatched-small-snr":
        m = mismatched.MetricAssignment.for_outputs(n)
        s = mismatched.small_snr_mismatched(m)
        row["thresholds"] = list(s.thresholds)
        if snr_db is not None:
            ch = _gain(snr_db)
            row["alpha"] = s.alpha_over_g * ch.gain
            r = mismatched.mismatched_sweep_row(ch, mismatched.small_snr_mismatched_scheme(m), m)
            row.update(_capacity_cols(r["gmi_nats"]), relative_loss=r["relative_loss"])
    else:
        raise UsageError(f"unknown mode {mode!r}")
    return row


_THRESHOLD_COLS = ["mode", "n", "snr_db", "thresholds", "alpha", "capacity_nats", "capacity_bits", "relative_loss"]


def cmd_thresholds(args):
    if args.table1:
        jobs = [("matched-small-snr", n) for n in range(3, 13)]
    elif args.table2:
        jobs = [("mismatched-small-snr", n) for n in range(3, 38, 2)]
    else:
        if args.mode is None or args.n is None:
            raise UsageError("--mode and --n are required (or --table1/--table2)")
        jobs = [(args.mode, args.n)]
    rows = [_threshold_row(mode, n, args.snr_db, args.tol) for mode, n in jobs]
    return _THRESHOLD_COLS, rows, []


def cmd_sweep(args):
    if args.points < 1 or args.snr_to < args.snr_from:
        raise UsageError("empty SNR grid")
    if args.points == 1 and args.snr_to != args.snr_from:
        raise UsageError("a single-point grid needs --snr-from equal to --snr-to")
    grid = np.linspace(args.snr_from, args.snr_to, args.points) if args.points > 1 else np.array([args.snr_from])
    errors = []

    def one(s):
        try:
            row = _threshold_row(args.mode, args.n, float(s), args.tol)
            row["loss_vs_optimal"] = _loss_vs_optimal(args.mode, args.n, row, args.tol)
            return row
        except QuantDemodError as exc:
            return {"error": f"snr_db={float(s):.12g}: {exc}"}

    rows = []
    for r in _parallel_map(one, grid):
        (errors.append(r["error"]) if "error" in r else rows.append(r))
    rows.sort(key=lambda r: r["snr_db"])
    return _THRESHOLD_COLS + ["loss_vs_optimal"], rows, errors


def _loss_vs_optimal(mode: str, n: int, row: dict, tol: float):
    """Relative shortfall of an approximate scheme against the numerical optimum of its family."""
    if mode in ("matched-iterative", "mismatched") or row["capacity_nats"] is None:
        return 0.0 if row["capacity_nats"] is not None else None
    ch = _gain(row["snr_db"])
    if mode.startswith("matched"):
        best = matched.optimize_thresholds_iterative(ch, BPSK, n, tol=tol).capacity
    else:
        best = mismatched.optimize_mismatched(ch, mismatched.MetricAssignment.for_outputs(n), tol=tol).gmi
    return 1.0 - row["capacity_nats"] / best


def cmd_loss(args):
    ns = _int_list(args.n_list)
    ch = _gain(args.snr_db)
    rows = []
    for n in ns:
        row = {"kind": args.kind, "n": n, "snr_db": args.snr_db, "high_rate_loss_nats": None, "high_rate_relative_loss": None, "numerical_relative_loss": None}
        if args.kind == "matched":
            row["high_rate_loss_nats"] = matched.high_rate_loss(ch, BPSK, n)
            row["high_rate_relative_loss"] = matched.high_rate_relative_loss(ch, BPSK, n)
            if args.numerical:
                row["numerical_relative_loss"] = matched.optimize_thresholds_iterative(ch, BPSK, n, tol=args.tol).relative_loss
        else:
            if n < 3 or n % 2 == 0:
                raise UsageError("mismatched loss needs odd N >= 3")
            loss = mismatched.high_rate_mismatched_loss(ch, n)
            row["high_rate_loss_nats"] = loss
            row["high_rate_relative_loss"] = loss / mismatched.mutual_information_continuous(ch, BPSK)
            if args.numerical:
                row["numerical_relative_loss"] = mismatched.optimize_mismatched(ch, mismatched.MetricAssignment.for_outputs(n), tol=args.tol).relative_loss
        rows.append(row)
    return list(rows[0].keys()), rows, []


def _int_list(text: str) -> list[int]:
    try:
        out = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad integer list {text!r}") from exc
    if not out or any(n < 2 for n in out):
        raise UsageError("N values must be integers >= 2")
    return out


def read_samples(path: str) -> np.ndarray:
    text = sys.stdin.read() if path == "-" else Path(path).read_text()
    vals = []
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        try:
            re_, im = float(parts[0]), float(parts[1])
        except (ValueError, IndexError):
            if not vals and ln == 1:
                continue  # header line
            raise UsageError(f"line {ln}: expected 're,im'")
        vals.append(complex(re_, im))
    return np.array(vals, dtype=complex)


def cmd_demod(args):
    y = read_samples(args.input)
    g = 10.0 ** (args.snr_db / 20.0)
    if args.demapper == "exact":
        q = bicm8psk.exact_llr(y, g)
    elif args.demapper == "maxlog":
        q = bicm8psk.maxlog_llr(y, g)
    elif args.demapper == "fast":
        q = bicm8psk.fast_llr_decompose(y, g)
    else:
        q = bicm8psk.gcr_bit_metrics(bicm8psk.maxlog_llr(y, g), mode=args.gcr_mode)
    rows = [{"q1": a, "q2": b, "q3": c} for a, b, c in q.tolist()]
    return ["q1", "q2", "q3"], rows, []


_SIM_COLS = ["snr_db", "demapper", "bits", "bit_errors", "ber", "frames", "frame_errors", "fer", "ci_lo", "ci_hi"]


def cmd_simulate(args):
    if args.config:
        base = linksim.SimConfig.from_json(Path(args.config).read_text())
    else:
        if args.snr_db is None and not args.snr_list:
            raise UsageError("--snr-db, --snr-list or --config is required")
        first = args.snr_db if args.snr_db is not None else float(args.snr_list.split(",")[0])
        base = linksim.SimConfig(
            snr_db=first, frames=args.frames, frame_bits=args.frame_bits, seed=args.seed, demapper=args.demapper, gcr_mode=args.gcr_mode
        )
    snrs = [float(s) for s in args.snr_list.split(",")] if args.snr_list else [base.snr_db]
    cfgs = linksim.grid_configs(base, snrs)
    rows, errors = [], []
    for r in linksim.sweep(cfgs, threads=_threads()):
        if isinstance(r, linksim.SimFailure):
            errors.append(r.error)
        else:
            rows.append({c: getattr(r, c) for c in _SIM_COLS})
    rows.sort(key=lambda r: r["snr_db"])
    return _SIM_COLS, rows, errors


# ---------------------------------------------------------------------------
# output


def _manifest(argv: list[str], args) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "func")}
    digest = hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]
    return {"command": "quantdemod " + " ".join(argv), "config_hash": digest, "version": __version__, "seed": args.seed}


def render(columns, rows, errors, manifest, as_json: bool, digits: int = 12) -> str:
    if as_json:
        doc = {"manifest": manifest, "columns": columns, "rows": [{c: _jsonable(r.get(c), digits) for c in columns} for r in rows], "errors": errors}
        return json.dumps(doc, indent=1) + "\n"
    buf = io.StringIO()
    for k, v in manifest.items():
        buf.write(f"# {k}: {v}\n")
    for e in errors:
        buf.write(f"# error: {e}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c), digits) for c in columns])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--json", action="store_true", help="emit JSON instead of CSV")
    common.add_argument("--seed", type=int, default=0, help="random seed (simulation)")
    common.add_argument("--quad-nodes", type=int, default=20, help="Gauss-Legendre panel order for adaptive integrals")
    common.add_argument("--tol", type=float, default=1e-10, help="optimizer convergence tolerance")

    p = argparse.ArgumentParser(prog="quantdemod", description="Quantizer design and 8PSK demodulation toolkit", parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("thresholds", parents=[common], help="optimal thresholds for one configuration or a full table")
    t.add_argument("--mode", choices=THRESHOLD_MODES)
    t.add_argument("--n", type=int)
    t.add_argument("--snr-db", type=float)
    g = t.add_mutually_exclusive_group()
    g.add_argument("--table1", action="store_true", help="matched small-SNR thresholds for N=3..12")
    g.add_argument("--table2", action="store_true", help="mismatched small-SNR thresholds for odd N=3..37")
    t.set_defaults(func=cmd_thresholds)

    s = sub.add_parser("sweep", parents=[common], help="thresholds, capacity and loss over an SNR grid")
    s.add_argument("--mode", choices=THRESHOLD_MODES, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--snr-from", type=float, required=True)
    s.add_argument("--snr-to", type=float, required=True)
    s.add_argument("--points", type=int, default=41)
    s.set_defaults(func=cmd_sweep)

    lo = sub.add_parser("loss", parents=[common], help="high-rate capacity loss versus N")
    lo.add_argument("--kind", choices=("matched", "mismatched"), default="matched")
    lo.add_argument("--n-list", default="4,8,16,32")
    lo.add_argument("--snr-db", type=float, required=True)
    lo.add_argument("--numerical", action="store_true", help="also run the numerical optimizer")
    lo.set_defaults(func=cmd_loss)

    d = sub.add_parser("demod", parents=[common], help="8PSK bit metrics for complex samples (re,im per line)")
    d.add_argument("--input", required=True, help="CSV file of samples, '-' for stdin")
    d.add_argument("--demapper", choices=("exact", "maxlog", "gcr", "fast"), default="maxlog")
    d.add_argument("--gcr-mode", choices=bicm8psk.GCR_MODES, default="signed")
    d.add_argument("--snr-db", type=float, default=0.0, help="channel gain g^2 in dB applied to the samples")
    d.set_defaults(func=cmd_demod)

    m = sub.add_parser("simulate", parents=[common], help="coded 8PSK BICM link simulation")
    m.add_argument("--config", help="SimConfig JSON file")
    m.add_argument("--snr-db", type=float)
    m.add_argument("--snr-list", help="comma-separated SNRs (dB); seeds advance with the grid index")
    m.add_argument("--frames", type=int, default=100)
    m.add_argument("--frame-bits", type=int, default=1000)
    m.add_argument("--demapper", choices=linksim.DEMAPPERS, default="maxlog")
    m.add_argument("--gcr-mode", choices=bicm8psk.GCR_MODES, default="signed")
    m.set_defaults(func=cmd_simulate)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with numerics.quadrature_order(args.quad_nodes):
            columns, rows, errors = args.func(args)
    except (QuantDemodError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, (UsageError, ConfigError)) else 1
    manifest = _manifest(argv, args)
    # demodulator metrics are not optimization outputs; keep them round-trip exact
    digits = 17 if args.func is cmd_demod else 12
    text = render(columns, rows, errors, manifest, args.json, digits)
    if args.out:
        Path(args.out).write_text(text)
        side = dict(manifest, timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(), outputs=[args.out])
        Path(args.out + ".manifest.json").write_text(json.dumps(side, indent=1) + "\n")
    else:
        sys.stdout.write(text)
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    return 1 if errors else 0
