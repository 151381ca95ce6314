"""Command-line entry point: ``ccdpd {synth,costmap,sweep,selftest}``.

Exit codes: 0 success, 1 validation error, 2 runtime failure. Every error is
reported as a single ``ERROR[<category>]: ...`` line on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import replace

import numpy as np

from .estimators import VARIANTS, EstimatorParams, build_context, evaluate_surface
from .harness import DEFAULT_SNR_AXIS, DEFAULT_TRIALS, run_sweep, surface_to_csv, write_text
from .scenario import (
    GridSpec,
    Position,
    ScenarioConfig,
    SourceConfig,
    ValidationError,
    default_scenario,
    scenario_from_dict,
    tdoa_vector,
    triangle_stations,
)
from .synth import ReceivedBatch, read_batch, simulate, synthesize_received, write_batch
from .xcov import build_composite, herm_eig, lagged_crosscov

AXES = {"snr": "snr_db", "bandwidth": "bandwidth_hz"}


class CliError(Exception):
    def __init__(self, category: str, message: str, code: int):
        super().__init__(message)
        self.category = category
        self.code = code


def parse_config(path) -> ScenarioConfig:
    """Read a JSON scenario file; missing keys are taken from the default scenario.

    Raises
    ------
    CliError
        ``parse`` (exit 1) with line/column context for malformed JSON,
        ``config`` (exit 1) naming the violated invariant otherwise.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CliError("io", f"{path}: {exc.strerror}", 2) from exc
    if not text.strip():
        doc = {}
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CliError("parse", f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}", 1) from exc
    try:
        return scenario_from_dict(doc, default_scenario())
    except (ValidationError, ValueError, TypeError, KeyError) as exc:
        raise CliError("config", f"{path}: {exc}", 1) from exc


def parse_values(spec: str) -> list[float]:
    """``a:b:step`` (inclusive of b) or a comma list."""
    try:
        if ":" in spec:
            a, b, step = (float(v) for v in spec.split(":"))
            if step <= 0 or b < a:
                raise ValueError
            n = int(math.floor((b - a) / step + 1e-9)) + 1
            return [a + i * step for i in range(n)]
        return [float(v) for v in spec.split(",") if v.strip()]
    except ValueError:
        raise CliError("args", f"--values: expected a:b:step with step > 0, got {spec!r}", 1) from None


def resolve_threads(arg: int | None) -> int:
    if arg is not None:
        n = arg
    else:
        env = os.environ.get("CCDP_THREADS", "").strip()
        if not env:
            return 1
        try:
            n = int(env)
        except ValueError:
            raise CliError("args", f"CCDP_THREADS: expected an integer, got {env!r}", 1) from None
    if n < 1:
        raise CliError("args", f"thread count must be >= 1, got {n}", 1)
    return n


def _scenario(args) -> ScenarioConfig:
    return parse_config(args.config) if args.config else default_scenario(args.seed)


def _check_batch(batch: ReceivedBatch, sc: ScenarioConfig) -> None:
    want = (sc.num_stations, sc.num_elements, sc.num_samples)
    if batch.samples.shape != want:
        raise CliError("config", f"batch shape (L, M, N)={batch.samples.shape} does not match scenario {want}", 1)
    if batch.sample_rate != sc.sample_rate or batch.center_freq != sc.center_freq:
        raise CliError("config", "batch sample rate / centre frequency do not match scenario", 1)


def cmd_synth(args) -> int:
    sc = _scenario(args)
    if not args.out:
        raise CliError("args", "synth requires --out", 1)
    write_batch(args.out, simulate(sc, args.seed))
    return 0


def cmd_costmap(args) -> int:
    sc = _scenario(args)
    variant = args.estimator or "ccdpd"
    if variant == "all":
        raise CliError("args", "costmap takes a single estimator", 1)
    if args.batch:
        try:
            batch = read_batch(args.batch)
        except ValueError as exc:
            raise CliError("format", str(exc), 2) from exc
        _check_batch(batch, sc)
    else:
        # same precision as the file path so both give identical bytes
        batch = simulate(sc, args.seed).quantized()
    ctx = build_context(variant, batch, sc, EstimatorParams(variant))
    surface = evaluate_surface(variant, EstimatorParams(variant), ctx, sc.grid, resolve_threads(args.threads))
    text = surface_to_csv(surface)
    if args.out:
        write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    axis = AXES[args.axis]
    values = parse_values(args.values) if args.values else (list(DEFAULT_SNR_AXIS) if axis == "snr_db" else [sc.sources[0].bandwidth])
    names = VARIANTS if (args.estimator or "all") == "all" else (args.estimator,)
    if args.trials < 1:
        raise CliError("args", "--trials must be >= 1", 1)
    table = run_sweep(sc, axis, values, args.trials, [EstimatorParams(v) for v in names], args.seed, resolve_threads(args.threads))
    text = table.to_csv()
    if args.out:
        write_text(args.out, text)
    else:
        sys.stdout.write(text)
    for r in table.rows:
        print(f"{r.estimator:>6} {axis}={r.axis_value:g} rmse={r.rmse_m:.2f} m median={r.median_error_m:.2f} m", file=sys.stderr)
    return 0


# ---------------------------------------------------------------- selftest


def _selftest_scenario(source: Position, snr_db=None) -> ScenarioConfig:
    return ScenarioConfig(
        stations=triangle_stations(),
        center_freq=1.575e9,
        sample_rate=20e6,
        duration=0.25e-3,
        sources=(SourceConfig(source, 10e6),),
        snr_db=snr_db,
        grid=GridSpec(-150.0, 150.0, -150.0, 150.0, 10.0),
        seed=1,
    )


def check_noiseless_exactness() -> tuple[bool, str]:
    truth = Position(40.0, -60.0)
    sc = _selftest_scenario(truth)
    batch = synthesize_received(sc, 7)
    params = [
        EstimatorParams("ccdpd", n_m=1),
        EstimatorParams("dpd", K=16),
        EstimatorParams("target", q_t=1),
        EstimatorParams("lost", K=4, lost_signal_dim=3),
    ]
    cache: dict = {}
    details = []
    ok = True
    for p in params:
        ctx = build_context(p.variant, batch, sc, p, cache)
        s = evaluate_surface(p.variant, p, ctx, sc.grid)
        best = s.points[s.best_index()]
        hit = bool(np.allclose(best, truth.as_array()))
        ok &= hit
        details.append(f"{p.variant}@({best[0]:g},{best[1]:g})")
    return ok, " ".join(details)


def check_eigenstructure() -> tuple[bool, str]:
    """Single noiseless source at its true TDOAs: modified composite has 1 positive, L-1 negative eigenvalues."""
    truth = Position(30.0, 20.0)
    sc = replace(_selftest_scenario(truth), duration=0.5e-3)
    batch = synthesize_received(sc, 3)
    L = sc.num_stations
    max_lag = sc.max_baseline_delay() + 4 / sc.sample_rate
    lccs = {
        (i, j): lagged_crosscov(batch.samples[i], batch.samples[j], 4, max_lag, sc.sample_rate, (i, j))
        for i in range(L) for j in range(i + 1, L)
    }
    comp = build_composite(lccs, None, tdoa_vector(truth, sc.stations, sc.speed_of_light), "modified")
    w, _ = herm_eig(comp.matrix)
    scale = np.max(np.abs(w))
    pos = int(np.sum(w > 0.1 * scale))
    neg = int(np.sum(w < -0.1 * scale))
    rest = np.abs(w[(w <= 0.1 * scale) & (w >= -0.1 * scale)])
    ok = pos == 1 and neg == L - 1 and bool(np.all(rest <= 0.05 * scale))
    return ok, f"positive={pos} negative={neg} residual={rest.max() / scale if rest.size else 0:.2e}"


def check_file_roundtrip(tmpdir: str) -> tuple[bool, str]:
    sc = _selftest_scenario(Position(0.0, 0.0), snr_db=0.0)
    b = simulate(sc, 5).quantized()
    path = os.path.join(tmpdir, "selftest.ccdp")
    write_batch(path, b)
    back = read_batch(path)
    same = back.samples.tobytes() == b.samples.tobytes()
    return same, f"{os.path.getsize(path)} bytes"


SELFTESTS = {
    "noiseless_exactness": check_noiseless_exactness,
    "eigenstructure": check_eigenstructure,
}


def cmd_selftest(args) -> int:
    import tempfile

    failed = 0
    checks = dict(SELFTESTS)
    with tempfile.TemporaryDirectory() as tmp:
        checks["file_roundtrip"] = lambda: check_file_roundtrip(tmp)
        for name, fn in checks.items():
            t0 = time.perf_counter()
            ok, detail = fn()
            failed += not ok
            print(f"{'PASS' if ok else 'FAIL'} {name} ({detail}; {time.perf_counter() - t0:.2f}s)")
    return 0 if failed == 0 else 2


# ---------------------------------------------------------------- entry


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ccdpd", description="Multi-station direct position determination toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, estimator_default=None):
        p.add_argument("--config", help="JSON scenario file (missing keys use the default scenario)")
        p.add_argument("--seed", type=int, default=1, help="master seed (default 1)")
        p.add_argument("--threads", type=int, default=None, help="worker cap (falls back to $CCDP_THREADS, then 1)")
        p.add_argument("--out", help="output file")

    p = sub.add_parser("synth", help="synthesize received samples to a CCDP binary")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("costmap", help="evaluate one estimator's cost surface to CSV")
    common(p)
    p.add_argument("--batch", help="CCDP binary to read instead of synthesizing in memory")
    p.add_argument("--estimator", choices=(*VARIANTS, "all"), default="ccdpd")
    p.set_defaults(func=cmd_costmap)

    p = sub.add_parser("sweep", help="Monte Carlo RMSE sweep to CSV")
    common(p)
    p.add_argument("--estimator", choices=(*VARIANTS, "all"), default="all")
    p.add_argument("--axis", choices=tuple(AXES), default="snr")
    p.add_argument("--values", help="a:b:step (inclusive) or comma list; SNR in dB, bandwidth in Hz")
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("selftest", help="run built-in consistency checks")
    p.set_defaults(func=cmd_selftest)
    return ap


def _join_negative_values(argv: list[str]) -> list[str]:
    # argparse would read "--values -20:10:5" as an unknown flag
    out, i = [], 0
    while i < len(argv):
        if argv[i] == "--values" and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"--values={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    ap = build_parser()
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return 0
        print("ERROR[args]: invalid command line (see usage above)", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except CliError as exc:
        print(f"ERROR[{exc.category}]: {exc}", file=sys.stderr)
        return exc.code
    except ValidationError as exc:
        print(f"ERROR[config]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"ERROR[io]: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        msg = str(exc).replace("\n", " ")
        print(f"ERROR[runtime]: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
