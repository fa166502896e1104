"""Command-line front end.

Subcommands reproduce the link's headline results from a single TOML
config: the six-point rate table (``table1``), the optimized rate-vs-loss
curve (``sweep``), long-run QBER stability (``stability``), the
stabilization-channel fringe demonstration (``fringes``), parameter
optimization (``optimize``), and direct tally analysis (``keyrate``).
Every command is deterministic given (config, seed); CSV outputs carry a
config-hash/seed comment line.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import math
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import linkdata
from . import stabilizer as stab_mod
from .channel import ChannelConfig, pml_phase
from .keyrate import (KeyRateResult, SecurityParams, analytic_key_rate,
                      key_rate_from_tally, optimize_params)
from .linksim import (CellCounts, DetectorBank, SourceConfig, Tally,
                      run_session, stability_trace)
from .stabilizer import PllConfig

SEED_ENV = "PATHQKD_SEED"
OUTDIR_ENV = "PATHQKD_OUTDIR"

_SECTION_TYPES = {
    "channel": ChannelConfig,
    "source": SourceConfig,
    "detectors": DetectorBank,
    "pll": PllConfig,
    "security": SecurityParams,
}
_EXPERIMENT_FIELDS = ("mode", "seed", "pulses", "duration")


class ConfigError(Exception):
    """Malformed configuration; message carries field diagnostics."""


@dataclass(frozen=True)
class ExperimentConfig:
    channel: ChannelConfig
    source: SourceConfig
    detectors: DetectorBank
    pll: PllConfig
    security: SecurityParams
    mode: str = "analytic"
    seed: int = 1
    pulses: int = 10 ** 7
    duration: float | None = None

    def __post_init__(self):
        if self.mode not in ("analytic", "montecarlo"):
            raise ConfigError(f"experiment.mode: unknown mode {self.mode!r}")
        if self.pulses <= 0:
            raise ConfigError("experiment.pulses: must be positive")


def default_config() -> ExperimentConfig:
    point = linkdata.OPERATING_POINTS[0]
    return ExperimentConfig(
        channel=linkdata.reference_channel(),
        source=linkdata.source_for(point),
        detectors=linkdata.reference_detectors(),
        pll=linkdata.reference_pll(),
        security=SecurityParams(),
    )


def config_from_dict(data: dict) -> ExperimentConfig:
    base = default_config()
    fields = {}
    for section, payload in data.items():
        if section == "experiment":
            for key, value in payload.items():
                if key not in _EXPERIMENT_FIELDS:
                    raise ConfigError(f"experiment.{key}: unknown field")
                fields[key] = value
            continue
        cls = _SECTION_TYPES.get(section)
        if cls is None:
            raise ConfigError(f"{section}: unknown section")
        if not isinstance(payload, dict):
            raise ConfigError(f"{section}: expected a table of fields")
        known = {f.name for f in dataclasses.fields(cls)}
        for key in payload:
            if key not in known:
                raise ConfigError(f"{section}.{key}: unknown field")
        try:
            fields[section] = replace(getattr(base, section), **payload)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{section}: {exc}") from exc
    try:
        return replace(base, **fields)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return default_config()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def config_hash(config: ExperimentConfig) -> str:
    blob = repr(sorted(dataclasses.asdict(config).items()))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str, header: list, rows: list, config: ExperimentConfig,
              seed: int):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config={config_hash(config)} seed={seed}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _resolve_out(args, default_name: str) -> str | None:
    outdir = os.environ.get(OUTDIR_ENV)
    out = getattr(args, "out", None)
    if out:
        if outdir and not os.path.dirname(out):
            return os.path.join(outdir, out)
        return out
    if outdir:
        return os.path.join(outdir, default_name)
    return None


def _resolve_seed(args, config: ExperimentConfig) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}: not an integer") from exc
    return config.seed


def print_table(header: list, rows: list):
    cells = [[f"{v:.6g}" if isinstance(v, float) else str(v) for v in row]
             for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h)
              for i, h in enumerate(header)]
    print("  ".join(h.rjust(w) for h, w in zip(header, widths)))
    for row in cells:
        print("  ".join(c.rjust(w) for c, w in zip(row, widths)))


def _select_points(losses):
    if not losses:
        return list(linkdata.OPERATING_POINTS)
    points = []
    for loss in losses:
        match = [p for p in linkdata.OPERATING_POINTS
                 if abs(p.loss_db - loss) < 1e-6]
        if not match:
            raise ConfigError(f"no operating point at {loss} dB")
        points.extend(match)
    return points


def _point_setup(config: ExperimentConfig, point):
    ch = config.channel.with_channel_loss(point.loss_db)
    src = replace(config.source, mu1=point.mu1, mu2=point.mu2,
                  p_mu1=point.p_mu1, p_z_alice=point.p_z, p_z_bob=point.p_z)
    return ch, src


def _mc_row(config: ExperimentConfig, point, pulses: int, seed: int):
    ch, src = _point_setup(config, point)
    session = run_session(ch, src, config.detectors, config.pll,
                          n_pulses=pulses, seed=seed, d=config.security.d)
    tally = session.tally
    qber, qerr = {}, {}
    for basis in ("Z", "X"):
        for lab in ("mu1", "mu2"):
            n = tally.detected(basis, lab)
            m = tally.errors(basis, lab)
            q = m / n if n else 0.0
            qber[(basis, lab)] = q
            qerr[(basis, lab)] = math.sqrt(q * (1 - q) / n) if n else 0.0
    nz_tot = sum(tally.detected("Z", k) for k in ("mu1", "mu2"))
    rate_z = nz_tot / tally.elapsed
    rate_err = math.sqrt(nz_tot) / tally.elapsed if nz_tot else 0.0
    # rescale the observed block to the security block size
    factor = config.security.n_z_block / nz_tot
    scaled = Tally(elapsed=tally.elapsed * factor)
    for cell, c in tally.cells.items():
        scaled.cells[cell] = CellCounts(
            c.n_sent * factor, c.n_detected * factor, c.m_errors * factor)
    result = key_rate_from_tally(scaled, config.security, src,
                                 sifted_rate_z=rate_z, ec_mode="worst")
    return qber, qerr, rate_z, rate_err, result


def cmd_table1(args) -> int:
    config = load_config(args.config)
    seed = _resolve_seed(args, config)
    mode = args.mode or config.mode
    points = _select_points(args.loss)
    header = ["loss_db", "mu1", "mu2", "p_mu1", "p_z",
              "qber_z_mu1", "qber_z_mu2", "qber_x_mu1", "qber_x_mu2",
              "r_sk_bits_per_s", "block_time_s"]
    if mode == "montecarlo":
        header += ["qber_z_mu1_err", "qber_z_mu2_err", "qber_x_mu1_err",
                   "qber_x_mu2_err", "rate_z_err_hz"]
    rows = []
    for i, pt in enumerate(points):
        if mode == "analytic":
            ch, src = _point_setup(config, pt)
            result, _ = analytic_key_rate(
                ch, src, config.detectors, config.pll, config.security,
                qber_z=pt.qber_z, qber_x=pt.qber_x, ec_mode="worst")
            rows.append([pt.loss_db, pt.mu1, pt.mu2, pt.p_mu1, pt.p_z,
                         pt.qber_z["mu1"], pt.qber_z["mu2"],
                         pt.qber_x["mu1"], pt.qber_x["mu2"],
                         result.r_sk, result.block_time])
        else:
            pulses = int(float(args.pulses)) if args.pulses else config.pulses
            qber, qerr, rate_z, rate_err, result = _mc_row(
                config, pt, pulses, seed + i)
            rows.append([pt.loss_db, pt.mu1, pt.mu2, pt.p_mu1, pt.p_z,
                         qber[("Z", "mu1")], qber[("Z", "mu2")],
                         qber[("X", "mu1")], qber[("X", "mu2")],
                         result.r_sk, result.block_time,
                         qerr[("Z", "mu1")], qerr[("Z", "mu2")],
                         qerr[("X", "mu1")], qerr[("X", "mu2")], rate_err])
    pretty = [row[:9] + [row[9] / 1e3, row[10]] for row in rows]
    print_table(header[:9] + ["r_sk_kbit_per_s", "block_time_s"], pretty)
    out = _resolve_out(args, "table1.csv")
    if out:
        write_csv(out, header, rows, config, seed)
    if args.check:
        rates = [row[9] for row in rows]
        if any(b >= a for a, b in zip(rates, rates[1:])):
            print("check failed: key rate not decreasing with loss",
                  file=sys.stderr)
            return 1
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    seed = _resolve_seed(args, config)
    if not 0.0 <= args.start <= 40.0 or not 0.0 <= args.stop <= 40.0:
        raise ConfigError("sweep range must lie within [0, 40] dB")
    if args.stop < args.start or args.step <= 0:
        raise ConfigError("sweep range is empty")
    losses = []
    loss = args.start
    while loss <= args.stop + 1e-9:
        losses.append(round(loss, 6))
        loss += args.step
    header = ["loss_db", "mu1", "mu2", "p_mu1", "p_z", "qber_z", "qber_x",
              "r_sk_bits_per_s"]
    rows = []
    for loss in losses:
        ch = config.channel.with_channel_loss(loss)
        opt = optimize_params(ch, config.detectors, config.pll,
                              config.security,
                              source_template=replace(
                                  config.source, mu1=0.5, mu2=0.1))
        src = replace(config.source, mu1=opt.mu1, mu2=opt.mu2,
                      p_mu1=opt.p_mu1, p_z_alice=opt.p_z, p_z_bob=opt.p_z)
        _, rates = analytic_key_rate(ch, src, config.detectors, config.pll,
                                     config.security)
        rows.append([loss, opt.mu1, opt.mu2, opt.p_mu1, opt.p_z,
                     rates.weighted_qber("Z"), rates.weighted_qber("X"),
                     opt.result.r_sk])
    print_table(header, rows)
    out = _resolve_out(args, "sweep.csv")
    if out:
        write_csv(out, header, rows, config, seed)
    if args.check:
        rates_col = [row[7] for row in rows]
        if any(b >= a for a, b in zip(rates_col, rates_col[1:])):
            print("check failed: rate not monotone decreasing",
                  file=sys.stderr)
            return 1
        logs = [math.log10(r) for r in rates_col if r > 0]
        second = [logs[i + 1] - 2 * logs[i] + logs[i - 1]
                  for i in range(1, len(logs) - 1)]
        if any(s < -1e-6 for s in second):
            print("check failed: log-rate curve not convex in dB",
                  file=sys.stderr)
            return 1
    return 0


def cmd_stability(args) -> int:
    config = load_config(args.config)
    seed = _resolve_seed(args, config)
    try:
        trace = stability_trace(config.channel, config.source,
                                config.detectors, config.pll,
                                args.duration, seed, d=config.security.d)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    loss_times = set(trace.lock_loss_times)
    header = ["time_s", "qber", "phase_contribution", "switch_contribution",
              "lock_loss"]
    rows = [[float(t), float(q), float(p), float(s),
             int(t in loss_times)]
            for t, q, p, s in zip(trace.times, trace.qber,
                                  trace.phase_contribution,
                                  trace.switch_contribution)]
    print(f"windows={len(rows)} mean_qber={trace.mean_qber * 100:.6g}% "
          f"phase={trace.mean_phase * 100:.6g}% "
          f"switch={trace.mean_switch * 100:.6g}% "
          f"lock_losses={trace.lock_loss_count}")
    out = _resolve_out(args, "stability.csv")
    if out:
        write_csv(out, header, rows, config, seed)
    if args.check:
        recovered = 0
        for t in trace.lock_loss_times:
            later = (trace.times > t) & (trace.times <= t + 30.0)
            if np.any(trace.phase_contribution[later] < 0.06):
                recovered += 1
        if recovered != trace.lock_loss_count:
            print(f"check failed: {trace.lock_loss_count - recovered} "
                  f"lock losses unrecovered within 30 s", file=sys.stderr)
            return 1
    return 0


def _fringe_segment(config: ExperimentConfig, pol: str, modulator: bool,
                    seed: int, duration: float = 4.0, bin_s: float = 0.01,
                    ramp: float = 2 * math.pi):
    """Counts vs time while the pair phase ramps through fringes.

    The modulator applies per-symbol 0/pi phases; symbols are far faster
    than a counting bin, so the bin rate is the symbol-ensemble mean.
    Polarization sets how much modulation the reference sees.
    """
    rng = np.random.default_rng(seed)
    n_bins = int(round(duration / bin_s))
    times = (np.arange(n_bins) + 0.5) * bin_s
    drift = np.cumsum(rng.normal(
        0.0, math.sqrt(2 * config.channel.drift_rate * bin_s), n_bins))
    phases = ramp * times + drift
    applied = pml_phase(math.pi, pol) if modulator else 0.0
    counts = np.empty(n_bins, dtype=np.int64)
    for i, phi in enumerate(phases):
        raw = 0.5 * (stab_mod.raw_fringe_rate(phi, config.pll)
                     + stab_mod.raw_fringe_rate(phi + applied, config.pll))
        rate = stab_mod.saturated_rate(raw, config.pll)
        counts[i] = rng.poisson(rate * bin_s)
    return times, counts


def fringe_visibility(counts: np.ndarray, window: int) -> float:
    """Mean windowed (max - min)/(max + min) of a counts trace."""
    vis = []
    for start in range(0, len(counts) - window + 1, window):
        seg = counts[start:start + window]
        hi, lo = float(seg.max()), float(seg.min())
        if hi + lo > 0:
            vis.append((hi - lo) / (hi + lo))
    return float(np.mean(vis)) if vis else 0.0


def cmd_fringes(args) -> int:
    config = load_config(args.config)
    seed = _resolve_seed(args, config)
    pols = ("aligned", "orthogonal") if args.pol == "both" else (args.pol,)
    header = ["time_s", "polarization", "modulator", "counts"]
    ramp, bin_s = 2 * math.pi, 0.01
    window = int(round(2 * math.pi / ramp / bin_s))  # one fringe period
    rows = []
    summary = {}
    for p_i, pol in enumerate(pols):
        for m_i, modulator in enumerate((True, False)):
            times, counts = _fringe_segment(
                config, pol, modulator, seed + 10 * p_i + m_i,
                bin_s=bin_s, ramp=ramp)
            label = "on" if modulator else "off"
            rows.extend([float(t), pol, label, int(c)]
                        for t, c in zip(times, counts))
            summary[(pol, label)] = fringe_visibility(counts, window)
    for (pol, label), vis in summary.items():
        print(f"visibility {pol} modulator={label}: {vis:.6g}")
    out = _resolve_out(args, "fringes.csv")
    if out:
        write_csv(out, header, rows, config, seed)
    if args.check:
        bad = []
        for (pol, label), vis in summary.items():
            if label == "off" and vis < 0.9:
                bad.append(f"{pol}/off visibility {vis:.3f} < 0.9")
            if label == "on" and pol == "aligned" and vis > 0.2:
                bad.append(f"aligned/on visibility {vis:.3f} > 0.2")
            if label == "on" and pol == "orthogonal" and vis < 0.9:
                bad.append(f"orthogonal/on visibility {vis:.3f} < 0.9")
        if bad:
            print("check failed: " + "; ".join(bad), file=sys.stderr)
            return 1
    return 0


def cmd_optimize(args) -> int:
    config = load_config(args.config)
    seed = _resolve_seed(args, config)
    ch = config.channel if args.loss is None else \
        config.channel.with_channel_loss(args.loss)
    opt = optimize_params(ch, config.detectors, config.pll, config.security,
                          source_template=replace(
                              config.source, mu1=0.5, mu2=0.1))
    header = ["loss_db", "d", "mu1", "mu2", "p_mu1", "p_z",
              "r_sk_bits_per_s", "ell_bits", "block_time_s",
              "d0_z", "d1_z", "phi_z"]
    res = opt.result
    row = [ch.total_loss_db - ch.receiver_loss_db, config.security.d,
           opt.mu1, opt.mu2, opt.p_mu1, opt.p_z, res.r_sk, res.ell,
           res.block_time, res.bounds.d0_z, res.bounds.d1_z,
           res.bounds.phi_z]
    print_table(header, [row])
    out = _resolve_out(args, "optimize.csv")
    if out:
        write_csv(out, header, [row], config, seed)
    return 0


def read_tally_csv(path: str) -> Tally:
    rows = []
    try:
        with open(path, encoding="utf-8") as fh:
            for record in csv.reader(
                    line for line in fh if not line.startswith("#")):
                if not record or record[0] == "basis":
                    continue
                rows.append((record[0], record[1], float(record[2]),
                             float(record[3]), float(record[4]),
                             float(record[5])))
    except OSError as exc:
        raise ConfigError(f"cannot read tally: {exc}") from exc
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: malformed tally row: {exc}") from exc
    if not rows:
        raise ConfigError(f"{path}: no tally rows")
    try:
        return Tally.from_rows(rows)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def write_tally_csv(path: str, tally: Tally, config: ExperimentConfig,
                    seed: int):
    header = ["basis", "intensity", "n_sent", "n_detected", "m_errors",
              "elapsed_s"]
    write_csv(path, header, tally.to_rows(), config, seed)


def cmd_keyrate(args) -> int:
    config = load_config(args.config)
    seed = _resolve_seed(args, config)
    tally = read_tally_csv(args.tally)
    rate = args.rate
    if rate is None and tally.elapsed > 0:
        rate = sum(tally.detected("Z", k)
                   for k in ("mu1", "mu2")) / tally.elapsed
    try:
        result = key_rate_from_tally(tally, config.security, config.source,
                                     sifted_rate_z=rate, ec_mode=args.ec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    header = ["ell_bits", "r_sk_bits_per_s", "lambda_ec_bits",
              "block_time_s", "d0_z", "d1_z", "phi_z", "tau0", "tau1"]
    row = [result.ell, result.r_sk, result.lambda_ec, result.block_time,
           result.bounds.d0_z, result.bounds.d1_z, result.bounds.phi_z,
           result.bounds.tau0, result.bounds.tau1]
    print_table(header, [row])
    out = _resolve_out(args, "keyrate.csv")
    if out:
        write_csv(out, header, [row], config, seed)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pathqkd",
        description="Simulation and finite-key analysis of a "
                    "four-dimensional path-encoded decoy-state QKD link.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, check=True):
        p.add_argument("--config", help="TOML experiment config")
        p.add_argument("--seed", type=int, help="override RNG seed")
        p.add_argument("--out", help="write machine CSV here")
        if check:
            p.add_argument("--check", action="store_true",
                           help="validate invariants; non-zero exit on fail")

    p = sub.add_parser("table1", help="six-point key-rate table")
    common(p)
    p.add_argument("--mode", choices=("analytic", "montecarlo"))
    p.add_argument("--pulses", help="Monte Carlo pulses per point")
    p.add_argument("--loss", action="append", type=float,
                   help="restrict to given loss points (repeatable)")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("sweep", help="optimized rate vs loss curve")
    common(p)
    p.add_argument("--start", type=float, default=5.8)
    p.add_argument("--stop", type=float, default=25.8)
    p.add_argument("--step", type=float, default=4.0)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stability", help="windowed QBER stability run")
    common(p)
    p.add_argument("--duration", type=float, default=3600.0,
                   help="acquisition length in seconds (>= 60)")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("fringes", help="stabilization-channel fringe demo")
    common(p)
    p.add_argument("--pol", choices=("aligned", "orthogonal", "both"),
                   default="both")
    p.set_defaults(func=cmd_fringes)

    p = sub.add_parser("optimize", help="optimize source parameters")
    common(p, check=False)
    p.add_argument("--loss", type=float, help="channel loss in dB")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("keyrate", help="finite-key analysis of a tally CSV")
    common(p, check=False)
    p.add_argument("--tally", required=True, help="tally CSV path")
    p.add_argument("--rate", type=float, help="sifted Z rate in Hz")
    p.add_argument("--ec", choices=("weighted", "worst"), default="weighted")
    p.set_defaults(func=cmd_keyrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
