"""Acceptance gate: one test per release criterion, stated tolerances.

Each test prints a one-line verdict (visible with -rA or -s) and encodes
the criterion at its published tolerance; nothing here is tuned to make
a red criterion pass.
"""

import math
import time

import numpy as np
import pytest

from pathqkd import linkdata
from pathqkd.cli import main
from pathqkd.keyrate import (SecurityParams, analytic_key_rate, decoy_bounds,
                             entropy_hd, finite_key_overhead, optimize_params)
from pathqkd.linksim import run_session
from pathqkd.states import (BASES, PhaseError, analyzer_matrix,
                            detection_distribution, state_vector)

PARAMS = SecurityParams()
DETECTORS = linkdata.reference_detectors()
PLL = linkdata.reference_pll()

TABLE_RATES_KBIT = (6308.0, 2585.0, 796.0, 258.0, 116.0, 22.0)

_OPT_CACHE = {}


def _optimum(loss_db, d=4):
    key = (loss_db, d)
    if key not in _OPT_CACHE:
        channel = linkdata.reference_channel().with_channel_loss(loss_db)
        params = PARAMS if d == 4 else SecurityParams(d=2)
        _OPT_CACHE[key] = optimize_params(channel, DETECTORS, PLL, params)
    return _OPT_CACHE[key]


def _table_result(point, ec_mode="worst"):
    return analytic_key_rate(
        linkdata.channel_for(point), linkdata.source_for(point),
        DETECTORS, PLL, PARAMS,
        qber_z=point.qber_z, qber_x=point.qber_x, ec_mode=ec_mode)[0]


def test_criterion_01_key_rate_table_reproduction():
    t0 = time.monotonic()
    errors = []
    for point, want in zip(linkdata.OPERATING_POINTS, TABLE_RATES_KBIT):
        got = _table_result(point).r_sk / 1e3
        errors.append((point.loss_db, want, got, (got - want) / want))
    elapsed = time.monotonic() - t0
    detail = ", ".join(f"{loss}dB {rel * 100:+.1f}%"
                       for loss, _, _, rel in errors)
    print(f"criterion 1: rate errors {detail}; {elapsed:.2f} s")
    for i, (loss, want, got, rel) in enumerate(errors):
        tol = 0.15 if i < 4 else 0.20
        assert abs(rel) <= tol, \
            f"{loss} dB: {got:.1f} vs {want} kbit/s ({rel * 100:+.1f}%)"
    assert elapsed < 10.0
    print("criterion 1: PASS")


def test_criterion_02_block_time():
    result = _table_result(linkdata.OPERATING_POINTS[0])
    print(f"criterion 2: block time {result.block_time:.2f} s (93 +- 15%)")
    assert result.block_time == pytest.approx(93.0, rel=0.15)
    print("criterion 2: PASS")


def test_criterion_03_optimizer_matches_operating_points():
    opt = _optimum(5.8)
    targets = (("mu1", opt.mu1, 0.19, 0.03), ("mu2", opt.mu2, 0.15, 0.03),
               ("p_mu1", opt.p_mu1, 0.62, 0.05), ("p_z", opt.p_z, 0.90, 0.03))
    failures = []
    for name, got, want, tol in targets:
        ok = abs(got - want) <= tol
        print(f"criterion 3: {name} = {got:.4f} "
              f"(target {want} +- {tol}) {'ok' if ok else 'OUT OF RANGE'}")
        if not ok:
            failures.append(f"{name} = {got:.4f} not in "
                            f"[{want - tol:.2f}, {want + tol:.2f}]")
    far = _optimum(25.8)
    print(f"criterion 3: p_z at 25.8 dB = {far.p_z:.4f} (<= 0.88)")
    if far.p_z > 0.88:
        failures.append(f"p_z at 25.8 dB = {far.p_z:.4f} > 0.88")
    assert not failures, "; ".join(failures)
    print("criterion 3: PASS")


def test_criterion_04_mub_and_measurement_algebra():
    t0 = time.monotonic()
    worst_mub = 0.0
    for i in range(4):
        for j in range(4):
            z = state_vector("Z", i)
            x = state_vector("X", j)
            p = abs(np.vdot(z.amplitudes, x.amplitudes)) ** 2
            worst_mub = max(worst_mub, abs(p - 0.25))
    assert worst_mub < 1e-12

    # independent oracle: permute to pair-local coordinates, apply the
    # diagonal phase error, then ideal two-port splitters
    def oracle(basis, index, deltas):
        pairs = {"Z": ((0, 2), (1, 3)), "X": ((0, 3), (1, 2))}[basis]
        perm = np.zeros((4, 4), dtype=complex)
        for p, (a, b) in enumerate(pairs):
            perm[2 * p, a] = perm[2 * p + 1, b] = 1.0
        phase = np.diag([1.0, np.exp(-1j * deltas[0]),
                         1.0, np.exp(-1j * deltas[1])])
        had = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
        split = np.zeros((4, 4), dtype=complex)
        split[:2, :2] = had
        split[2:, 2:] = had
        psi = split @ phase @ perm @ state_vector(basis, index).amplitudes
        out = np.empty(4)
        for p in range(2):
            out[2 * p] = abs(psi[2 * p]) ** 2
            out[2 * p + 1] = abs(psi[2 * p + 1]) ** 2
        return out

    worst = 0.0
    grid = np.linspace(-math.pi, math.pi, 9)
    for basis in BASES:
        for index in range(4):
            for d0 in grid:
                err = PhaseError((d0, 0.35))
                got = detection_distribution(
                    state_vector(basis, index), basis, err)
                want = oracle(basis, index, (d0, 0.35))
                worst = max(worst, float(np.max(np.abs(got - want))))
                flip = got[index ^ 1]
                delta = (d0, 0.35)[index >> 1]
                worst = max(worst,
                            abs(flip - math.sin(delta / 2.0) ** 2))
    elapsed = time.monotonic() - t0
    print(f"criterion 4: mub dev {worst_mub:.2e}, oracle dev {worst:.2e}, "
          f"{elapsed:.2f} s")
    assert worst < 1e-12
    assert elapsed < 1.0
    print("criterion 4: PASS")


def test_criterion_05_decoy_bound_soundness():
    t0 = time.monotonic()
    cfg = dict(channel=linkdata.reference_channel(),
               source=linkdata.source_for(linkdata.OPERATING_POINTS[0]),
               detectors=DETECTORS, pll=PLL)
    sound = 0
    sessions = 500
    for seed in range(sessions):
        session = run_session(n_pulses=1_000_000, seed=seed, **cfg)
        bounds = decoy_bounds(session.tally, PARAMS, cfg["source"])
        ok_single = bounds.d1_z <= session.telemetry.true_single["Z"] + 1e-9
        ok_vacuum = bounds.d0_z <= session.telemetry.true_vacuum["Z"] + 1e-9
        sound += ok_single and ok_vacuum
    elapsed = time.monotonic() - t0
    print(f"criterion 5: {sound}/{sessions} sound, {elapsed:.0f} s")
    assert sound >= 0.99 * sessions
    assert elapsed < 300.0
    print("criterion 5: PASS")


def test_criterion_06_stability_trace():
    from pathqkd.linksim import stability_trace
    t0 = time.monotonic()
    trace = stability_trace(linkdata.reference_channel(),
                            linkdata.source_for(linkdata.OPERATING_POINTS[0]),
                            DETECTORS, PLL, duration=3600.0, seed=3)
    elapsed = time.monotonic() - t0
    print(f"criterion 6: mean {trace.mean_qber * 100:.2f}% "
          f"phase {trace.mean_phase * 100:.2f}% "
          f"switch {trace.mean_switch * 100:.2f}% "
          f"losses {trace.lock_loss_count}, {elapsed:.1f} s")
    assert trace.mean_qber == pytest.approx(0.049, abs=0.010)
    assert trace.mean_phase == pytest.approx(0.028, abs=0.007)
    assert trace.mean_switch == pytest.approx(0.021, abs=0.003)
    for t in trace.lock_loss_times:
        window = (trace.times > t) & (trace.times <= t + 30.0)
        assert np.any(trace.phase_contribution[window] < 0.06), \
            f"lock loss at {t:.0f} s not recovered within 30 s"
    assert elapsed < 120.0
    print("criterion 6: PASS")


def test_criterion_07_qber_versus_loss():
    from pathqkd.linksim import expected_rates
    series = {("Z", "mu1"): [], ("Z", "mu2"): [],
              ("X", "mu1"): [], ("X", "mu2"): []}
    worst = 0.0
    for point in linkdata.OPERATING_POINTS:
        rates = expected_rates(linkdata.channel_for(point),
                               linkdata.source_for(point), DETECTORS, PLL)
        for basis in "ZX":
            table = point.qber_z if basis == "Z" else point.qber_x
            for label in ("mu1", "mu2"):
                got = rates.qber[(basis, label)]
                series[(basis, label)].append(got)
                dev = abs(got - table[label])
                worst = max(worst, dev)
                assert dev < 0.008, \
                    (f"{point.loss_db} dB {basis}/{label}: model {got:.4f} "
                     f"vs measured {table[label]:.4f}")
    for key, values in series.items():
        tail = values[2:]  # 13.8 dB upward
        assert all(a < b for a, b in zip(tail, tail[1:])), \
            f"{key}: not monotone above 13.8 dB: {tail}"
    print(f"criterion 7: worst deviation {worst * 100:.3f} pp "
          f"(< 0.8 pp), tails monotone")
    print("criterion 7: PASS")


def test_criterion_08_dimension_advantage():
    four = _optimum(5.8, d=4).result.r_sk
    two = _optimum(5.8, d=2).result.r_sk
    ratio = four / two
    target = 6.3 / 3.7
    print(f"criterion 8: 4D {four / 1e6:.2f} Mbit/s, 2D {two / 1e6:.2f} "
          f"Mbit/s, ratio {ratio:.3f} (target {target:.3f} +- 25%)")
    assert four > two
    assert ratio == pytest.approx(target, rel=0.25)
    print("criterion 8: PASS")


def test_criterion_09_entropy_and_epsilon_terms():
    assert entropy_hd(0.75, 4) == 2.0
    overhead = finite_key_overhead(PARAMS)
    print(f"criterion 9: H_4(3/4) = 2 exact, overhead {overhead:.4f} bits")
    assert overhead == pytest.approx(387.2, abs=0.1)
    print("criterion 9: PASS")


def test_criterion_10_byte_identical_reruns(tmp_path):
    runs = {
        "analytic": ["table1", "--seed", "4"],
        "mc": ["table1", "--mode", "montecarlo", "--pulses", "1000000",
               "--loss", "5.8", "--seed", "4"],
        "sweep": ["sweep", "--start", "13.8", "--stop", "13.8",
                  "--step", "4.0", "--seed", "4"],
        "stability": ["stability", "--duration", "120", "--seed", "4"],
        "fringes": ["fringes", "--seed", "4"],
        "optimize": ["optimize", "--loss", "25.8", "--seed", "4"],
    }
    for name, argv in runs.items():
        first = tmp_path / f"{name}_1.csv"
        second = tmp_path / f"{name}_2.csv"
        assert main(argv + ["--out", str(first)]) == 0
        assert main(argv + ["--out", str(second)]) == 0
        assert first.read_bytes() == second.read_bytes(), \
            f"{name}: outputs differ between identical runs"
    print(f"criterion 10: {len(runs)} commands byte-identical on rerun")
    print("criterion 10: PASS")
