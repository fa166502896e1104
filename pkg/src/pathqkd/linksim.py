"""Full-link session simulation.

Couples the source (PRBS-driven basis/state/intensity choices, Poisson
photon statistics), the fiber channel, the pair stabilizers, and the
detector bank into either an event-level Monte Carlo (``run_session``) or
closed-form expectations (``expected_rates``), plus the windowed QBER
trace used for stability characterization (``stability_trace``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import channel as channel_mod
from . import stabilizer as stab_mod
from .channel import ChannelConfig
from .stabilizer import PairStabilizer, PllConfig

INTENSITY_LABELS = ("mu1", "mu2")
_CELL_ORDER = tuple(
    (b, k) for b in ("Z", "X") for k in INTENSITY_LABELS)

# Maximal-length Fibonacci LFSR taps, one entry per register order.
# Taps are 1-indexed bit positions; each step shifts right and inserts
# the XOR of the tapped bits as the new MSB, so tap 1 must be present
# for a primitive recurrence.  Each set is verified by a full-period
# cycle walk.
_LFSR_TAPS = {
    2: (2, 1), 3: (3, 1), 4: (4, 1), 5: (5, 3, 2, 1), 6: (6, 1), 7: (7, 1),
    8: (8, 3, 2, 1), 9: (9, 5, 2, 1), 10: (10, 5, 2, 1), 11: (11, 4, 2, 1),
    12: (12, 11, 3, 1), 13: (13, 3, 2, 1), 14: (14, 5, 3, 1), 15: (15, 1),
    16: (16, 5, 2, 1),
}


@dataclass(frozen=True)
class SourceConfig:
    """Transmitter settings: clock, decoy intensities, choice probabilities."""

    rep_rate: float = 5.95e8
    mu1: float = 0.19
    mu2: float = 0.15
    p_mu1: float = 0.62
    p_z_alice: float = 0.90
    p_z_bob: float = 0.90
    switch_error: float = 0.021
    prbs_order: int = 12

    def __post_init__(self):
        if not 0 < self.mu2 < self.mu1:
            raise ValueError("decoy bounds require 0 < mu2 < mu1")
        for name in ("p_mu1", "p_z_alice", "p_z_bob"):
            p = getattr(self, name)
            if not 0.0 < p < 1.0:
                raise ValueError(f"{name} must be in (0, 1)")
        if self.rep_rate <= 0:
            raise ValueError("rep_rate must be positive")
        if not 0.0 <= self.switch_error < 0.5:
            raise ValueError("switch_error must be in [0, 0.5)")
        # the four choice streams run registers of length order..order+3
        for o in range(self.prbs_order, self.prbs_order + 4):
            if o not in _LFSR_TAPS:
                raise ValueError(f"no maximal LFSR taps for order {o}")

    def intensity(self, label: str) -> float:
        if label == "mu1":
            return self.mu1
        if label == "mu2":
            return self.mu2
        raise ValueError(f"unknown intensity label {label!r}")

    def intensity_probability(self, label: str) -> float:
        return self.p_mu1 if label == "mu1" else 1.0 - self.p_mu1


@dataclass(frozen=True)
class DetectorBank:
    """Receiver SNSPD array and its uncorrelated-noise budget.

    ``leakage_rate`` is the total stabilization-laser leakage over all
    detectors; ``dark_rate`` is per detector.  ``gate_fraction`` is the
    share of uncorrelated noise accepted by the arrival-time gate.
    """

    efficiency: float = 0.85
    dark_rate: float = 100.0
    leakage_rate: float = 3.5e4
    gate_fraction: float = 0.15

    def __post_init__(self):
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must be in (0, 1]")
        if self.dark_rate < 0 or self.leakage_rate < 0:
            raise ValueError("noise rates must be >= 0")
        if not 0.0 < self.gate_fraction <= 1.0:
            raise ValueError("gate_fraction must be in (0, 1]")

    def noise_per_slot(self, rep_rate: float, d: int = 4) -> float:
        """Probability of a gated noise click anywhere in one slot."""
        total_rate = self.leakage_rate + d * self.dark_rate
        return total_rate * self.gate_fraction / rep_rate


@dataclass
class CellCounts:
    n_sent: int = 0
    n_detected: int = 0
    m_errors: int = 0


@dataclass
class Tally:
    """Per (basis, intensity) counters feeding the decoy analysis.

    ``n_sent`` partitions every emitted pulse by Alice's choice;
    ``n_detected`` and ``m_errors`` count sifted events only, so
    m_errors <= n_detected <= n_sent cell by cell.
    """

    cells: dict = field(default_factory=lambda: {
        cell: CellCounts() for cell in _CELL_ORDER})
    elapsed: float = 0.0

    def sent(self, basis: str, label: str) -> int:
        return self.cells[(basis, label)].n_sent

    def detected(self, basis: str, label: str) -> int:
        return self.cells[(basis, label)].n_detected

    def errors(self, basis: str, label: str) -> int:
        return self.cells[(basis, label)].m_errors

    def validate(self):
        for cell, c in self.cells.items():
            if not 0 <= c.m_errors <= c.n_detected <= c.n_sent:
                raise ValueError(f"inconsistent counts in cell {cell}")

    def to_rows(self) -> list[tuple]:
        return [(b, k, c.n_sent, c.n_detected, c.m_errors, self.elapsed)
                for (b, k), c in
                ((cell, self.cells[cell]) for cell in _CELL_ORDER)]

    @classmethod
    def from_rows(cls, rows) -> "Tally":
        tally = cls()
        for basis, label, n_sent, n_det, m_err, elapsed in rows:
            tally.cells[(basis, label)] = CellCounts(
                int(n_sent), int(n_det), int(m_err))
            tally.elapsed = float(elapsed)
        tally.validate()
        return tally


@dataclass(frozen=True)
class PulseEvent:
    """One emitted pulse (Monte Carlo bookkeeping record)."""

    slot: int
    basis: str
    state: int
    intensity: str
    photon_number: int


@dataclass
class SessionTelemetry:
    """Side information from a Monte Carlo session.

    ``true_single``/``true_vacuum`` count sifted Z/X detections whose
    pulse carried exactly one/zero photons (the oracle for decoy-bound
    soundness); ``discarded`` counts double-click slots.
    """

    true_single: dict = field(default_factory=lambda: {"Z": 0, "X": 0})
    true_vacuum: dict = field(default_factory=lambda: {"Z": 0, "X": 0})
    discarded: int = 0
    lock_losses: int = 0
    residual_traces: np.ndarray | None = None


@dataclass
class SessionResult:
    tally: Tally
    telemetry: SessionTelemetry


def prbs_sequence(order: int, seed: int, length: int) -> np.ndarray:
    """Maximal-length LFSR output bits (period 2^order - 1)."""
    regs = prbs_registers(order, seed, length)
    return (regs & 1).astype(np.uint8)


def prbs_registers(order: int, seed: int, length: int) -> np.ndarray:
    """LFSR register values, one per step; uniform over 1..2^order-1.

    The register walks the full nonzero range once per period, so
    thresholding it yields biased bits with bias resolution 1/(2^order-1).
    """
    if order not in _LFSR_TAPS:
        raise ValueError(f"no maximal LFSR taps for order {order}")
    period = (1 << order) - 1
    if not 0 < seed <= period:
        raise ValueError("seed must be a nonzero register value")
    taps = _LFSR_TAPS[order]
    out = np.empty(min(length, period), dtype=np.uint32)
    reg = seed
    for i in range(out.size):
        out[i] = reg
        fb = 0
        for t in taps:
            fb ^= reg >> (t - 1)
        reg = ((reg >> 1) | ((fb & 1) << (order - 1)))
    if length <= period:
        return out[:length]
    reps = -(-length // period)
    return np.tile(out, reps)[:length]


def emit_pulses(source: SourceConfig, n_pulses: int, seed: int,
                d: int = 4) -> Iterator[PulseEvent]:
    """Per-pulse event stream (diagnostic path; sessions use arrays)."""
    streams = _choice_streams(source, seed)
    rng = np.random.default_rng(_derive_seed(seed, "photons"))
    for slot in range(n_pulses):
        basis = "Z" if streams.pick("basis_a", slot) else "X"
        label = "mu1" if streams.pick("intensity", slot) else "mu2"
        state = int(streams.state(slot, d))
        photons = int(rng.poisson(source.intensity(label)))
        yield PulseEvent(slot, basis, state, label, photons)


def _derive_seed(seed: int, tag: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed & 0xFFFFFFFF,
                                   int.from_bytes(tag.encode(), "big")])


@dataclass
class _ChoiceStreams:
    """Per-choice PRBS register streams and bias thresholds.

    Each stream runs its own maximal LFSR; register lengths differ by
    one so the joint period of any stream pair far exceeds a session
    (equal-length streams are shifts of one m-sequence, which makes
    jointly thresholded choices strongly correlated).
    """

    regs: dict
    periods: dict
    thresholds: dict

    def pick(self, name: str, slots) -> np.ndarray:
        return self.regs[name][slots % self.periods[name]] \
            <= self.thresholds[name]

    def state(self, slots, d: int):
        return (self.regs["state"][slots % self.periods["state"]]
                & (d - 1)).astype(np.int64)


def _choice_streams(source: SourceConfig, seed: int) -> _ChoiceStreams:
    rng = np.random.default_rng(_derive_seed(seed, "prbs"))
    names = ("basis_a", "basis_b", "intensity", "state")
    regs, periods = {}, {}
    for i, name in enumerate(names):
        order = source.prbs_order + i
        period = (1 << order) - 1
        regs[name] = prbs_registers(
            order, int(rng.integers(1, period + 1)), period)
        periods[name] = period
    thresholds = {
        "basis_a": int(round(source.p_z_alice * periods["basis_a"])),
        "basis_b": int(round(source.p_z_bob * periods["basis_b"])),
        "intensity": int(round(source.p_mu1 * periods["intensity"])),
    }
    return _ChoiceStreams(regs, periods, thresholds)


def run_session(channel: ChannelConfig, source: SourceConfig,
                detectors: DetectorBank, pll: PllConfig,
                *, n_pulses: int | None = None,
                duration: float | None = None,
                seed: int = 0, d: int = 4,
                keep_traces: bool = False,
                chunk: int = 1 << 20) -> SessionResult:
    """Event-level Monte Carlo of one acquisition session.

    Every pulse draws basis/intensity/state from PRBS streams and a
    Poisson photon number; surviving photons are detected through the
    current pair residual phases, switch errors flip the within-pair
    outcome, and gated noise (darks, stabilization leakage, crosstalk)
    adds uncorrelated clicks.  Double-click slots are discarded.
    Deterministic for fixed (configs, seed).
    """
    if n_pulses is None:
        if duration is None or duration <= 0:
            raise ValueError("need n_pulses or a positive duration")
        n_pulses = int(round(duration * source.rep_rate))
    if n_pulses <= 0:
        raise ValueError("session must contain pulses")
    if d not in (2, 4):
        raise ValueError("dimension must be 2 or 4")

    duration_s = n_pulses / source.rep_rate
    eta_tot = channel_mod.transmittance(channel) * detectors.efficiency
    noise_any = detectors.noise_per_slot(source.rep_rate, d)
    xt_prob = channel_mod.crosstalk_leak_probability(channel)
    pair_rate = channel_mod.pair_drift_rate(channel)

    rng = np.random.default_rng(_derive_seed(seed, "session"))
    streams = _choice_streams(source, seed)

    # One stabilized residual trace per interferometer pair, rows
    # ordered (Z pair 0, Z pair 1, X pair 0, X pair 1).
    n_intervals = max(1, math.ceil(duration_s / pll.update_interval))
    traces = np.empty((4, n_intervals))
    lock_losses = 0
    for row in range(4):
        loop = PairStabilizer(pll, pair_rate, np.random.default_rng(
            _derive_seed(seed, f"pll{row}")))
        for i in range(n_intervals):
            traces[row, i] = loop.step()
        lock_losses += loop.state.lock_loss_count

    tally = Tally(elapsed=duration_s)
    telem = SessionTelemetry(
        lock_losses=lock_losses,
        residual_traces=traces if keep_traces else None)
    mu_arr = np.array([source.mu2, source.mu1])

    sent = np.zeros(4, dtype=np.int64)
    detected = np.zeros(4, dtype=np.int64)
    errors = np.zeros(4, dtype=np.int64)

    for start in range(0, n_pulses, chunk):
        slots = np.arange(start, min(start + chunk, n_pulses))
        za = streams.pick("basis_a", slots)
        zb = streams.pick("basis_b", slots)
        k1 = streams.pick("intensity", slots)
        st = streams.state(slots, d)

        photons = rng.poisson(mu_arr[k1.astype(np.intp)])
        srv = rng.binomial(photons, eta_tot)

        interval = np.minimum(
            (slots / source.rep_rate / pll.update_interval).astype(np.int64),
            n_intervals - 1)
        pair = st >> 1
        trace_row = np.where(zb, 0, 2) + pair
        delta = traces[trace_row, interval]
        p_flip = np.sin(delta / 2.0) ** 2

        det = np.full(slots.shape, -1, dtype=np.int64)
        discard = np.zeros(slots.shape, dtype=bool)
        matched = za == zb

        one = srv == 1
        m_one = one & matched
        det[m_one] = st[m_one] ^ (rng.random(int(m_one.sum()))
                                  < p_flip[m_one])
        x_one = one & ~matched
        det[x_one] = rng.integers(0, d, int(x_one.sum()))

        # multiphoton slots are rare; resolve them one by one
        for i in np.flatnonzero(srv >= 2):
            s = int(srv[i])
            if matched[i]:
                outcomes = st[i] ^ (rng.random(s) < p_flip[i])
            else:
                outcomes = rng.integers(0, d, s)
            first = outcomes[0]
            if np.all(outcomes == first):
                det[i] = first
            else:
                discard[i] = True

        has_sig = (det >= 0) & ~discard
        flip_sw = has_sig & (rng.random(slots.shape) < source.switch_error)
        det[flip_sw] ^= 1
        leak = has_sig & (rng.random(slots.shape) < xt_prob)
        det[leak] = rng.integers(0, d, int(leak.sum()))

        noisy = rng.random(slots.shape) < noise_any
        ndet = rng.integers(0, d, slots.shape)
        noise_only = noisy & ~has_sig & ~discard
        det[noise_only] = ndet[noise_only]
        clash = noisy & has_sig & (ndet != det)
        det[clash] = -1
        discard |= clash

        click = (det >= 0) & ~discard
        keep = click & matched
        err = keep & (det != st)
        cell_code = np.where(za, 0, 2) + np.where(k1, 0, 1)
        sent += np.bincount(cell_code, minlength=4)
        detected += np.bincount(cell_code[keep], minlength=4)
        errors += np.bincount(cell_code[err], minlength=4)

        for basis, mask in (("Z", zb), ("X", ~zb)):
            sifted = keep & mask
            telem.true_single[basis] += int((sifted & (photons == 1)).sum())
            telem.true_vacuum[basis] += int((sifted & (photons == 0)).sum())
        telem.discarded += int(discard.sum())

    for code, cell in enumerate(_CELL_ORDER):
        tally.cells[cell] = CellCounts(
            int(sent[code]), int(detected[code]), int(errors[code]))
    tally.validate()
    return SessionResult(tally, telem)


@dataclass(frozen=True)
class ExpectedRates:
    """Closed-form per-cell expectations and the model pieces behind them."""

    eta_tot: float
    noise_slot: float
    mean_sin2: float
    e_intrinsic: float
    pdet: dict
    sifted_rate: dict
    qber: dict
    d: int

    def sifted_rate_z(self) -> float:
        return sum(v for (b, _), v in self.sifted_rate.items() if b == "Z")

    def weighted_qber(self, basis: str) -> float:
        num = sum(self.sifted_rate[(basis, k)] * self.qber[(basis, k)]
                  for k in INTENSITY_LABELS)
        den = sum(self.sifted_rate[(basis, k)] for k in INTENSITY_LABELS)
        return num / den


def expected_rates(channel: ChannelConfig, source: SourceConfig,
                   detectors: DetectorBank, pll: PllConfig | None = None,
                   d: int = 4) -> ExpectedRates:
    """Analytic detection rates and error rates per (basis, intensity).

    Detection probability per pulse is 1 - exp(-k * eta_tot) plus the
    gated noise; the QBER mixes the intrinsic error (switch plus the
    stabilizer's mean sin^2(residual/2)) with uniform noise errors at
    weight (d-1)/d.
    """
    pll = pll or PllConfig()
    eta_tot = channel_mod.transmittance(channel) * detectors.efficiency
    noise_slot = detectors.noise_per_slot(source.rep_rate, d)
    mean_sin2 = stab_mod.expected_residual_sin2(
        pll, channel_mod.pair_drift_rate(channel))
    e_int = source.switch_error + mean_sin2
    rand_err = (d - 1) / d

    pdet, rates, qber = {}, {}, {}
    basis_prob = {
        "Z": source.p_z_alice * source.p_z_bob,
        "X": (1 - source.p_z_alice) * (1 - source.p_z_bob),
    }
    for label in INTENSITY_LABELS:
        k = source.intensity(label)
        p_click = 1.0 - math.exp(-k * eta_tot) + noise_slot
        pdet[label] = p_click
        nf = noise_slot / p_click
        q = e_int * (1.0 - nf) + rand_err * nf
        for basis in ("Z", "X"):
            rates[(basis, label)] = (source.rep_rate * basis_prob[basis]
                                     * source.intensity_probability(label)
                                     * p_click)
            qber[(basis, label)] = q
    return ExpectedRates(eta_tot, noise_slot, mean_sin2, e_int, pdet,
                         rates, qber, d)


@dataclass
class StabilityTrace:
    """Windowed QBER trace with its two physical contributions."""

    times: np.ndarray
    qber: np.ndarray
    phase_contribution: np.ndarray
    switch_contribution: np.ndarray
    lock_loss_times: list
    basis: str
    nu: float

    @property
    def mean_qber(self) -> float:
        return float(self.qber.mean())

    @property
    def mean_phase(self) -> float:
        return float(self.phase_contribution.mean())

    @property
    def mean_switch(self) -> float:
        return float(self.switch_contribution.mean())

    @property
    def lock_loss_count(self) -> int:
        return len(self.lock_loss_times)


def stability_trace(channel: ChannelConfig, source: SourceConfig,
                    detectors: DetectorBank, pll: PllConfig,
                    duration: float, seed: int = 0, *,
                    window: float = 1.0, basis: str = "X",
                    nu: float = 0.24, d: int = 4) -> StabilityTrace:
    """Continuous single-basis acquisition, windowed into QBER estimates.

    Models the standard characterization run: the receiver stays in one
    basis at a fixed mean photon number ``nu`` while both pair loops
    stabilize.  Each window reports total QBER and its split into the
    phase (stabilization residual plus noise floor) and switch parts.
    """
    if duration < 60:
        raise ValueError("stability characterization needs >= 60 s")
    if basis not in ("Z", "X"):
        raise ValueError(f"unknown basis {basis!r}")
    steps_per_window = max(1, int(round(window / pll.update_interval)))
    n_windows = int(duration / window)
    pair_rate = channel_mod.pair_drift_rate(channel)
    loops = [PairStabilizer(pll, pair_rate, np.random.default_rng(
        _derive_seed(seed, f"stab{basis}{p}"))) for p in range(d // 2)]
    rng = np.random.default_rng(_derive_seed(seed, "stabwin"))

    eta_tot = channel_mod.transmittance(channel) * detectors.efficiency
    noise_slot = detectors.noise_per_slot(source.rep_rate, d)
    p_click = 1.0 - math.exp(-nu * eta_tot) + noise_slot
    nf = noise_slot / p_click
    rand_err = (d - 1) / d
    n_per_window = source.rep_rate * window * p_click

    times = (np.arange(n_windows) + 0.5) * window
    qber = np.empty(n_windows)
    phase_c = np.empty(n_windows)
    switch_c = np.full(n_windows, source.switch_error * (1.0 - nf))
    losses = []
    for w in range(n_windows):
        sin2 = 0.0
        for loop in loops:
            before = loop.state.lock_loss_count
            for _ in range(steps_per_window):
                sin2 += math.sin(loop.step() / 2.0) ** 2
            if loop.state.lock_loss_count > before:
                losses.append(times[w])
        sin2 /= len(loops) * steps_per_window
        phase_c[w] = sin2 * (1.0 - nf) + rand_err * nf
        q = phase_c[w] + switch_c[w]
        qber[w] = rng.binomial(int(n_per_window), q) / n_per_window
    return StabilityTrace(times, qber, phase_c, switch_c, losses, basis, nu)
