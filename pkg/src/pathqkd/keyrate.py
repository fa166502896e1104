"""Finite-key security analysis for the one-decoy protocol.

Vacuum/single-photon lower bounds and the phase-error upper bound follow
the standard one-decoy finite-key treatment (Hoeffding deviations at the
19/eps_sec quantile family), generalized to dimension d; the secret key
length combines them with the high-dimensional entropy and the
error-correction leak.  All operations are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .channel import ChannelConfig
from .stabilizer import PllConfig
from .linksim import (DetectorBank, ExpectedRates, INTENSITY_LABELS,
                      SourceConfig, CellCounts, Tally, expected_rates)

LOG2 = math.log2


@dataclass(frozen=True)
class SecurityParams:
    """Block size, epsilon budget, and entropy dimension of the analysis."""

    n_z_block: int = 10 ** 9
    eps_sec: float = 1e-15
    eps_cor: float = 1e-15
    f_ec: float = 1.15
    d: int = 4

    def __post_init__(self):
        for name in ("eps_sec", "eps_cor"):
            e = getattr(self, name)
            if not 0.0 < e < 1.0:
                raise ValueError(f"{name} must be in (0, 1)")
        if self.n_z_block < 10 ** 4:
            raise ValueError("block must hold at least 1e4 sifted bits")
        if self.f_ec < 1.0:
            raise ValueError("error-correction efficiency is >= 1")
        if self.d not in (2, 4):
            raise ValueError("dimension must be 2 or 4")


@dataclass(frozen=True)
class DecoyBounds:
    """One-decoy bounds per block: vacuum/single lower, phase-error upper."""

    d0_z: float
    d1_z: float
    phi_z: float
    tau0: float
    tau1: float
    s1_x: float = 0.0
    v1_x: float = 0.0
    clamped: bool = False

    def __post_init__(self):
        if self.d0_z < 0 or self.d1_z < 0:
            raise ValueError("event bounds must be >= 0")
        if not 0.0 <= self.phi_z <= 1.0:
            raise ValueError("phase error must be in [0, 1]")


@dataclass(frozen=True)
class KeyRateResult:
    ell: float
    r_sk: float
    lambda_ec: float
    block_time: float
    bounds: DecoyBounds


def tau_n(n: int, mu1: float, mu2: float, p_mu1: float) -> float:
    """Poisson mixture weight of photon number n over the two intensities."""
    if n < 0:
        raise ValueError("photon number must be >= 0")
    fact = math.factorial(n)
    return sum(p * math.exp(-k) * k ** n / fact
               for k, p in ((mu1, p_mu1), (mu2, 1.0 - p_mu1)))


def entropy_hd(x: float, d: int) -> float:
    """High-dimensional entropy H_d(x) in bits; domain [0, 1 - 1/d]."""
    if not 0.0 <= x <= 1.0 - 1.0 / d:
        raise ValueError(f"error rate {x} outside [0, {1 - 1/d}]")
    if x == 0.0:
        return 0.0
    return -x * LOG2(x / (d - 1)) - (1.0 - x) * LOG2(1.0 - x)


def _hd(x: float, d: int) -> float:
    # internal: clamp instead of raising, for already-bounded quantities
    return entropy_hd(min(max(x, 0.0), 1.0 - 1.0 / d), d)


def hoeffding_delta(n_total: float, eps_sec: float) -> float:
    """One-sided count deviation sqrt((n/2) ln(19/eps)) at the decoy quantile."""
    return math.sqrt(n_total / 2.0 * math.log(19.0 / eps_sec))


def finite_size_counts(n_observed: float, k: float, p_k: float,
                       n_total: float, eps_sec: float) -> tuple[float, float]:
    """Scaled finite-size count interval (e^k/p_k)(n -+ delta), lower >= 0."""
    if n_observed < 0:
        raise ValueError("counts must be >= 0")
    delta = hoeffding_delta(n_total, eps_sec)
    scale = math.exp(k) / p_k
    return scale * max(n_observed - delta, 0.0), scale * (n_observed + delta)


def finite_key_overhead(params: SecurityParams) -> float:
    """Epsilon cost (bits) of privacy amplification plus correctness check."""
    return (6.0 * LOG2(19.0 * params.d / params.eps_sec)
            + LOG2(2.0 / params.eps_cor))


def gamma_correction(eps: float, b: float, c: float, d: float) -> float:
    """Fluctuation penalty for extrapolating the X phase error onto Z."""
    if b <= 0.0 or b >= 1.0 or c <= 0.0 or d <= 0.0:
        return 0.0
    t = (c + d) * (1.0 - b) * b / (c * d * math.log(2.0))
    arg = (c + d) / (c * d * (1.0 - b) * b) * (21.0 / eps) ** 2
    return math.sqrt(t * LOG2(arg))


def _decoy_core(n: dict, m: dict, n_tot: float, m_tot: float,
                source: SourceConfig, d: int, eps_sec: float,
                asymptotic: bool) -> tuple[float, float, float, bool]:
    """One-basis decoy extraction: (s0, s1, v1, clamped).

    Count deviations use the basis-total pools; the error-count deviation
    takes the union of both pools (strictly conservative).
    """
    mu1, mu2, p1 = source.mu1, source.mu2, source.p_mu1
    pk = {"mu1": p1, "mu2": 1.0 - p1}
    if asymptotic:
        dn = dm = 0.0
    else:
        dn = hoeffding_delta(n_tot, eps_sec)
        dm = dn + hoeffding_delta(m_tot, eps_sec)

    def scaled(counts, label, dev):
        s = math.exp(source.intensity(label)) / pk[label]
        return s * max(counts[label] - dev, 0.0), s * (counts[label] + dev)

    _, n1p = scaled(n, "mu1", dn)
    n2m, _ = scaled(n, "mu2", dn)
    _, m1p = scaled(m, "mu1", dm)
    m2m, _ = scaled(m, "mu2", dm)

    tau0 = tau_n(0, mu1, mu2, p1)
    tau1 = tau_n(1, mu1, mu2, p1)
    s0 = tau0 * (mu1 * n2m - mu2 * n1p) / (mu1 - mu2)
    s0_up = d / (d - 1.0) * (m_tot + dm)
    s1 = tau1 * mu1 / (mu2 * (mu1 - mu2)) * (
        n2m - (mu2 / mu1) ** 2 * n1p
        - (mu1 ** 2 - mu2 ** 2) / mu1 ** 2 * (s0_up / tau0))
    v1 = tau1 * (m1p - m2m) / (mu1 - mu2)
    clamped = s0 < 0.0 or s1 < 0.0
    return max(s0, 0.0), max(s1, 0.0), v1, clamped


def _basis_counts(tally: Tally, basis: str) -> tuple[dict, dict]:
    n = {k: tally.detected(basis, k) for k in INTENSITY_LABELS}
    m = {k: tally.errors(basis, k) for k in INTENSITY_LABELS}
    return n, m


def decoy_bounds(tally: Tally, params: SecurityParams,
                 source: SourceConfig, *,
                 asymptotic: bool = False) -> DecoyBounds:
    """One-decoy bounds from a two-basis tally.

    Z-basis counts bound the vacuum and single-photon events; the
    single-photon error rate observed in X, plus a fluctuation penalty
    for carrying it over to Z, upper-bounds the phase error.
    """
    if source.mu1 <= source.mu2:
        raise ValueError("decoy extraction requires mu1 > mu2")
    n_z, m_z = _basis_counts(tally, "Z")
    n_x, m_x = _basis_counts(tally, "X")
    nz_tot, nx_tot = sum(n_z.values()), sum(n_x.values())
    if nz_tot <= 0 or nx_tot <= 0:
        raise ValueError("decoy extraction requires detections in both bases")
    d, eps = params.d, params.eps_sec

    s0z, s1z, _, cl_z = _decoy_core(
        n_z, m_z, nz_tot, sum(m_z.values()), source, d, eps, asymptotic)
    _, s1x, v1x, cl_x = _decoy_core(
        n_x, m_x, nx_tot, sum(m_x.values()), source, d, eps, asymptotic)

    top = 1.0 - 1.0 / d
    if s1x <= 0.0 or s1z <= 0.0:
        phi = top
    else:
        phi = v1x / s1x
        if not asymptotic:
            phi += gamma_correction(eps, min(phi, top), s1x, s1z)
        phi = min(max(phi, 0.0), top)
    return DecoyBounds(s0z, s1z, phi, tau_n(0, source.mu1, source.mu2,
                                            source.p_mu1),
                       tau_n(1, source.mu1, source.mu2, source.p_mu1),
                       s1_x=s1x, v1_x=v1x, clamped=cl_z or cl_x)


def secret_key_length(bounds: DecoyBounds, qber_z: float,
                      params: SecurityParams, *,
                      sifted_rate_z: float | None = None) -> KeyRateResult:
    """Secret key length per block and, given the sifted rate, bits/s.

    l = log2(d) D0 + D1 (log2(d) - H_d(phi)) - lambda_EC - eps terms,
    clamped at zero.
    """
    if not 0.0 <= qber_z <= 1.0 - 1.0 / params.d:
        raise ValueError(f"qber_z {qber_z} outside [0, {1 - 1/params.d}]")
    d = params.d
    lam = params.f_ec * params.n_z_block * entropy_hd(qber_z, d)
    ell = (LOG2(d) * bounds.d0_z
           + bounds.d1_z * (LOG2(d) - _hd(bounds.phi_z, d))
           - lam - finite_key_overhead(params))
    ell = max(ell, 0.0)
    if sifted_rate_z is None or sifted_rate_z <= 0:
        return KeyRateResult(ell, 0.0, lam, math.inf, bounds)
    block_time = params.n_z_block / sifted_rate_z
    return KeyRateResult(ell, ell / block_time, lam, block_time, bounds)


def ec_qber(tally: Tally, params: SecurityParams,
            mode: str = "weighted") -> float:
    """QBER fed to the error-correction leak.

    "weighted": detection-weighted mean over intensities (default);
    "worst": worst per-intensity rate at its upper Hoeffding bound,
    provisioning the leak for the unluckier sub-block.
    """
    n_z, m_z = _basis_counts(tally, "Z")
    top = 1.0 - 1.0 / params.d
    if mode == "weighted":
        return min(sum(m_z.values()) / sum(n_z.values()), top)
    if mode == "worst":
        q = max((m_z[k] + hoeffding_delta(n_z[k], params.eps_sec)) / n_z[k]
                for k in INTENSITY_LABELS)
        return min(q, top)
    raise ValueError(f"unknown ec mode {mode!r}")


def key_rate_from_tally(tally: Tally, params: SecurityParams,
                        source: SourceConfig, *,
                        sifted_rate_z: float | None = None,
                        ec_mode: str = "weighted",
                        asymptotic: bool = False) -> KeyRateResult:
    """Full extraction from a tally: decoy bounds, EC leak, key length.

    The privacy-amplification block is the tally's sifted-Z size, so a
    raw Monte Carlo tally is analyzed at its own statistics.
    """
    n_z, _ = _basis_counts(tally, "Z")
    block = int(round(sum(n_z.values())))
    params_eff = params if block == params.n_z_block else \
        replace(params, n_z_block=block)
    bounds = decoy_bounds(tally, params_eff, source, asymptotic=asymptotic)
    q_ec = ec_qber(tally, params_eff, ec_mode)
    return secret_key_length(bounds, q_ec, params_eff,
                             sifted_rate_z=sifted_rate_z)


def expected_tally(channel: ChannelConfig, source: SourceConfig,
                   detectors: DetectorBank, pll: PllConfig,
                   params: SecurityParams, *,
                   qber_z: dict | None = None,
                   qber_x: dict | None = None
                   ) -> tuple[Tally, ExpectedRates]:
    """Analytic tally scaled to one privacy-amplification block.

    Cell counts follow the closed-form rate model; measured per-intensity
    QBERs may override the model's error rates (keyed by intensity label).
    """
    rates = expected_rates(channel, source, detectors, pll, params.d)
    rate_z = rates.sifted_rate_z()
    n_pulses = params.n_z_block / rate_z * source.rep_rate
    tally = Tally(elapsed=params.n_z_block / rate_z)
    for basis in ("Z", "X"):
        p_alice = source.p_z_alice if basis == "Z" else 1 - source.p_z_alice
        override = qber_z if basis == "Z" else qber_x
        for label in INTENSITY_LABELS:
            sent = n_pulses * p_alice * source.intensity_probability(label)
            det = params.n_z_block * rates.sifted_rate[(basis, label)] / rate_z
            q = rates.qber[(basis, label)] if override is None \
                else override[label]
            tally.cells[(basis, label)] = CellCounts(sent, det, q * det)
    tally.validate()
    return tally, rates


def analytic_key_rate(channel: ChannelConfig, source: SourceConfig,
                      detectors: DetectorBank, pll: PllConfig,
                      params: SecurityParams, *,
                      qber_z: dict | None = None,
                      qber_x: dict | None = None,
                      ec_mode: str = "weighted",
                      asymptotic: bool = False
                      ) -> tuple[KeyRateResult, ExpectedRates]:
    """Closed-form pipeline: rate model -> decoy bounds -> key length."""
    tally, rates = expected_tally(channel, source, detectors, pll, params,
                                  qber_z=qber_z, qber_x=qber_x)
    result = key_rate_from_tally(tally, params, source,
                                 sifted_rate_z=rates.sifted_rate_z(),
                                 ec_mode=ec_mode, asymptotic=asymptotic)
    return result, rates


@dataclass(frozen=True)
class OptimizeResult:
    mu1: float
    mu2: float
    p_mu1: float
    p_z: float
    result: KeyRateResult

    @property
    def params_tuple(self) -> tuple[float, float, float, float]:
        return (self.mu1, self.mu2, self.p_mu1, self.p_z)


def _grid(lo: float, hi: float, step: float) -> list[float]:
    n = int(round((hi - lo) / step))
    return [round(lo + i * step, 6) for i in range(n + 1)]


def _refine_axis(center: float, step: float, lo: float, hi: float
                 ) -> list[float]:
    vals = {round(min(max(center + j * step, lo), hi), 6)
            for j in range(-2, 3)}
    return sorted(vals)


def optimize_params(channel: ChannelConfig, detectors: DetectorBank,
                    pll: PllConfig, params: SecurityParams, *,
                    source_template: SourceConfig | None = None,
                    mu_bounds: tuple = (0.04, 0.55),
                    p1_bounds: tuple = (0.50, 0.86),
                    pz_bounds: tuple = (0.82, 0.96),
                    ec_mode: str = "weighted",
                    refinements: int = 2) -> OptimizeResult:
    """Maximize r_sk over (mu1, mu2, p_mu1, p_z).

    Coarse grid search followed by halving local refinements; the
    clamped objective is non-smooth at the zero-key boundary, so the
    search is derivative-free.  Deterministic: ties resolve to the
    lexicographically smallest parameter tuple.  A d=2 link drives a
    single interferometric pair, so its template carries no
    pair-routing switch error unless one is given explicitly.
    """
    if source_template is None:
        source_template = SourceConfig(
            switch_error=0.021 if params.d == 4 else 0.0)

    def evaluate(mu1, mu2, p1, pz):
        if mu2 >= mu1 or mu1 + mu2 >= 1.0:
            return None
        src = replace(source_template, mu1=mu1, mu2=mu2, p_mu1=p1,
                      p_z_alice=pz, p_z_bob=pz)
        result, _ = analytic_key_rate(channel, src, detectors, pll, params,
                                      ec_mode=ec_mode)
        return result

    best_r = -1.0
    best = None
    axes = (_grid(*mu_bounds, 0.03), _grid(*mu_bounds, 0.03),
            _grid(*p1_bounds, 0.04), _grid(*pz_bounds, 0.02))
    steps = (0.03, 0.03, 0.04, 0.02)
    for round_i in range(refinements + 1):
        if round_i > 0:
            steps = tuple(s / 2.0 for s in steps)
            bounds = (mu_bounds, mu_bounds, p1_bounds, pz_bounds)
            axes = tuple(_refine_axis(c, s, *b)
                         for c, s, b in zip(best, steps, bounds))
        for mu1 in axes[0]:
            for mu2 in axes[1]:
                for p1 in axes[2]:
                    for pz in axes[3]:
                        res = evaluate(mu1, mu2, p1, pz)
                        if res is not None and res.r_sk > best_r:
                            best_r = res.r_sk
                            best = (mu1, mu2, p1, pz)
    if best is None or best_r <= 0.0:
        zero = secret_key_length(
            DecoyBounds(0.0, 0.0, 1.0 - 1.0 / params.d, 1.0, 0.0),
            0.0, params)
        mid = tuple(0.5 * (b[0] + b[1])
                    for b in (mu_bounds, mu_bounds, p1_bounds, pz_bounds))
        return OptimizeResult(*mid, zero)
    final = evaluate(*best)
    return OptimizeResult(*best, final)
