"""Multicore-fiber channel model.

Per-core loss (fan-in/fan-out dominated), inter-core crosstalk treated as
an incoherent background, independent Wiener phase drift per core, an
optional VOA-style added attenuation for distance emulation, and the
polarization-selective response of the stabilization phase modulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

POLARIZATION_MODES = ("aligned", "orthogonal")


@dataclass(frozen=True)
class ChannelConfig:
    """Link budget and drift parameters of the transmission fiber.

    All used cores share ``core_loss_db`` (the lossiest core's value;
    the transmitter pre-compensates the others).  ``drift_rate`` is the
    variance growth rate of each core's Wiener phase process.
    """

    core_loss_db: float = 5.8
    crosstalk_db: float = -46.0
    extra_attenuation_db: float = 0.0
    drift_rate: float = 0.05
    receiver_loss_db: float = 2.4

    def __post_init__(self):
        if self.core_loss_db < 0 or self.receiver_loss_db < 0:
            raise ValueError("losses must be >= 0 dB of attenuation")
        if self.extra_attenuation_db < 0:
            raise ValueError("extra attenuation must be >= 0 dB")
        if not self.crosstalk_db <= -40:
            raise ValueError("crosstalk above -40 dB breaks the "
                             "incoherent-background approximation")
        if self.drift_rate < 0:
            raise ValueError("drift_rate must be >= 0")

    @property
    def total_loss_db(self) -> float:
        return (self.core_loss_db + self.extra_attenuation_db
                + self.receiver_loss_db)

    def with_channel_loss(self, loss_db: float) -> "ChannelConfig":
        """Config whose channel loss (before the receiver) is ``loss_db``.

        Loss below the physical core loss is not reachable with a VOA.
        """
        if loss_db < self.core_loss_db:
            raise ValueError(f"channel loss {loss_db} dB below the core "
                             f"loss {self.core_loss_db} dB")
        return replace(self, extra_attenuation_db=loss_db - self.core_loss_db)


@dataclass
class ChannelState:
    """Accumulated per-core phases (radians) at simulation time ``time``."""

    phases: np.ndarray = field(
        default_factory=lambda: np.zeros(4, dtype=float))
    time: float = 0.0

    def wrapped(self) -> np.ndarray:
        out = np.mod(self.phases + math.pi, 2 * math.pi)
        out[out <= 0] += 2 * math.pi
        return out - math.pi


def advance(state: ChannelState, dt: float, drift_rate: float,
            rng: np.random.Generator) -> ChannelState:
    """Evolve the core phases by one Wiener increment over ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    sigma = math.sqrt(drift_rate * dt)
    increments = rng.normal(0.0, sigma, size=state.phases.shape)
    return ChannelState(state.phases + increments, state.time + dt)


def transmittance(config: ChannelConfig) -> float:
    """End-to-end survival probability of a photon entering a used core."""
    return 10.0 ** (-config.total_loss_db / 10.0)


def crosstalk_leak_probability(config: ChannelConfig) -> float:
    """Per-pulse probability that a photon appears in a non-addressed core."""
    if math.isinf(config.crosstalk_db):
        return 0.0
    return 10.0 ** (config.crosstalk_db / 10.0)


def pml_phase(command_phase: float, pol: str, extinction: float = 0.02) -> float:
    """Phase actually imparted by the modulator for a given polarization.

    The stabilization signal travels orthogonally to the modulation axis,
    so it sees only a residual ``extinction`` fraction of the commanded
    phase; the quantum signal (aligned) sees all of it.
    """
    if pol not in POLARIZATION_MODES:
        raise ValueError(f"unknown polarization mode {pol!r}")
    if not 0.0 <= extinction <= 1.0:
        raise ValueError("extinction must be in [0, 1]")
    if pol == "aligned":
        return command_phase
    return extinction * command_phase


def pair_drift_rate(config: ChannelConfig) -> float:
    """Variance rate of an interferometer pair's phase difference.

    Two independent cores contribute, so the pair rate is twice the
    per-core rate.
    """
    return 2.0 * config.drift_rate
