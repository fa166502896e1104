"""Path-encoded qudit states and interferometric detection.

The transmitter encodes one of eight states on four cores of a multicore
fiber, labelled 1, 2, 5 and 7.  Each state is an equal superposition of
two cores with a relative phase of 0 or pi, arranged in two mutually
unbiased bases:

    Z: (|1> + |5>)/sqrt2, (|1> - |5>)/sqrt2, (|2> + |7>)/sqrt2, (|2> - |7>)/sqrt2
    X: (|1> + |7>)/sqrt2, (|1> - |7>)/sqrt2, (|2> + |5>)/sqrt2, (|2> - |5>)/sqrt2

The receiver measures a basis with two core-pair interferometers; a
residual phase delta on a pair sends sin^2(delta/2) of the correct
detector's probability to the paired wrong detector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CORES = (1, 2, 5, 7)
CORE_INDEX = {1: 0, 2: 1, 5: 2, 7: 3}

# Interferometer pairs per basis, in detector order: states 2p and 2p+1
# are the +/- outputs of pair p.
BASIS_PAIRS = {
    "Z": ((1, 5), (2, 7)),
    "X": ((1, 7), (2, 5)),
}

BASES = ("Z", "X")

_ATOL = 1e-12


def _check_basis(basis: str) -> str:
    if basis not in BASES:
        raise ValueError(f"unknown basis {basis!r}; expected one of {BASES}")
    return basis


def _check_dimension(d: int) -> int:
    if d not in (2, 4):
        raise ValueError(f"dimension must be 2 or 4, got {d}")
    return d


def canonicalize(amplitudes: np.ndarray) -> np.ndarray:
    """Remove the global phase: lowest populated core made positive real."""
    amps = np.asarray(amplitudes, dtype=complex)
    for a in amps:
        if abs(a) > _ATOL:
            return amps * (a.conjugate() / abs(a))
    return amps


@dataclass(frozen=True)
class QuditState:
    """One of the eight protocol states, as amplitudes over the four cores.

    ``amplitudes[CORE_INDEX[c]]`` is the amplitude on core ``c``.  The
    global phase is canonical: the populated core with the lowest label
    carries a positive real amplitude.
    """

    basis: str
    index: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        _check_basis(self.basis)
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (4,):
            raise ValueError("amplitudes must cover the four cores")
        populated = np.flatnonzero(np.abs(amps) > _ATOL)
        if len(populated) != 2:
            raise ValueError("exactly two cores must carry amplitude")
        if not np.allclose(np.abs(amps[populated]), 1 / math.sqrt(2),
                           atol=_ATOL):
            raise ValueError("populated amplitudes must have magnitude 1/sqrt2")
        if abs(np.vdot(amps, amps) - 1.0) > _ATOL:
            raise ValueError("state must be normalized")
        rel = amps[populated[1]] / amps[populated[0]]
        if min(abs(rel - 1.0), abs(rel + 1.0)) > 1e-9:
            raise ValueError("relative phase must be 0 or pi")
        object.__setattr__(self, "amplitudes", amps)

    def amplitude(self, core: int) -> complex:
        return complex(self.amplitudes[CORE_INDEX[core]])


@dataclass(frozen=True)
class PhaseError:
    """Residual interferometer phases, one per pair of the measured basis.

    Wrapped to (-pi, pi] on construction.
    """

    deltas: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        wrapped = tuple(wrap_phase(float(d)) for d in self.deltas)
        object.__setattr__(self, "deltas", wrapped)


def wrap_phase(phi: float) -> float:
    """Wrap to (-pi, pi]."""
    out = math.fmod(phi + math.pi, 2 * math.pi)
    if out <= 0:
        out += 2 * math.pi
    return out - math.pi


def state_vector(basis: str, index: int, d: int = 4) -> QuditState:
    """The protocol state ``index`` of ``basis``.

    Indices follow detector order: 2p selects the + superposition of pair
    p, 2p+1 the - superposition.  In the two-dimensional mode (d=2) only
    the first pair's states (indices 0 and 1) exist.
    """
    _check_basis(basis)
    _check_dimension(d)
    if not 0 <= index < d:
        raise ValueError(f"state index {index} out of range for d={d}")
    a, b = BASIS_PAIRS[basis][index // 2]
    sign = 1.0 if index % 2 == 0 else -1.0
    amps = np.zeros(4, dtype=complex)
    amps[CORE_INDEX[a]] = 1 / math.sqrt(2)
    amps[CORE_INDEX[b]] = sign / math.sqrt(2)
    return QuditState(basis, index, canonicalize(amps))


def basis_states(basis: str, d: int = 4) -> list[QuditState]:
    return [state_vector(basis, i, d) for i in range(d)]


def overlap(a: QuditState, b: QuditState) -> complex:
    """Inner product <a|b> over the four cores."""
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def analyzer_matrix(measured: str, err: PhaseError | None = None,
                    d: int = 4) -> np.ndarray:
    """Receiver unitary: row j is the bra of detector j.

    Each pair (a, b) feeds a balanced splitter whose arm b picks up the
    pair's residual phase, so detection amplitudes are
    (psi_a +/- e^{i delta} psi_b)/sqrt2.
    """
    _check_basis(measured)
    _check_dimension(d)
    err = err or PhaseError()
    rows = []
    for p, (a, b) in enumerate(BASIS_PAIRS[measured][: d // 2]):
        phase = np.exp(-1j * err.deltas[p])
        for sign in (1.0, -1.0):
            row = np.zeros(4, dtype=complex)
            row[CORE_INDEX[a]] = 1 / math.sqrt(2)
            row[CORE_INDEX[b]] = sign * phase / math.sqrt(2)
            rows.append(row)
    return np.array(rows)


def detection_distribution(state: QuditState, measured: str,
                           err: PhaseError | None = None,
                           d: int = 4) -> np.ndarray:
    """Probability of each detector clicking for a single photon.

    Matched basis with residual delta on the state's pair yields
    cos^2(delta/2) on the correct detector and sin^2(delta/2) on its
    pair partner; a mismatched basis yields the uniform distribution.
    For d=4 the output has four entries; for d=2, two.
    """
    amps = analyzer_matrix(measured, err, d) @ state.amplitudes
    probs = np.abs(amps) ** 2
    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        # d=2 measurement of a state outside the pair-0 subspace would
        # lose probability; the two-dimensional protocol never does this.
        raise ValueError("state not measurable in the requested dimension")
    return probs
