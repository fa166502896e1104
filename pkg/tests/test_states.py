"""State algebra: the eight path-encoded states and their detection law.

The closed forms under test: matched-basis detection splits cos^2/sin^2
over the state's interferometer pair, mismatched-basis detection is
exactly uniform at every residual phase, and the two bases are mutually
unbiased.  The oracle rebuilds the receiver unitary from scratch
(phase layer, then balanced splitters, then the core permutation) and
propagates amplitudes numerically.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathqkd.states import (BASES, BASIS_PAIRS, CORE_INDEX, CORES,
                            PhaseError, QuditState, analyzer_matrix,
                            basis_states, detection_distribution, overlap,
                            state_vector, wrap_phase)

ATOL = 1e-12
SQ2 = 1.0 / math.sqrt(2.0)
DELTA_GRID = np.linspace(-math.pi, math.pi, 9)

finite_phase = st.floats(min_value=-8 * math.pi, max_value=8 * math.pi,
                         allow_nan=False, allow_infinity=False)


def oracle_distribution(state, measured, deltas, d=4):
    """Brute-force propagation through an independently built unitary.

    The receiver is a diagonal phase layer on each pair's second core
    followed by a balanced splitter per pair, written in pair-local
    coordinates and permuted back to core order.
    """
    perm = np.zeros((4, 4), dtype=complex)  # core order -> (a0,b0,a1,b1)
    for p, (a, b) in enumerate(BASIS_PAIRS[measured]):
        perm[2 * p, CORE_INDEX[a]] = 1.0
        perm[2 * p + 1, CORE_INDEX[b]] = 1.0
    phase = np.diag([1.0, np.exp(-1j * deltas[0]),
                     1.0, np.exp(-1j * deltas[1])])
    h = np.array([[1.0, 1.0], [1.0, -1.0]]) * SQ2
    splitters = np.zeros((4, 4), dtype=complex)
    splitters[:2, :2] = h
    splitters[2:, 2:] = h
    unitary = splitters @ phase @ perm
    amps = unitary @ state.amplitudes
    return (np.abs(amps) ** 2)[:d]


# ---------------------------------------------------------------- states


def test_core_labels_fixed():
    assert CORES == (1, 2, 5, 7)
    assert [CORE_INDEX[c] for c in CORES] == [0, 1, 2, 3]
    assert BASIS_PAIRS["Z"] == ((1, 5), (2, 7))
    assert BASIS_PAIRS["X"] == ((1, 7), (2, 5))


def test_state_table_rows():
    z0 = state_vector("Z", 0)
    assert abs(z0.amplitude(1) - SQ2) < ATOL
    assert abs(z0.amplitude(5) - SQ2) < ATOL
    assert abs(z0.amplitude(2)) < ATOL and abs(z0.amplitude(7)) < ATOL

    x1 = state_vector("X", 1)
    assert abs(x1.amplitude(1) - SQ2) < ATOL
    assert abs(x1.amplitude(7) + SQ2) < ATOL
    assert abs(x1.amplitude(2)) < ATOL and abs(x1.amplitude(5)) < ATOL


def test_states_normalized_and_canonical():
    for basis in BASES:
        for s in basis_states(basis):
            norm = np.vdot(s.amplitudes, s.amplitudes)
            assert abs(norm - 1.0) < ATOL
            lead = s.amplitudes[np.flatnonzero(
                np.abs(s.amplitudes) > ATOL)[0]]
            assert lead.real > 0 and abs(lead.imag) < ATOL


def test_bases_orthonormal():
    for basis in BASES:
        states = basis_states(basis)
        for i, a in enumerate(states):
            for j, b in enumerate(states):
                want = 1.0 if i == j else 0.0
                assert abs(overlap(a, b) - want) < ATOL


def test_mub_overlaps_one_quarter():
    for zi in basis_states("Z"):
        for xj in basis_states("X"):
            assert abs(abs(overlap(zi, xj)) ** 2 - 0.25) < ATOL


def test_state_vector_rejects_bad_arguments():
    with pytest.raises(ValueError):
        state_vector("Z", 4)
    with pytest.raises(ValueError):
        state_vector("Z", -1)
    with pytest.raises(ValueError):
        state_vector("Y", 0)
    with pytest.raises(ValueError):
        state_vector("Z", 2, d=2)
    with pytest.raises(ValueError):
        state_vector("Z", 0, d=3)


def test_quditstate_invariants_enforced():
    good = state_vector("Z", 0).amplitudes
    with pytest.raises(ValueError):  # three populated cores
        QuditState("Z", 0, np.array([0.6, 0.6, 0.52, 0.0]))
    with pytest.raises(ValueError):  # wrong magnitudes
        QuditState("Z", 0, np.array([0.9, 0.0, 0.436, 0.0]))
    with pytest.raises(ValueError):  # relative phase not 0 or pi
        QuditState("Z", 0, np.array([SQ2, 0.0, SQ2 * 1j, 0.0]))
    QuditState("Z", 0, good)  # the real thing passes


def test_phase_error_wraps():
    err = PhaseError((3 * math.pi, -3 * math.pi))
    assert all(abs(d - math.pi) < ATOL for d in err.deltas)
    assert wrap_phase(0.0) == 0.0
    assert abs(wrap_phase(2 * math.pi)) < ATOL
    assert abs(wrap_phase(math.pi) - math.pi) < ATOL
    assert abs(wrap_phase(-math.pi) - math.pi) < ATOL
    assert abs(wrap_phase(math.pi + 0.1) - (-math.pi + 0.1)) < ATOL


# ------------------------------------------------------------- detection


def test_matched_basis_is_deterministic_at_zero_delta():
    for basis in BASES:
        for idx in range(4):
            probs = detection_distribution(state_vector(basis, idx), basis)
            want = np.zeros(4)
            want[idx] = 1.0
            assert np.max(np.abs(probs - want)) < ATOL


def test_pi_delta_flips_the_pair_output():
    for basis in BASES:
        for idx in range(4):
            deltas = [0.0, 0.0]
            deltas[idx // 2] = math.pi
            probs = detection_distribution(
                state_vector(basis, idx), basis, PhaseError(tuple(deltas)))
            want = np.zeros(4)
            want[idx ^ 1] = 1.0
            assert np.max(np.abs(probs - want)) < ATOL


def test_matched_error_is_sin2_half_delta_on_grid():
    for basis in BASES:
        for idx in range(4):
            state = state_vector(basis, idx)
            for delta in DELTA_GRID:
                deltas = [0.0, 0.0]
                deltas[idx // 2] = delta
                probs = detection_distribution(
                    state, basis, PhaseError(tuple(deltas)))
                err = math.sin(delta / 2.0) ** 2
                assert abs(probs[idx] - (1.0 - err)) < ATOL
                assert abs(probs[idx ^ 1] - err) < ATOL
                other = [k for k in range(4) if k // 2 != idx // 2]
                assert all(probs[k] < ATOL for k in other)


def test_other_pair_delta_does_not_leak():
    # residual on pair 1 leaves a pair-0 state untouched
    probs = detection_distribution(state_vector("Z", 0), "Z",
                                   PhaseError((0.0, 2.1)))
    assert abs(probs[0] - 1.0) < ATOL


def test_mismatched_basis_uniform_at_any_delta():
    for basis, other in (("Z", "X"), ("X", "Z")):
        for idx in range(4):
            state = state_vector(basis, idx)
            for d0 in DELTA_GRID[::2]:
                for d1 in DELTA_GRID[::2]:
                    probs = detection_distribution(
                        state, other, PhaseError((d0, d1)))
                    assert np.max(np.abs(probs - 0.25)) < ATOL


def test_against_unitary_propagation_oracle():
    for basis in BASES:
        for measured in BASES:
            for idx in range(4):
                state = state_vector(basis, idx)
                for d0 in DELTA_GRID:
                    for d1 in DELTA_GRID:
                        probs = detection_distribution(
                            state, measured, PhaseError((d0, d1)))
                        want = oracle_distribution(state, measured, (d0, d1))
                        assert np.max(np.abs(probs - want)) < ATOL


def test_analyzer_matrix_is_unitary():
    for measured in BASES:
        mat = analyzer_matrix(measured, PhaseError((0.7, -1.3)))
        assert np.max(np.abs(mat @ mat.conj().T - np.eye(4))) < ATOL


@given(finite_phase, finite_phase)
@settings(max_examples=200, deadline=None)
def test_distribution_validity_property(d0, d1):
    err = PhaseError((d0, d1))
    for basis in BASES:
        for measured in BASES:
            probs = detection_distribution(
                state_vector(basis, 0), measured, err)
            assert np.all(probs >= -ATOL)
            assert abs(probs.sum() - 1.0) < 1e-9


@given(finite_phase)
@settings(max_examples=200, deadline=None)
def test_matched_error_closed_form_property(delta):
    probs = detection_distribution(state_vector("X", 2), "X",
                                   PhaseError((0.0, delta)))
    assert abs(probs[3] - math.sin(delta / 2.0) ** 2) < 1e-9


# ------------------------------------------------------ two-dimensional


def test_d2_restriction_uses_first_pair():
    probs = detection_distribution(state_vector("Z", 0, d=2), "Z", d=2)
    assert probs.shape == (2,)
    assert abs(probs[0] - 1.0) < ATOL
    probs = detection_distribution(
        state_vector("Z", 1, d=2), "Z", PhaseError((0.4, 0.0)), d=2)
    assert abs(probs[1] - math.cos(0.2) ** 2) < ATOL
    assert abs(probs[0] - math.sin(0.2) ** 2) < ATOL


def test_d2_rejects_states_outside_the_measured_subspace():
    # the d=2 Z analyzer spans cores (1,5); an X pair-0 state (1,7)
    # loses half its probability there, which the model refuses to hide
    with pytest.raises(ValueError):
        detection_distribution(state_vector("X", 0), "Z", d=2)
