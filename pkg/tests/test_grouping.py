"""Tests for the grouping map, reflection patterns, and de-spreading."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from risest import (
    GroupingMap,
    ReflectionPattern,
    build_grouping_matrix,
    build_reflection_pattern,
    despread,
    group_image,
)


def test_unit_group_size_gives_identity():
    gmap = build_grouping_matrix(4, 1, "grouping")
    assert gmap.L_Q == 4
    np.testing.assert_array_equal(gmap.omega, np.eye(5, dtype=np.int64))


def test_grouping_rows_cover_their_groups():
    gmap = build_grouping_matrix(4, 2, "grouping")
    omega = gmap.omega
    assert omega.shape == (3, 5)
    np.testing.assert_array_equal(omega[0], [1, 0, 0, 0, 0])
    np.testing.assert_array_equal(omega[1], [0, 1, 1, 0, 0])
    np.testing.assert_array_equal(omega[2], [0, 0, 0, 1, 1])
    np.testing.assert_array_equal(omega @ omega.T, np.diag([1, 2, 2]))


def test_puncturing_keeps_first_element_per_group():
    gmap = build_grouping_matrix(4, 2, "puncturing")
    omega = gmap.omega
    np.testing.assert_array_equal(omega[1], [0, 1, 0, 0, 0])
    np.testing.assert_array_equal(omega[2], [0, 0, 0, 1, 0])
    np.testing.assert_array_equal(omega @ omega.T, np.eye(3, dtype=np.int64))


@pytest.mark.parametrize("L, Q, mode", [
    (4, 3, "grouping"),
    (0, 1, "grouping"),
    (4, 0, "grouping"),
    (4, 2, "interleaving"),
])
def test_grouping_rejects_bad_arguments(L, Q, mode):
    with pytest.raises(ValueError):
        build_grouping_matrix(L, Q, mode)


def test_grouping_map_shape_validation():
    with pytest.raises(ValueError):
        GroupingMap(mode="grouping", L=4, Q=2, omega=np.zeros((2, 5), dtype=np.int64))


@given(Q=st.integers(1, 6), L_Q=st.integers(1, 8),
       mode=st.sampled_from(["grouping", "puncturing"]))
def test_grouping_gram_law(Q, L_Q, mode):
    L = Q * L_Q
    gmap = build_grouping_matrix(L, Q, mode)
    omega = gmap.omega
    # integer matrices: assert the gram law exactly
    expected = np.diag([1] + [Q] * L_Q) if mode == "grouping" else np.eye(L_Q + 1)
    np.testing.assert_array_equal(omega @ omega.T, expected.astype(np.int64))
    assert np.all(np.sum(omega, axis=0) <= 1)
    assert gmap.L_Q * gmap.Q == gmap.L


def test_hadamard_two_by_two():
    pattern = build_reflection_pattern(1, "hadamard")
    np.testing.assert_array_equal(pattern.psi.real, [[1, 1], [1, -1]])
    np.testing.assert_allclose(pattern.psi.conj().T @ pattern.psi, 2 * np.eye(2))


def test_dft_four_by_four():
    pattern = build_reflection_pattern(3, "dft")
    assert pattern.psi.shape == (4, 4)
    np.testing.assert_allclose(np.abs(pattern.psi), 1.0, atol=1e-12)
    np.testing.assert_allclose(pattern.psi.conj().T @ pattern.psi,
                               4 * np.eye(4), atol=1e-10)


def test_hadamard_bad_size_names_valid_sizes():
    with pytest.raises(ValueError, match="power of two"):
        build_reflection_pattern(2, "hadamard")


@pytest.mark.parametrize("L_Q, kind", [(1, "dft"), (4, "dft"), (9, "dft"),
                                       (1, "hadamard"), (3, "hadamard"),
                                       (7, "hadamard")])
def test_pattern_invariants(L_Q, kind):
    pattern = build_reflection_pattern(L_Q, kind)
    T = L_Q + 1
    psi = pattern.psi
    assert pattern.slots == T
    assert np.max(np.abs(np.abs(psi) - 1.0)) <= 1e-12
    np.testing.assert_allclose(psi.conj().T @ psi, T * np.eye(T), atol=1e-10 * T)
    np.testing.assert_allclose(psi @ psi.conj().T, T * np.eye(T), atol=1e-10 * T)


def test_pattern_validation_rejects_non_unit_modulus():
    psi = np.eye(3, dtype=np.complex128)
    with pytest.raises(ValueError, match="unit modulus"):
        ReflectionPattern(psi=2.0 * psi, kind="dft")


@pytest.mark.parametrize("kind", ["dft", "hadamard"])
def test_despread_inverts_the_pattern(kind):
    pattern = build_reflection_pattern(7, kind)
    rng = np.random.default_rng(3)
    x = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    np.testing.assert_allclose(despread(pattern.psi @ x, pattern), x, atol=1e-12)


def test_despread_hadamard_example():
    pattern = build_reflection_pattern(1, "hadamard")
    np.testing.assert_allclose(despread(np.array([2.0, 0.0]), pattern),
                               [1.0, 1.0], atol=1e-12)


def test_despread_dimension_mismatch():
    pattern = build_reflection_pattern(3, "dft")
    with pytest.raises(ValueError, match="shape"):
        despread(np.zeros(3), pattern)


def test_despread_noise_contraction_law():
    # per-entry noise variance contracts by exactly 1/(L_Q + 1); checked over
    # 1e4 trials via the linearity of despread (batch verified against the
    # public single-shot path first)
    L_Q, gamma, trials = 8, 2.0, 10_000
    T = L_Q + 1
    pattern = build_reflection_pattern(L_Q, "dft")
    rng = np.random.default_rng(11)
    noise = (rng.standard_normal((T, trials)) + 1j * rng.standard_normal((T, trials))) \
        * np.sqrt(1.0 / (2.0 * gamma))
    gram = pattern.psi.conj().T @ pattern.psi
    batch = np.linalg.solve(gram, pattern.psi.conj().T @ noise)
    for j in range(5):
        np.testing.assert_allclose(batch[:, j], despread(noise[:, j], pattern),
                                    atol=1e-12)
    var = float(np.mean(np.abs(batch) ** 2))
    assert abs(var * (L_Q + 1) * gamma - 1.0) < 0.05


def test_group_image_matches_kron_definition():
    gmap = build_grouping_matrix(4, 2, "grouping")
    rng = np.random.default_rng(5)
    M = 3
    vec = rng.standard_normal(5 * M) + 1j * rng.standard_normal(5 * M)
    big = np.kron(np.eye(M), gmap.omega) @ vec
    np.testing.assert_allclose(group_image(vec, gmap), big, atol=1e-12)


def test_group_image_identity_at_unit_group_size():
    gmap = build_grouping_matrix(6, 1, "grouping")
    rng = np.random.default_rng(6)
    vec = rng.standard_normal(7 * 2) + 1j * rng.standard_normal(7 * 2)
    np.testing.assert_array_equal(group_image(vec, gmap), vec)


def test_group_image_rejects_bad_length():
    gmap = build_grouping_matrix(4, 2, "grouping")
    with pytest.raises(ValueError, match="multiple"):
        group_image(np.zeros(7), gmap)
