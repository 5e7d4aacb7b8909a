"""Tests for channel synthesis, pilots, operators, and observations."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from risest import (
    ChannelPair,
    ClusterParams,
    MeasurementSet,
    build_grouping_matrix,
    build_measurement_operators,
    build_reflection_pattern,
    despread,
    gen_geometric_channel,
    gen_sparse_isac_channels,
    qpsk_pilots,
    raised_cosine,
    synth_observation,
    upa_steering,
)


def test_raised_cosine_center_zeros_and_symmetry():
    assert raised_cosine(0.0, 1.0) == pytest.approx(1.0)
    for k in (1, 2, 3):
        assert raised_cosine(float(k), 1.0) == pytest.approx(0.0, abs=1e-12)
    t = np.linspace(-3.5, 3.5, 29)
    np.testing.assert_allclose(raised_cosine(t, 1.0), raised_cosine(-t, 1.0),
                               atol=1e-14)
    assert raised_cosine(4.5, 1.0) == 0.0  # truncated beyond the span
    sing = 1.0 / (2.0 * 0.3)
    assert np.isfinite(raised_cosine(sing, 1.0))


@given(theta=st.floats(-3.1, 3.1), phi=st.floats(-1.5, 1.5),
       M=st.sampled_from([1, 2, 4, 6, 9, 16]))
def test_upa_steering_unit_norm(theta, phi, M):
    a = upa_steering(theta, phi, M)
    assert a.shape == (M,)
    assert abs(np.linalg.norm(a) - 1.0) <= 1e-12


def test_upa_steering_shape_override_and_errors():
    a = upa_steering(0.3, 0.1, 6, upa_shape=(6, 1))
    assert a.shape == (6,)
    with pytest.raises(ValueError, match="factor"):
        upa_steering(0.3, 0.1, 5, upa_shape=(3, 2))
    with pytest.raises(ValueError):
        upa_steering(0.3, 0.1, 0)


def _one_cluster(tau=0.0):
    return ClusterParams(azimuths=[0.0], elevations=[0.0], delays=[tau],
                         gains=[1.0 + 0.0j], pathloss=1.0)


def test_geometric_channel_unity_example():
    h = gen_geometric_channel(_one_cluster(), M=1, d=0, T_s=1.0)
    np.testing.assert_allclose(h, [1.0 + 0.0j], atol=1e-12)


def test_geometric_channel_pulse_null():
    # tau = T_s puts the pulse at p(-T_s) = 0
    h = gen_geometric_channel(_one_cluster(tau=1.0), M=4, d=0, T_s=1.0)
    np.testing.assert_allclose(h, np.zeros(4), atol=1e-12)


def test_geometric_channel_seeded_determinism():
    clusters = ClusterParams(azimuths=[0.1, -0.4], elevations=[0.2, 0.0],
                             delays=[0.0, 0.0])
    h1 = gen_geometric_channel(clusters, M=4, rng_seed=9)
    h2 = gen_geometric_channel(clusters, M=4, rng_seed=9)
    np.testing.assert_array_equal(h1, h2)


def test_geometric_channel_mean_power():
    # E||h||^2 = (M/pathloss) * L_cl for CN(0,1) gains and zero delays
    M, L_cl, draws = 2, 3, 10_000
    clusters = ClusterParams(azimuths=[0.3, -0.7, 1.1], elevations=[0.1, 0.0, -0.2],
                             delays=[0.0, 0.0, 0.0])
    total = 0.0
    for seed in range(draws):
        h = gen_geometric_channel(clusters, M=M, rng_seed=seed)
        total += float(np.vdot(h, h).real)
    assert abs(total / draws / (M * L_cl) - 1.0) < 0.03


def test_cluster_params_validation():
    with pytest.raises(ValueError, match="non-negative"):
        ClusterParams(azimuths=[0.0], elevations=[0.0], delays=[-1.0])
    with pytest.raises(ValueError, match="pathloss"):
        ClusterParams(azimuths=[0.0], elevations=[0.0], delays=[0.0], pathloss=0.0)
    with pytest.raises(ValueError, match="azimuth"):
        ClusterParams(azimuths=[4.0], elevations=[0.0], delays=[0.0])
    with pytest.raises(ValueError, match="gains"):
        ClusterParams(azimuths=[0.0], elevations=[0.0], delays=[0.0], gains=[1.0, 2.0])


def test_sparse_channels_zero_and_dense():
    pair = gen_sparse_isac_channels(4, 2, 0, 0, rng_seed=0)
    assert not np.any(pair.g_s) and not np.any(pair.g_c)
    dense = gen_sparse_isac_channels(4, 2, 10, 10, rng_seed=0)
    assert dense.g_s.shape == (10,)
    assert np.all(np.abs(dense.g_s) > 0) and np.all(np.abs(dense.g_c) > 0)


def test_sparse_channels_counts_and_determinism():
    a = gen_sparse_isac_channels(8, 3, 5, 7, rng_seed=123)
    b = gen_sparse_isac_channels(8, 3, 5, 7, rng_seed=123)
    assert a.sparsity_s == 5 and a.sparsity_c == 7
    assert int(np.sum(np.abs(a.g_s) > 0)) == 5
    np.testing.assert_array_equal(a.g_s, b.g_s)
    np.testing.assert_array_equal(a.g_c, b.g_c)


def test_sparse_channels_reject_oversparsity():
    with pytest.raises(ValueError, match="sparsities"):
        gen_sparse_isac_channels(4, 2, 11, 0)


def test_channel_pair_sparsity_declaration_checked():
    g = np.zeros(4, dtype=np.complex128)
    g[0] = 1.0
    with pytest.raises(ValueError, match="declared"):
        ChannelPair(g_s=g, g_c=g, sparsity_s=2, sparsity_c=1)


def test_qpsk_pilots_alphabet_and_determinism():
    pilots = qpsk_pilots(3, 4, rng_seed=7)
    assert len(pilots) == 3
    alphabet = np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4)))
    for s_b, z_b in pilots:
        assert s_b.shape == (4,) and z_b.shape == (4,)
        np.testing.assert_allclose(np.abs(s_b), 1.0, atol=1e-12)
        for sym in np.concatenate([s_b, z_b]):
            assert np.min(np.abs(alphabet - sym)) < 1e-12
    again = qpsk_pilots(3, 4, rng_seed=7)
    np.testing.assert_array_equal(pilots[0][0], again[0][0])


def test_operators_basis_pilot_selects_first_slab():
    M = 3
    gmap = build_grouping_matrix(4, 1, "grouping")
    s = np.zeros(M, dtype=np.complex128)
    s[0] = 1.0
    z = np.ones(M, dtype=np.complex128)
    S, _ = build_measurement_operators(gmap, [(s, z)], M)
    expected = np.hstack([np.eye(5), np.zeros((5, 10))])
    np.testing.assert_allclose(S, expected, atol=1e-14)


def test_operators_rank_of_stacked_system():
    M = 4
    gmap = build_grouping_matrix(2, 1, "grouping")
    pilots = qpsk_pilots(2, M, rng_seed=1)
    S, _ = build_measurement_operators(gmap, pilots, M)
    assert S.shape == (6, 12)
    assert np.linalg.matrix_rank(S) == min(2 * 3, 3 * M)


def test_operators_allones_pilot_row_sums():
    gmap = build_grouping_matrix(4, 2, "grouping")
    ones = np.ones(1, dtype=np.complex128)
    S, _ = build_measurement_operators(gmap, [(ones, ones)], 1)
    np.testing.assert_allclose(S.sum(axis=1).real, [1, 2, 2], atol=1e-14)


def test_operators_block_structure_and_linearity():
    M = 3
    gmap = build_grouping_matrix(6, 2, "grouping")
    pilots = qpsk_pilots(2, M, rng_seed=4)
    S, C = build_measurement_operators(gmap, pilots, M)
    T = gmap.L_Q + 1
    omega = gmap.omega.astype(np.complex128)
    for b, (s_b, z_b) in enumerate(pilots):
        np.testing.assert_allclose(S[b * T:(b + 1) * T], np.kron(s_b[None, :], omega))
        np.testing.assert_allclose(C[b * T:(b + 1) * T], np.kron(z_b[None, :], omega))
    scaled = [(2.5 * pilots[0][0], pilots[0][1])]
    S2, _ = build_measurement_operators(gmap, scaled, M)
    np.testing.assert_allclose(S2, 2.5 * S[:T], atol=1e-12)


def test_operators_reject_bad_pilots():
    gmap = build_grouping_matrix(4, 2, "grouping")
    with pytest.raises(ValueError, match="at least one"):
        build_measurement_operators(gmap, [], 2)
    with pytest.raises(ValueError, match="shape"):
        build_measurement_operators(gmap, [(np.ones(3), np.ones(2))], 2)
    with pytest.raises(TypeError):
        build_measurement_operators(np.eye(3), [(np.ones(2), np.ones(2))], 2)


def _scenario(L=4, M=2, Q=1, B=2, k_s=2, k_c=2, snr_db=10.0, seed=0):
    ss = np.random.SeedSequence(seed)
    s_ch, s_pi, s_no = ss.spawn(3)
    gmap = build_grouping_matrix(L, Q, "grouping")
    channels = gen_sparse_isac_channels(L, M, k_s, k_c, s_ch)
    pilots = qpsk_pilots(B, M, s_pi)
    ops = build_measurement_operators(gmap, pilots, M)
    return channels, gmap, pilots, ops, s_no, snr_db


def test_synth_noiseless_is_exact():
    channels, gmap, pilots, ops, s_no, _ = _scenario()
    meas = synth_observation(channels, ops, np.inf, s_no,
                             grouping=gmap, pilots=pilots)
    np.testing.assert_array_equal(meas.r, ops[0] @ channels.g_s + ops[1] @ channels.g_c)
    assert meas.gamma_e == np.inf


def test_synth_gamma_e_metadata():
    channels, gmap, pilots, ops, s_no, _ = _scenario(L=8, Q=2, snr_db=10.0)
    meas = synth_observation(channels, ops, 10.0, s_no,
                             grouping=gmap, pilots=pilots)
    assert meas.gamma_e == pytest.approx(gmap.L_Q * 10.0)
    assert meas.blocks == 2
    assert meas.snr_linear == pytest.approx(10.0)


def test_synth_zero_channel_ignores_comm_operator():
    channels, gmap, pilots, ops, _, _ = _scenario(k_c=0)
    other_pilots = [(s, 1j * z) for s, z in pilots]
    ops2 = build_measurement_operators(gmap, other_pilots, 2)
    m1 = synth_observation(channels, ops, 5.0, 42, grouping=gmap, pilots=pilots)
    m2 = synth_observation(channels, (ops[0], ops2[1]), 5.0, 42,
                           grouping=gmap, pilots=other_pilots)
    np.testing.assert_array_equal(m1.r, m2.r)


def test_synth_seeded_determinism():
    channels, gmap, pilots, ops, _, _ = _scenario()
    m1 = synth_observation(channels, ops, 0.0, 99, grouping=gmap, pilots=pilots)
    m2 = synth_observation(channels, ops, 0.0, 99, grouping=gmap, pilots=pilots)
    np.testing.assert_array_equal(m1.r, m2.r)


def test_synth_noise_variance_law():
    # zero channels: r = e with per-entry variance 1/gamma_e
    channels, gmap, pilots, ops, _, _ = _scenario(k_s=0, k_c=0)
    power = 0.0
    count = 0
    for seed in range(10_000):
        meas = synth_observation(channels, ops, 0.0, seed,
                                 grouping=gmap, pilots=pilots)
        power += float(np.vdot(meas.r, meas.r).real)
        count += meas.r.size
    gamma_e = gmap.L_Q * 1.0
    assert abs(power / count * gamma_e - 1.0) < 0.05


def test_synth_rejects_mismatched_shapes():
    channels, gmap, pilots, ops, _, _ = _scenario()
    bad = gen_sparse_isac_channels(6, 2, 2, 2, rng_seed=0)
    with pytest.raises(ValueError, match="does not match"):
        synth_observation(bad, ops, 10.0, 0, grouping=gmap, pilots=pilots)


def test_despread_roundtrip_on_synthetic_blocks():
    # noiseless: row-block b of r equals omega @ (Gs s_b + Gc z_b); spreading
    # by psi and de-spreading returns it exactly
    channels, gmap, pilots, ops, s_no, _ = _scenario(L=6, M=3, Q=2, B=2,
                                                     k_s=4, k_c=4)
    meas = synth_observation(channels, ops, np.inf, s_no,
                             grouping=gmap, pilots=pilots)
    pattern = build_reflection_pattern(gmap.L_Q, "dft")
    T = gmap.L_Q + 1
    n_el = gmap.L + 1
    Gs = channels.g_s.reshape((n_el, 3), order="F")
    Gc = channels.g_c.reshape((n_el, 3), order="F")
    omega = gmap.omega.astype(np.complex128)
    for b, (s_b, z_b) in enumerate(pilots):
        x = omega @ (Gs @ s_b + Gc @ z_b)
        np.testing.assert_allclose(meas.r[b * T:(b + 1) * T], x, atol=1e-10)
        np.testing.assert_allclose(despread(pattern.psi @ x, pattern), x, atol=1e-10)


def test_measurement_set_validation():
    r = np.zeros(4, dtype=np.complex128)
    S = np.zeros((4, 6), dtype=np.complex128)
    with pytest.raises(ValueError, match="identical shapes"):
        MeasurementSet(r=r, S=S, C=np.zeros((4, 5)), snr_linear=1.0,
                       gamma_e=1.0, blocks=1)
    with pytest.raises(ValueError, match="shape"):
        MeasurementSet(r=np.zeros(3), S=S, C=S, snr_linear=1.0,
                       gamma_e=1.0, blocks=1)
    with pytest.raises(ValueError, match="gamma_e"):
        MeasurementSet(r=r, S=S, C=S, snr_linear=1.0, gamma_e=0.0, blocks=1)
