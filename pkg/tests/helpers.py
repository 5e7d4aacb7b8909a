"""Shared scenario builders for the test suite."""

import numpy as np

from risest import (
    EstimatorConfig,
    build_grouping_matrix,
    build_measurement_operators,
    gen_sparse_isac_channels,
    group_image,
    nmse,
    qpsk_pilots,
    synth_observation,
)


def make_trial(L, M, Q, B, k_s, k_c, snr_db, seed):
    """One seeded benchmark scenario: (channels, grouping, measurements)."""
    ss = np.random.SeedSequence(seed)
    s_ch, s_pi, s_no = ss.spawn(3)
    gmap = build_grouping_matrix(L, Q, "grouping")
    channels = gen_sparse_isac_channels(L, M, k_s, k_c, s_ch)
    pilots = qpsk_pilots(B, M, s_pi)
    ops = build_measurement_operators(gmap, pilots, M)
    meas = synth_observation(channels, ops, snr_db, s_no,
                             grouping=gmap, pilots=pilots)
    return channels, gmap, meas


def noise_cfg(meas, **kw):
    """Noise-informed estimator config mirroring the sweep harness defaults."""
    gi = 1.0 / np.sqrt(meas.gamma_e) if np.isfinite(meas.gamma_e) else 1e-12
    gi = max(gi, 1e-12)
    kw.setdefault("eta", float(np.sqrt(meas.blocks)))
    kw.setdefault("epsilon", 0.1)
    kw.setdefault("gamma_floor", max(0.8 * gi, 1e-12))
    return EstimatorConfig(gamma_init=gi, **kw)


def gnmse(est, truth, grouping):
    """NMSE on the group image, the identifiable domain when Q > 1."""
    return nmse(group_image(est, grouping), group_image(truth, grouping))
