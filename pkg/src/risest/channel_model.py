"""Synthetic channel and measurement generation.

Two channel sources are provided: a geometric cluster model (per-cluster gain,
delay, azimuth/elevation on a half-wavelength uniform planar array, shaped by a
raised-cosine pulse) for realism studies, and a direct sparse generator (uniform
support, CN(0,1) entries) which is the benchmark default since sparsity is the
estimator's working premise.

Measurements follow the de-spread block model

    r = S g_s + C g_c + e,    S = stack_b(s_b^T (x) omega),
                              C = stack_b(z_b^T (x) omega),

with g = vec(G_tilde) in column-major order over the (L+1) x M augmented
channel matrices, s_b/z_b the per-block sensing/communication pilots, and e
circular complex Gaussian with per-entry variance 1/gamma_e, gamma_e = L_Q*gamma
(gamma the linear SNR). Here gamma_e plays the role of the de-spread SNR; the
estimator module uses the same symbol for the residual RMS, which is a noise
standard deviation - the two are related but not the same quantity.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .grouping import GroupingMap

__all__ = [
    "ClusterParams",
    "ChannelPair",
    "MeasurementSet",
    "raised_cosine",
    "upa_steering",
    "gen_geometric_channel",
    "gen_sparse_isac_channels",
    "qpsk_pilots",
    "build_measurement_operators",
    "synth_observation",
]


@dataclass(frozen=True)
class ClusterParams:
    """Geometric cluster parameters for one link.

    gains may be None, in which case gen_geometric_channel draws CN(0,1)
    gains from its seed. Angles are radians; delays seconds; pathloss > 0.
    pulse is a callable p(t_seconds, T_s) with p(0) = 1.
    """

    azimuths: np.ndarray
    elevations: np.ndarray
    delays: np.ndarray
    gains: np.ndarray | None = None
    pathloss: float = 1.0
    pulse: object = None  # defaults to raised_cosine

    @property
    def count(self):
        return len(self.delays)

    def __post_init__(self):
        az = np.asarray(self.azimuths, dtype=float)
        el = np.asarray(self.elevations, dtype=float)
        de = np.asarray(self.delays, dtype=float)
        if not (az.shape == el.shape == de.shape) or az.ndim != 1 or az.size == 0:
            raise ValueError("azimuths, elevations, delays must be equal-length nonempty 1-D")
        if np.any(de < 0):
            raise ValueError("delays must be non-negative")
        if not self.pathloss > 0:
            raise ValueError(f"pathloss must be > 0, got {self.pathloss}")
        if np.any(az < -np.pi) or np.any(az >= np.pi):
            raise ValueError("azimuths must lie in [-pi, pi)")
        if np.any(el < -np.pi / 2) or np.any(el > np.pi / 2):
            raise ValueError("elevations must lie in [-pi/2, pi/2]")
        if self.gains is not None and len(np.asarray(self.gains)) != de.size:
            raise ValueError("gains must match the number of clusters")


@dataclass(frozen=True)
class ChannelPair:
    """Vectorized augmented sensing/communication channels.

    g_s = vec([d^H; diag(w) A]) and g_c = vec([f^H; diag(w) H]), both of
    length (L+1)*M in column-major order. Declared sparsities must match the
    actual nonzero counts (1e-12 zero threshold).
    """

    g_s: np.ndarray = field(repr=False)
    g_c: np.ndarray = field(repr=False)
    sparsity_s: int = 0
    sparsity_c: int = 0

    def __post_init__(self):
        if self.g_s.shape != self.g_c.shape or self.g_s.ndim != 1:
            raise ValueError("g_s and g_c must be 1-D with equal length")
        nnz_s = int(np.sum(np.abs(self.g_s) > 1e-12))
        nnz_c = int(np.sum(np.abs(self.g_c) > 1e-12))
        if nnz_s != self.sparsity_s or nnz_c != self.sparsity_c:
            raise ValueError(
                f"declared sparsities ({self.sparsity_s}, {self.sparsity_c}) do not match "
                f"actual nonzero counts ({nnz_s}, {nnz_c})"
            )


@dataclass(frozen=True)
class MeasurementSet:
    """De-spread observations with their linear operators and SNR metadata.

    gamma_e = L_Q * snr_linear; the noise in r has per-entry variance
    1/gamma_e (infinite SNR means noiseless).
    """

    r: np.ndarray = field(repr=False)
    S: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)
    snr_linear: float
    gamma_e: float
    blocks: int
    pilots: tuple = field(repr=False, default=())
    grouping: GroupingMap | None = field(repr=False, default=None)

    def __post_init__(self):
        n_rows = self.S.shape[0]
        if self.C.shape != self.S.shape:
            raise ValueError("S and C must have identical shapes")
        if self.r.shape != (n_rows,):
            raise ValueError(f"r must have shape ({n_rows},), got {self.r.shape}")
        if not self.gamma_e > 0:
            raise ValueError("gamma_e must be positive")


def raised_cosine(t, T_s, rolloff=0.3, span=4):
    """Raised-cosine pulse value p(t); p(0) = 1, truncated to |t| <= span*T_s.

    The removable singularity at |t| = T_s/(2*rolloff) is evaluated by its
    limit pi/4 * sinc(1/(2*rolloff)).
    """
    t = np.asarray(t, dtype=float)
    x = t / T_s
    out = np.zeros_like(x)
    inside = np.abs(x) <= span
    xs = x[inside]
    if rolloff > 0:
        sing = np.isclose(np.abs(xs), 1.0 / (2.0 * rolloff), rtol=0, atol=1e-12)
    else:
        sing = np.zeros_like(xs, dtype=bool)
    denom = 1.0 - (2.0 * rolloff * xs) ** 2
    denom = np.where(sing, 1.0, denom)
    vals = np.sinc(xs) * np.cos(np.pi * rolloff * xs) / denom
    if rolloff > 0:
        vals = np.where(sing, np.pi / 4.0 * np.sinc(1.0 / (2.0 * rolloff)), vals)
    out[inside] = vals
    if out.ndim == 0:
        return float(out)
    return out


def _upa_factor(M):
    # near-square default: largest divisor of M not exceeding sqrt(M)
    mv = int(math.isqrt(M))
    while M % mv != 0:
        mv -= 1
    return M // mv, mv


def upa_steering(theta, phi, M, upa_shape=None):
    """Unit-norm steering vector of a half-wavelength M_h x M_v planar array.

    a = (1/sqrt(M)) * exp(j*pi*(m_h sin(theta)cos(phi) + m_v sin(phi))),
    m_h = 0..M_h-1, m_v = 0..M_v-1, vectorized with m_h varying fastest.
    upa_shape overrides the default near-square factorization of M.
    """
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    if upa_shape is None:
        mh, mv = _upa_factor(M)
    else:
        mh, mv = upa_shape
        if mh * mv != M or mh < 1 or mv < 1:
            raise ValueError(f"upa_shape {upa_shape} does not factor M={M}")
    u = np.pi * np.sin(theta) * np.cos(phi)
    v = np.pi * np.sin(phi)
    phase = u * np.arange(mh)[:, None] + v * np.arange(mv)[None, :]
    return np.exp(1j * phase).reshape(-1, order="F") / np.sqrt(M)


def gen_geometric_channel(clusters, M, d=0, T_s=1.0, rng_seed=None, upa_shape=None):
    """Geometric multipath channel sample at discrete time index d.

    h = sqrt(M/pathloss) * sum_l beta_l * p(d*T_s - tau_l) * a(theta_l, phi_l).

    When clusters.gains is None, per-cluster gains are drawn CN(0,1) from
    rng_seed (deterministic given the seed).
    """
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    pulse = clusters.pulse if clusters.pulse is not None else raised_cosine
    if clusters.gains is None:
        rng = np.random.default_rng(rng_seed)
        gains = (rng.standard_normal(clusters.count)
                 + 1j * rng.standard_normal(clusters.count)) / np.sqrt(2)
    else:
        gains = np.asarray(clusters.gains, dtype=np.complex128)
    h = np.zeros(M, dtype=np.complex128)
    for beta, tau, theta, phi in zip(gains, clusters.delays, clusters.azimuths,
                                     clusters.elevations):
        h += beta * pulse(d * T_s - tau, T_s) * upa_steering(theta, phi, M, upa_shape)
    return np.sqrt(M / clusters.pathloss) * h


def gen_sparse_isac_channels(L, M, k_s, k_c, rng_seed=None):
    """Draw a sparse ChannelPair: uniform supports, CN(0,1) nonzeros.

    Bit-identical outputs for identical seeds.
    """
    n = (L + 1) * M
    if not (0 <= k_s <= n and 0 <= k_c <= n):
        raise ValueError(f"sparsities must lie in [0, {n}], got k_s={k_s}, k_c={k_c}")
    rng = np.random.default_rng(rng_seed)
    g_s = np.zeros(n, dtype=np.complex128)
    g_c = np.zeros(n, dtype=np.complex128)
    supp_s = rng.choice(n, size=k_s, replace=False)
    supp_c = rng.choice(n, size=k_c, replace=False)
    g_s[supp_s] = (rng.standard_normal(k_s) + 1j * rng.standard_normal(k_s)) / np.sqrt(2)
    g_c[supp_c] = (rng.standard_normal(k_c) + 1j * rng.standard_normal(k_c)) / np.sqrt(2)
    return ChannelPair(g_s=g_s, g_c=g_c, sparsity_s=int(np.sum(np.abs(g_s) > 1e-12)),
                       sparsity_c=int(np.sum(np.abs(g_c) > 1e-12)))


def qpsk_pilots(blocks, M, rng_seed=None):
    """Unit-modulus QPSK pilot pairs [(s_b, z_b)] for each of B blocks."""
    rng = np.random.default_rng(rng_seed)
    out = []
    qpsk = np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4)))
    for _ in range(blocks):
        s_b = qpsk[rng.integers(0, 4, size=M)]
        z_b = qpsk[rng.integers(0, 4, size=M)]
        out.append((s_b, z_b))
    return out


def build_measurement_operators(grouping, pilots, M):
    """Stack per-block Kronecker operators S and C.

    Row-block b of S is s_b^T (x) omega (plain transpose: with column-major
    vectorization, (s^T (x) omega) vec(G) = vec(omega G s)); C uses z_b.

    Returns (S, C), each of shape (B*(L_Q+1), (L+1)*M).
    """
    if not isinstance(grouping, GroupingMap):
        raise TypeError("grouping must be a GroupingMap")
    if len(pilots) == 0:
        raise ValueError("at least one pilot block is required")
    omega = grouping.omega.astype(np.complex128)
    s_rows = []
    c_rows = []
    for s_b, z_b in pilots:
        s_b = np.asarray(s_b, dtype=np.complex128)
        z_b = np.asarray(z_b, dtype=np.complex128)
        if s_b.shape != (M,) or z_b.shape != (M,):
            raise ValueError(f"pilot vectors must have shape ({M},), got "
                             f"{s_b.shape} and {z_b.shape}")
        s_rows.append(np.kron(s_b[None, :], omega))
        c_rows.append(np.kron(z_b[None, :], omega))
    return np.vstack(s_rows), np.vstack(c_rows)


def synth_observation(channels, ops, snr_db, rng_seed=None, *, grouping, pilots):
    """Noisy de-spread observation r = S g_s + C g_c + e.

    e is circular complex Gaussian with per-entry variance 1/gamma_e,
    gamma_e = L_Q * 10^(snr_db/10). snr_db = +inf disables noise exactly.
    Deterministic given rng_seed.
    """
    S, C = ops
    if S.shape[1] != channels.g_s.shape[0] or C.shape[1] != channels.g_c.shape[0]:
        raise ValueError(
            f"operator column count {S.shape[1]} does not match channel length "
            f"{channels.g_s.shape[0]}")
    clean = S @ channels.g_s + C @ channels.g_c
    if np.isinf(snr_db):
        gamma = np.inf
        gamma_e = np.inf
        r = clean
    else:
        gamma = 10.0 ** (snr_db / 10.0)
        gamma_e = grouping.L_Q * gamma
        rng = np.random.default_rng(rng_seed)
        n_rows = clean.shape[0]
        e = (rng.standard_normal(n_rows) + 1j * rng.standard_normal(n_rows)) \
            * np.sqrt(1.0 / (2.0 * gamma_e))
        r = clean + e
    return MeasurementSet(r=r, S=S, C=C, snr_linear=float(gamma),
                          gamma_e=float(gamma_e), blocks=len(pilots),
                          pilots=tuple((np.asarray(s), np.asarray(z)) for s, z in pilots),
                          grouping=grouping)
