"""Element grouping, training reflection patterns, and LS de-spreading.

The RIS has L passive elements plus a conceptual "direct path" port. During
training the elements are partitioned into L_Q = L/Q groups that share one
reflection coefficient per slot (grouping), or a single representative element
per group is switched on (puncturing). The mapping is a binary matrix omega of
shape (L_Q+1, L+1); row 0 selects the direct path. The per-slot reflection
coefficients form a unit-modulus orthogonal matrix psi of shape (T, T) with
T = L_Q + 1 slots, so a block of raw pilot observations de-spreads by a single
scaled adjoint multiply.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import dft, hadamard

__all__ = [
    "GroupingMap",
    "ReflectionPattern",
    "build_grouping_matrix",
    "build_reflection_pattern",
    "despread",
    "group_image",
]

GROUPING_MODES = ("grouping", "puncturing")
PATTERN_KINDS = ("dft", "hadamard")


@dataclass(frozen=True)
class GroupingMap:
    """Binary subgroup mapping between RIS elements and training groups.

    Attributes
    ----------
    mode : str
        "grouping" (all elements of a group share a coefficient) or
        "puncturing" (one representative element per group is active).
    L : int
        Number of RIS elements.
    Q : int
        Group size; must divide L.
    omega : ndarray of int64, shape (L_Q+1, L+1)
        Row 0 is the direct-path unit vector e0. In grouping mode
        omega @ omega.T == diag(1, Q, ..., Q); in puncturing mode it is
        the identity.
    """

    mode: str
    L: int
    Q: int
    omega: np.ndarray = field(repr=False)

    @property
    def L_Q(self):
        return self.L // self.Q

    def __post_init__(self):
        if self.mode not in GROUPING_MODES:
            raise ValueError(f"mode must be one of {GROUPING_MODES}, got {self.mode!r}")
        if self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")
        if self.Q < 1 or self.L % self.Q != 0:
            raise ValueError(f"Q must be a positive divisor of L={self.L}, got Q={self.Q}")
        if self.omega.shape != (self.L_Q + 1, self.L + 1):
            raise ValueError(
                f"omega shape {self.omega.shape} does not match (L_Q+1, L+1)="
                f"{(self.L_Q + 1, self.L + 1)}"
            )


@dataclass(frozen=True)
class ReflectionPattern:
    """Unit-modulus orthogonal training pattern over T = L_Q + 1 slots.

    psi is T x T with |psi[t, k]| = 1 and psi^H psi = psi psi^H = T I.
    """

    psi: np.ndarray = field(repr=False)
    kind: str

    @property
    def slots(self):
        return self.psi.shape[0]

    def __post_init__(self):
        if self.kind not in PATTERN_KINDS:
            raise ValueError(f"kind must be one of {PATTERN_KINDS}, got {self.kind!r}")
        T = self.psi.shape[0]
        if self.psi.shape != (T, T):
            raise ValueError(f"psi must be square, got shape {self.psi.shape}")
        if np.max(np.abs(np.abs(self.psi) - 1.0)) > 1e-12:
            raise ValueError("psi entries must have unit modulus (tolerance 1e-12)")
        gram = self.psi.conj().T @ self.psi
        if not np.allclose(gram, T * np.eye(T), rtol=1e-10, atol=1e-10 * T):
            raise ValueError("psi^H psi must equal (L_Q + 1) I (tolerance 1e-10)")


def build_grouping_matrix(L, Q, mode="grouping"):
    """Construct the (L_Q+1) x (L+1) binary subgroup mapping matrix.

    Parameters
    ----------
    L : int
        RIS element count, >= 1.
    Q : int
        Group size; must divide L exactly.
    mode : str
        "grouping" maps every element of group l to row l (so
        omega @ omega.T = diag(1, Q, ..., Q)); "puncturing" keeps only the
        first element of each group (omega @ omega.T = I).

    Returns
    -------
    GroupingMap
    """
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if Q < 1 or L % Q != 0:
        raise ValueError(f"Q must be a positive divisor of L={L}, got Q={Q}")
    if mode not in GROUPING_MODES:
        raise ValueError(f"mode must be one of {GROUPING_MODES}, got {mode!r}")
    L_Q = L // Q
    omega = np.zeros((L_Q + 1, L + 1), dtype=np.int64)
    omega[0, 0] = 1
    for group in range(L_Q):
        first = 1 + group * Q
        if mode == "grouping":
            omega[group + 1, first:first + Q] = 1
        else:
            omega[group + 1, first] = 1
    return GroupingMap(mode=mode, L=L, Q=Q, omega=omega)


def build_reflection_pattern(L_Q, kind="dft"):
    """Build the T x T unit-modulus orthogonal training pattern, T = L_Q + 1.

    kind="dft" works for any T; kind="hadamard" (real +/-1 phases, hardware
    friendly) requires T to be a power of two.
    """
    if L_Q < 1:
        raise ValueError(f"L_Q must be >= 1, got {L_Q}")
    if kind not in PATTERN_KINDS:
        raise ValueError(f"kind must be one of {PATTERN_KINDS}, got {kind!r}")
    T = L_Q + 1
    if kind == "dft":
        psi = dft(T).astype(np.complex128)
    else:
        if T & (T - 1) != 0:
            valid = ", ".join(str(2 ** k) for k in range(1, 8))
            raise ValueError(
                f"hadamard pattern needs L_Q + 1 to be a power of two "
                f"(valid sizes {valid}, ...); got L_Q + 1 = {T}"
            )
        psi = hadamard(T).astype(np.complex128)
    return ReflectionPattern(psi=psi, kind=kind)


def group_image(vec, grouping):
    """Group-resolved image (I_M kron omega) @ vec of a stacked channel vector.

    Under element grouping the measurements depend on the channel only through
    the within-group sums omega @ G; entries of a group cannot be told apart by
    any estimator. This map extracts the identifiable part, the natural domain
    for benchmark error metrics when Q > 1.

    Parameters
    ----------
    vec : complex ndarray, shape ((L+1)*M,)
        Column-major stacking of the (L+1) x M channel matrix.
    grouping : GroupingMap

    Returns
    -------
    complex ndarray, shape ((L_Q+1)*M,)
    """
    vec = np.asarray(vec)
    n_el = grouping.L + 1
    if vec.ndim != 1 or vec.size % n_el != 0:
        raise ValueError(
            f"vec length {vec.size} is not a multiple of L+1={n_el}")
    mat = vec.reshape((n_el, vec.size // n_el), order="F")
    return (grouping.omega @ mat).reshape(-1, order="F")


def despread(y, pattern):
    """LS de-spreading of one training block: (psi^H psi)^-1 psi^H y.

    For the orthogonal patterns built here this equals psi^H y / (L_Q + 1).
    Noise of per-entry variance sigma^2 in y contracts to sigma^2 / (L_Q + 1)
    per de-spread entry.

    Parameters
    ----------
    y : complex ndarray, shape (T,)
        Raw observations over the T = L_Q + 1 training slots of one block.
    pattern : ReflectionPattern

    Returns
    -------
    complex ndarray, shape (L_Q + 1,)
    """
    y = np.asarray(y)
    T = pattern.slots
    if y.shape != (T,):
        raise ValueError(f"y must have shape ({T},) to match the pattern, got {y.shape}")
    psi = pattern.psi
    return np.linalg.solve(psi.conj().T @ psi, psi.conj().T @ y)
