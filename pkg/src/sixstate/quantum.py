"""Small-dimensional state/operator substrate.

States are 1-d ``complex128`` arrays and operators are square 2-d arrays.
The helpers here validate the contracts (normalization, unitarity,
density, projector) at the tolerances used throughout the package, build
the three protocol bases, and sample measurement outcomes with the Born
rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NORM_TOL = 1e-12
PSD_TOL = 1e-10

SQRT1_2 = 1.0 / math.sqrt(2.0)


class ContractError(ValueError):
    """A value handed to a public operation violates its contract."""


def _finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise ContractError(f"{what} contains NaN or Inf")


def state(amplitudes, *, normalized: bool = True) -> np.ndarray:
    """Build a state vector from amplitudes.

    With ``normalized=True`` (the default) the squared norm must equal 1
    within ``NORM_TOL``. Unnormalized conditional states are allowed with
    ``normalized=False``; their squared norm is their weight.
    """
    psi = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
    if psi.size == 0:
        raise ContractError("state must have positive dimension")
    _finite(psi, "state")
    if normalized:
        check_normalized(psi)
    return psi


def weight(psi: np.ndarray) -> float:
    return float(np.vdot(psi, psi).real)


def check_normalized(psi: np.ndarray) -> None:
    w = weight(psi)
    if abs(w - 1.0) > NORM_TOL:
        raise ContractError(f"state is not normalized (norm^2 = {w!r})")


def same_up_to_phase(u: np.ndarray, v: np.ndarray, tol: float = 1e-12) -> bool:
    """True if two normalized states differ only by a global phase."""
    return abs(abs(np.vdot(u, v)) - 1.0) <= tol


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def ket(psi: np.ndarray) -> np.ndarray:
    return np.asarray(psi, dtype=np.complex128).reshape(-1, 1)


def projector(psi: np.ndarray) -> np.ndarray:
    """|psi><psi| for a (not necessarily normalized) vector."""
    psi = np.asarray(psi, dtype=np.complex128)
    return np.outer(psi, psi.conj())


def density(psi: np.ndarray) -> np.ndarray:
    """Pure-state density operator; rescales an unnormalized vector."""
    w = weight(psi)
    if w <= 0.0:
        raise ContractError("cannot form a density operator from a zero vector")
    return projector(psi) / w


def is_unitary(u: np.ndarray, tol: float = NORM_TOL) -> bool:
    u = np.asarray(u)
    n = u.shape[0]
    return u.shape == (n, n) and np.allclose(dagger(u) @ u, np.eye(n), rtol=0, atol=tol)


def is_isometry(v: np.ndarray, tol: float = NORM_TOL) -> bool:
    v = np.asarray(v)
    k = v.shape[1]
    return np.allclose(dagger(v) @ v, np.eye(k), rtol=0, atol=tol)


def is_hermitian(m: np.ndarray, tol: float = NORM_TOL) -> bool:
    return np.allclose(m, dagger(m), rtol=0, atol=tol)


def is_projector(p: np.ndarray, tol: float = NORM_TOL) -> bool:
    return is_hermitian(p, tol) and np.allclose(p @ p, p, rtol=0, atol=tol)


def is_density(rho: np.ndarray, tol: float = NORM_TOL) -> bool:
    if not is_hermitian(rho, tol):
        return False
    if abs(np.trace(rho) - 1.0) > tol:
        return False
    return float(eigvalsh(rho).min()) >= -PSD_TOL


def eigvalsh(h: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a Hermitian matrix.

    The 2x2 case uses the closed form ``m +- sqrt(d^2 + |b|^2)``; larger
    matrices go through LAPACK.
    """
    h = np.asarray(h, dtype=np.complex128)
    if h.shape == (2, 2):
        a, d = h[0, 0].real, h[1, 1].real
        b = h[0, 1]
        mean = 0.5 * (a + d)
        radius = math.hypot(0.5 * (a - d), abs(b))
        return np.array([mean - radius, mean + radius])
    return np.linalg.eigvalsh(h)


def trace_norm(m: np.ndarray) -> float:
    """tr|M| for Hermitian M."""
    return float(np.abs(eigvalsh(m)).sum())


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """``tr|rho - sigma|``, in [0, 2].

    Note this is the unhalved trace norm of the difference: orthogonal
    pure states are at distance 2.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    sigma = np.asarray(sigma, dtype=np.complex128)
    if rho.shape != sigma.shape or rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ContractError(f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    return trace_norm(rho - sigma)


# --- bases -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MeasurementBasis:
    """An ordered orthonormal pair of qubit states.

    ``label`` is one of ``"Z"``, ``"X"``, ``"Y"`` or ``"Custom"``; custom
    bases also carry the rotation angles they were built from.
    """

    label: str
    vectors: tuple[np.ndarray, np.ndarray]
    alpha: float | None = None
    beta: float | None = None

    def __post_init__(self):
        v0, v1 = self.vectors
        if abs(np.vdot(v0, v1)) > NORM_TOL:
            raise ContractError("basis vectors are not orthogonal")
        check_normalized(v0)
        check_normalized(v1)

    @property
    def matrix(self) -> np.ndarray:
        """Rows are the bras <xi_0|, <xi_1|."""
        return np.stack([self.vectors[0].conj(), self.vectors[1].conj()])

    def projectors(self) -> tuple[np.ndarray, np.ndarray]:
        return projector(self.vectors[0]), projector(self.vectors[1])

    def probabilities(self, psi: np.ndarray) -> np.ndarray:
        amps = self.matrix @ psi
        return (amps * amps.conj()).real


_BASIS_VECTORS = {
    "Z": ((1.0, 0.0), (0.0, 1.0)),
    "X": ((SQRT1_2, SQRT1_2), (SQRT1_2, -SQRT1_2)),
    "Y": ((SQRT1_2, 1j * SQRT1_2), (SQRT1_2, -1j * SQRT1_2)),
}

BASIS_LABELS = ("Z", "X", "Y")


def make_basis(label: str) -> MeasurementBasis:
    """The z, x or y protocol basis (case-insensitive label)."""
    key = label.upper()
    if key not in _BASIS_VECTORS:
        raise ContractError(f"unknown basis label {label!r}; expected one of Z, X, Y")
    v0, v1 = _BASIS_VECTORS[key]
    return MeasurementBasis(key, (state(v0), state(v1)))


def su2_rotation(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Euler-angle rotation exp(-i a sz/2) exp(-i b sy/2) exp(-i g sz/2)."""
    _finite(np.array([alpha, beta, gamma], dtype=float), "rotation angles")
    c, s = math.cos(beta / 2), math.sin(beta / 2)
    return np.array(
        [
            [np.exp(-0.5j * (alpha + gamma)) * c, -np.exp(-0.5j * (alpha - gamma)) * s],
            [np.exp(0.5j * (alpha - gamma)) * s, np.exp(0.5j * (alpha + gamma)) * c],
        ]
    )


def rotated_basis(alpha: float, beta: float) -> MeasurementBasis:
    """Eve's basis {V|0>, V|1>} with V = su2_rotation(alpha, beta, 0)."""
    v = su2_rotation(alpha, beta, 0.0)
    return MeasurementBasis("Custom", (v[:, 0].copy(), v[:, 1].copy()), alpha=alpha, beta=beta)


def eve_projectors(alpha: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form rank-1 projectors onto Eve's two basis states."""
    _finite(np.array([alpha, beta], dtype=float), "projector angles")
    c2 = math.cos(beta / 2) ** 2
    s2 = math.sin(beta / 2) ** 2
    off = 0.5 * np.exp(-1j * alpha) * math.sin(beta)
    p0 = np.array([[c2, off], [off.conjugate(), s2]])
    p1 = np.array([[s2, -off], [-off.conjugate(), c2]])
    return p0, p1


# --- randomness and sampling -------------------------------------------------


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator from an int seed or SeedSequence."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def born_probabilities(psi: np.ndarray, basis: MeasurementBasis) -> np.ndarray:
    check_normalized(psi)
    return basis.probabilities(psi)


def born_sample(psi: np.ndarray, basis: MeasurementBasis, rng: np.random.Generator) -> int:
    """Measure a normalized qubit state in ``basis``; returns 0 or 1.

    Consumes exactly one uniform draw from ``rng``.
    """
    p = born_probabilities(psi, basis)
    return int(rng.random() >= p[0])
