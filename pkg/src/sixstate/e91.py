"""Singlet correlations, hidden-variable bound and the collective attack.

Alice and Bob each measure ``E(e_t) = e_t . sigma`` on half of the singlet
and keep rounds with matching axes. The correlation sum

    S = |sum_t <E(e_t) (x) E(e_t)>|

is 3 for an untouched singlet, at most 1 whenever Eve runs independent
intercept/resend attacks on the two wings (a hidden-variable model), and
``3(1 - 2D)`` under the collective attack on Bob's wing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np

from .collective import build_isometry, make_params
from .montecarlo import run_sharded
from .quantum import ContractError, make_basis

NORM_TOL = 1e-12
AXES = ("x", "y", "z")

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
E_X = np.array([1.0, 0.0, 0.0])
E_Y = np.array([0.0, 1.0, 0.0])
E_Z = np.array([0.0, 0.0, 1.0])
UNIT_AXES = np.stack([E_X, E_Y, E_Z])

# |Psi-> = (|01> - |10>)/sqrt(2), index 2*a + b
SINGLET = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)

# Rows: axis t; then outcome (0 -> +1, 1 -> -1); then amplitude.
_AXIS_KETS = np.stack([np.stack(make_basis(t.upper()).vectors) for t in AXES])


def unit_vector(v) -> np.ndarray:
    n = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(n)) or abs(float(n @ n) - 1.0) > NORM_TOL:
        raise ContractError(f"not a unit vector: {v!r}")
    return n


def spin_observable(n) -> np.ndarray:
    """n . sigma for a unit 3-vector."""
    n = unit_vector(n)
    return n[0] * PAULI["x"] + n[1] * PAULI["y"] + n[2] * PAULI["z"]


def spin_eigenvectors(n) -> tuple[np.ndarray, np.ndarray]:
    """The +1 and -1 eigenvectors of ``n . sigma``.

    Away from the poles these are the standard half-angle expressions;
    close to ``n_z = -1`` (resp. ``+1``) the same ray is written in the
    form that does not divide by ``1 + n_z`` (resp. ``1 - n_z``), which at
    the pole itself is an exact z eigenvector.
    """
    n = unit_vector(n)
    vecs = spin_eigenvectors_batch(n[None, :])[0]
    return vecs[0], vecs[1]


def spin_eigenvectors_batch(n: np.ndarray) -> np.ndarray:
    """(N, 3) unit vectors -> (N, 2, 2) array [round, outcome, amplitude]."""
    nx, ny, nz = n[:, 0], n[:, 1], n[:, 2]
    w = nx + 1j * ny
    out = np.empty((n.shape[0], 2, 2), dtype=complex)

    up = 1 + nz > 0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        k0 = np.sqrt(2 * (1 + nz))
        k0b = np.sqrt(2 * (1 - nz))
        out[:, 0, 0] = np.where(up, (1 + nz) / k0, w.conj() / k0b)
        out[:, 0, 1] = np.where(up, w / k0, (1 - nz) / k0b)
        down = 1 - nz > 0.5
        out[:, 1, 0] = np.where(down, (-1 + nz) / k0b, -w.conj() / k0)
        out[:, 1, 1] = np.where(down, w / k0b, (1 + nz) / k0)
    return out


@dataclass
class CorrelationReport:
    c: dict[str, float]
    s: float
    standard_errors: dict[str, float] | None = None
    s_error: float | None = None
    extras: dict[str, float] = field(default_factory=dict)

    @property
    def exceeds_hidden_variable_bound(self) -> bool:
        margin = 0.0 if self.s_error is None else 3 * self.s_error
        return self.s - margin > 1.0


def _report(c: dict[str, float], se: dict[str, float] | None = None, **extras) -> CorrelationReport:
    s = abs(sum(c.values()))
    s_err = None if se is None else math.sqrt(sum(v * v for v in se.values()))
    return CorrelationReport(c=c, s=s, standard_errors=se, s_error=s_err, extras=extras)


# --- quantum singlet -----------------------------------------------------------


def singlet_correlation_quantum() -> CorrelationReport:
    c = {}
    for t in AXES:
        op = np.kron(PAULI[t], PAULI[t])
        c[t] = float(np.vdot(SINGLET, op @ SINGLET).real)
    return _report(c)


def _axis_correlation_counts(t_idx: np.ndarray, product: np.ndarray) -> np.ndarray:
    """Counters per axis: [count, sum(prod), sum(prod^2)] flattened."""
    out = np.zeros((3, 3))
    for k in range(3):
        sel = product[t_idx == k]
        out[k] = (sel.size, sel.sum(), (sel * sel).sum())
    return out


def _report_from_counts(counts: np.ndarray, **extras) -> CorrelationReport:
    c, se = {}, {}
    for k, t in enumerate(AXES):
        n, s1, s2 = counts[k]
        mean = s1 / n
        var = max(s2 / n - mean * mean, 0.0)
        c[t] = float(mean)
        se[t] = math.sqrt(var / n)
    return _report(c, se, **extras)


def _joint_outcomes(amps: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Sample (a, b) from per-round amplitude tables of shape (n, 2, 2, ...)."""
    n = amps.shape[0]
    probs = (amps * amps.conj()).real.reshape(n, 4, -1).sum(axis=2)
    probs /= probs.sum(axis=1, keepdims=True)
    cum = np.cumsum(probs, axis=1)
    u = rng.random(n)
    k = np.minimum((u[:, None] >= cum[:, :-1]).sum(axis=1), 3)
    return k // 2, k % 2


def _singlet_task(n: int, rng: np.random.Generator) -> np.ndarray:
    t = rng.integers(0, 3, size=n)
    bras = _AXIS_KETS[t].conj()  # (n, outcome, amp)
    psi = SINGLET.reshape(2, 2)
    amps = np.einsum("nai,nbj,ij->nab", bras, bras, psi)
    a, b = _joint_outcomes(amps, rng)
    product = (1 - 2 * a) * (1 - 2 * b)
    return _axis_correlation_counts(t, product.astype(float))


def singlet_correlation_mc(rounds: int, seed: int, workers: int = 1) -> CorrelationReport:
    """Born-sampled singlet measurements along a uniformly chosen shared axis."""
    return _report_from_counts(run_sharded(_singlet_task, rounds, seed, workers))


# --- hidden-variable model (intercept/resend on both wings) -------------------


def eve_outcome_probability(n_a, i: int, n_b, j: int) -> float:
    """Probability that Eve's product measurement on the singlet yields (i, j)."""
    n_a, n_b = unit_vector(n_a), unit_vector(n_b)
    return 0.25 * (1 - (-1) ** (i + j) * float(n_a @ n_b))


def uniform_sphere(n: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((n, 3))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass(frozen=True)
class UniformSphere:
    second_moment = np.eye(3) / 3

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return uniform_sphere(n, rng)


@dataclass(frozen=True, eq=False)
class Dirac:
    n: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "n", unit_vector(self.n))

    @property
    def second_moment(self) -> np.ndarray:
        return np.outer(self.n, self.n)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return np.broadcast_to(self.n, (count, 3)).copy()


@dataclass(frozen=True, eq=False)
class DiracPair:
    """Eve always measures along the fixed pair (n_a, n_b)."""

    n_a: np.ndarray
    n_b: np.ndarray
    name: str = "dirac-pair"

    def __post_init__(self):
        object.__setattr__(self, "n_a", unit_vector(self.n_a))
        object.__setattr__(self, "n_b", unit_vector(self.n_b))

    def sample(self, count, rng):
        return (np.broadcast_to(self.n_a, (count, 3)).copy(),
                np.broadcast_to(self.n_b, (count, 3)).copy())


@dataclass(frozen=True)
class ProductUniform:
    """Independent uniform directions on both wings."""

    name: str = "product-uniform"

    def sample(self, count, rng):
        return uniform_sphere(count, rng), uniform_sphere(count, rng)


@dataclass(frozen=True, eq=False)
class OneSided:
    """Alice's qubit is untouched; Eve measures Bob's along ``bob``-sampled axes.

    In the hidden-variable description Alice's direction coincides with
    her own measurement axis ``e_t``.
    """

    bob: object = field(default_factory=UniformSphere)
    name: str = "one-sided"

    def sample(self, count, rng):
        return None, self.bob.sample(count, rng)


@dataclass(frozen=True, eq=False)
class CustomSampler:
    """Arbitrary joint law given as ``fn(count, rng) -> (n_a, n_b)``."""

    fn: Callable
    name: str = "custom"

    def sample(self, count, rng):
        return self.fn(count, rng)


def same_axis_uniform(count: int, rng: np.random.Generator):
    n = uniform_sphere(count, rng)
    return n, n.copy()


def canned_distributions() -> dict[str, tuple[object, float]]:
    """Reference distributions with their analytic S-bar' values."""
    tilted = np.array([math.sin(math.pi / 3), 0.0, math.cos(math.pi / 3)])
    return {
        "dirac-same-axis": (DiracPair(E_Z, E_Z, name="dirac-same-axis"), 1.0),
        "dirac-60deg": (DiracPair(E_Z, tilted, name="dirac-60deg"), 0.25),
        "product-uniform": (ProductUniform(), 1.0 / 3.0),
        "one-sided-uniform": (OneSided(UniformSphere(), name="one-sided-uniform"), 1.0),
        "same-axis-uniform": (CustomSampler(same_axis_uniform, name="same-axis-uniform"), 1.0),
    }


def _hv_integrand(n_a, n_b) -> np.ndarray:
    """Per-sample -(n_a.n_b)(n_a.e_t)(n_b.e_t), shape (N, 3)."""
    if n_a is None:
        return -(n_b * n_b)  # n_a = e_t for each axis
    dot = np.einsum("ni,ni->n", n_a, n_b)
    return -dot[:, None] * n_a * n_b


def _hv_task(dist, n: int, rng: np.random.Generator) -> np.ndarray:
    n_a, n_b = dist.sample(n, rng)
    vals = _hv_integrand(n_a, n_b)
    total = vals.sum(axis=1)
    if n_a is None:
        red = (n_b * n_b).sum(axis=1)
    else:
        red = np.einsum("ni,ni->n", n_a, n_b) ** 2
    return np.concatenate([
        [n], vals.sum(axis=0), (vals * vals).sum(axis=0), [total.sum(), (total * total).sum(), red.sum()],
    ])


def hv_sbar(dist, mode: str = "exact", rounds: int = 0, seed: int = 0,
            workers: int = 1) -> CorrelationReport:
    """Hidden-variable correlations and S-bar' for a direction distribution.

    ``mode="exact"`` works for point masses and for one-sided attacks whose
    Bob sampler knows its second moment. ``mode="mc"`` averages the
    integrand over ``rounds`` samples.
    """
    if mode == "exact":
        if isinstance(dist, DiracPair):
            vals = _hv_integrand(dist.n_a[None], dist.n_b[None])[0]
            return _report({t: float(v) for t, v in zip(AXES, vals)},
                           sbar_reduced=float(dist.n_a @ dist.n_b) ** 2)
        if isinstance(dist, OneSided) and getattr(dist.bob, "second_moment", None) is not None:
            m = np.asarray(dist.bob.second_moment)
            return _report({t: float(-m[k, k]) for k, t in enumerate(AXES)},
                           sbar_reduced=float(np.trace(m)))
        raise ContractError(f"no exact evaluation for {type(dist).__name__}; use mode='mc'")
    if mode != "mc":
        raise ContractError(f"unknown mode {mode!r}")
    counts = run_sharded(partial(_hv_task, dist), rounds, seed, workers)
    n = counts[0]
    c, se = {}, {}
    for k, t in enumerate(AXES):
        mean = counts[1 + k] / n
        c[t] = float(mean)
        se[t] = math.sqrt(max(counts[4 + k] / n - mean * mean, 0.0) / n)
    tot_mean = counts[7] / n
    rep = _report(c, se, sbar_reduced=float(counts[9] / n))
    # The axis correlators share samples, so use the per-sample total for the error.
    rep.s_error = math.sqrt(max(counts[8] / n - tot_mean * tot_mean, 0.0) / n)
    return rep


def _resend_amplitudes(eig: np.ndarray, axis_bras: np.ndarray) -> np.ndarray:
    """<k_t|phi_i> for resent eigenstates: (n, 2 eve outcomes, 2 bob/alice outcomes)."""
    return np.einsum("nkm,nim->nik", axis_bras, eig)


def _hv_full_task(dist, n: int, rng: np.random.Generator) -> np.ndarray:
    t = rng.integers(0, 3, size=n)
    bras = _AXIS_KETS[t].conj()
    n_a, n_b = dist.sample(n, rng)
    eig_b = spin_eigenvectors_batch(n_b)
    rows = np.arange(n)
    if n_a is None:
        # Alice measures her untouched half first; Bob's qubit collapses.
        bob_cond = np.einsum("nai,ij->naj", bras, SINGLET.reshape(2, 2))
        p_alice0 = (np.abs(bob_cond[:, 0]) ** 2).sum(axis=1)
        a = (rng.random(n) >= p_alice0).astype(int)
        bob_state = bob_cond[rows, a]
        bob_state /= np.linalg.norm(bob_state, axis=1, keepdims=True)
        p_eve = np.abs(np.einsum("njm,nm->nj", eig_b.conj(), bob_state)) ** 2
        j = (rng.random(n) >= p_eve[:, 0] / p_eve.sum(axis=1)).astype(int)
    else:
        eig_a = spin_eigenvectors_batch(n_a)
        psi = SINGLET.reshape(2, 2)
        eve_amps = np.einsum("nim,njl,ml->nij", eig_a.conj(), eig_b.conj(), psi)
        i, j = _joint_outcomes(eve_amps, rng)
        alice_amp = _resend_amplitudes(eig_a, bras)[rows, i]
        p_a0 = np.abs(alice_amp[:, 0]) ** 2 / (np.abs(alice_amp) ** 2).sum(axis=1)
        a = (rng.random(n) >= p_a0).astype(int)
    bob_amp = _resend_amplitudes(eig_b, bras)[rows, j]
    p_b0 = np.abs(bob_amp[:, 0]) ** 2 / (np.abs(bob_amp) ** 2).sum(axis=1)
    b = (rng.random(n) >= p_b0).astype(int)
    product = ((1 - 2 * a) * (1 - 2 * b)).astype(float)
    return _axis_correlation_counts(t, product)


def hv_full_simulation(dist, rounds: int, seed: int, workers: int = 1) -> CorrelationReport:
    """Operational intercept/resend on the singlet wings, measured in a shared axis.

    Eve's outcomes, her resent eigenstates and Alice's and Bob's final
    measurements are all Born-sampled from amplitudes; nothing here uses
    the closed-form correlation integrand.
    """
    if rounds < 1:
        raise ContractError("rounds must be >= 1")
    return _report_from_counts(run_sharded(partial(_hv_full_task, dist), rounds, seed, workers))


# --- collective attack on Bob's wing --------------------------------------------


def collective_channel(m: np.ndarray, fidelity: float, cos_theta: float) -> np.ndarray:
    """Eve's collective attack as a linear map on a 2x2 operator (z basis)."""
    f = fidelity
    return np.array([
        [f * m[0, 0] + (1 - f) * m[1, 1], f * cos_theta * m[0, 1]],
        [f * cos_theta * m[1, 0], (1 - f) * m[0, 0] + f * m[1, 1]],
    ])


def attacked_singlet(d: float) -> np.ndarray:
    """4x4 density operator after the channel acts on Bob's half of |Psi->."""
    p = make_params(disturbance=d)
    rho = np.outer(SINGLET, SINGLET.conj()).reshape(2, 2, 2, 2)  # [a, b, a', b']
    out = np.empty_like(rho)
    for a in range(2):
        for a2 in range(2):
            out[a, :, a2, :] = collective_channel(rho[a, :, a2, :], p.fidelity, p.cos_theta)
    return out.reshape(4, 4)


def collective_e91_report(d: float) -> CorrelationReport:
    rho = attacked_singlet(d)
    c = {t: float(np.trace(rho @ np.kron(PAULI[t], PAULI[t])).real) for t in AXES}
    rep = _report(c)
    rep.s = sum(abs(v) for v in c.values())
    rep.extras["closed_form"] = 3 * (1 - 2 * d)
    return rep


def collective_e91_s(d: float) -> float:
    """S from the channel-mapped singlet; equals 3(1 - 2D)."""
    return collective_e91_report(d).s


def attacked_singlet_via_isometry(d: float) -> np.ndarray:
    """Same state built by applying Eve's isometry to Bob's qubit and tracing the probe."""
    iso = build_isometry(make_params(disturbance=d)).matrix.reshape(2, 4, 2)  # [b_out, probe, b_in]
    psi = np.einsum("bkc,ac->abk", iso, SINGLET.reshape(2, 2))
    rho = np.einsum("abk,cdk->abcd", psi, psi.conj())
    return rho.reshape(4, 4)


def _collective_task(d: float, n: int, rng: np.random.Generator) -> np.ndarray:
    iso = build_isometry(make_params(disturbance=d)).matrix.reshape(2, 4, 2)
    psi = np.einsum("bkc,ac->abk", iso, SINGLET.reshape(2, 2))  # [a, b, probe]
    t = rng.integers(0, 3, size=n)
    bras = _AXIS_KETS[t].conj()
    amps = np.einsum("nxa,nyb,abk->nxyk", bras, bras, psi)
    a, b = _joint_outcomes(amps, rng)
    return _axis_correlation_counts(t, ((1 - 2 * a) * (1 - 2 * b)).astype(float))


def collective_e91_mc(d: float, rounds: int, seed: int, workers: int = 1) -> CorrelationReport:
    """Born-sampled correlations of the singlet with the probe attached to Bob's half."""
    make_params(disturbance=d)
    return _report_from_counts(run_sharded(partial(_collective_task, d), rounds, seed, workers))
