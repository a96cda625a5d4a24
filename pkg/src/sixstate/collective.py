"""Single-parameter collective attack on the six-state protocol.

Eve couples a four-dimensional probe to each qubit with the isometry

    V|0> = sqrt(F)|0>|A> + sqrt(1-F)|1>|B>
    V|1> = sqrt(F)|1>|C> + sqrt(1-F)|0>|D>

where, in the canonical probe frame f0..f3,

    A = f0,  C = cos(theta) f0 + sin(theta) f1,  B = f2,  D = f3,

and ``cos(theta) = 2 - 1/F``. After Alice and Bob announce their basis
``t``, Eve measures her probe with two certain-identification projectors
(onto the bit-flip conditionals) plus the Helstrom pair for the
no-flip conditionals.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .quantum import (
    BASIS_LABELS,
    ContractError,
    check_normalized,
    dagger,
    density,
    is_projector,
    make_basis,
    projector,
    weight,
)

PROBE_DIM = 4
WEIGHT_EPS = 1e-20
EIG_EPS = 1e-13
TOL = 1e-12

PAIRS = ((0, 0), (0, 1), (1, 0), (1, 1))


def _axis(t: str) -> str:
    key = t.lower()
    if key not in ("x", "y", "z"):
        raise ContractError(f"basis must be one of x, y, z (got {t!r})")
    return key


# --- parameters --------------------------------------------------------------


@dataclass(frozen=True)
class CollectiveParams:
    """The attack parameter in its three equivalent forms.

    ``disturbance`` is the stored primary; ``cos_theta``/``sin_theta`` are
    derived from it without cancellation.
    """

    theta: float
    fidelity: float
    disturbance: float

    @property
    def cos_theta(self) -> float:
        d = self.disturbance
        return (1 - 2 * d) / (1 - d)

    @property
    def sin_theta(self) -> float:
        d = self.disturbance
        return math.sqrt(max(d * (2 - 3 * d), 0.0)) / (1 - d)


def make_params(*, theta: float | None = None, fidelity: float | None = None,
                disturbance: float | None = None) -> CollectiveParams:
    """Build parameters from exactly one of theta, F or D.

    Accepted ranges: ``0 <= theta <= pi/2``, ``1/2 <= F <= 1``,
    ``0 <= D <= 1/2``. Anything else raises ``ContractError``.
    """
    given = [v for v in (theta, fidelity, disturbance) if v is not None]
    if len(given) != 1:
        raise ContractError("give exactly one of theta, fidelity, disturbance")
    if not math.isfinite(given[0]):
        raise ContractError("parameter must be finite")

    if theta is not None:
        if not 0.0 <= theta <= math.pi / 2:
            raise ContractError(f"theta={theta!r} outside [0, pi/2] (would need F < 1/2)")
        if theta < math.pi / 4:
            s = math.sin(theta / 2) ** 2
            d = 2 * s / (1 + 2 * s)
        else:
            c = math.cos(theta)
            d = (1 - c) / (2 - c)
        return CollectiveParams(theta=theta, fidelity=1 - d, disturbance=d)

    if fidelity is not None:
        if not 0.5 <= fidelity <= 1.0:
            raise ContractError(f"fidelity={fidelity!r} outside [1/2, 1]")
        d = 1 - fidelity
    else:
        d = disturbance
        if not 0.0 <= d <= 0.5:
            raise ContractError(f"disturbance={d!r} outside [0, 1/2]")
    cos_t = (1 - 2 * d) / (1 - d)
    sin_t = math.sqrt(d * (2 - 3 * d)) / (1 - d)
    return CollectiveParams(theta=math.atan2(sin_t, cos_t), fidelity=1 - d, disturbance=d)


# --- probe vectors and isometry ----------------------------------------------


@dataclass(frozen=True, eq=False)
class ProbeVectors:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"A": self.a, "B": self.b, "C": self.c, "D": self.d}


def build_probe_vectors(params: CollectiveParams) -> ProbeVectors:
    frame = np.eye(PROBE_DIM, dtype=np.complex128)
    c = params.cos_theta * frame[0] + params.sin_theta * frame[1]
    return ProbeVectors(a=frame[0].copy(), b=frame[2].copy(), c=c, d=frame[3].copy())


@dataclass(frozen=True, eq=False)
class EveIsometry:
    """Columns are V|0> and V|1>; row index is ``4 * qubit + probe``."""

    matrix: np.ndarray  # (8, 2)
    params: CollectiveParams

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """Joint state as a (2, 4) array: [qubit, probe]."""
        return (self.matrix @ psi).reshape(2, PROBE_DIM)

    def apply_batch(self, psis: np.ndarray) -> np.ndarray:
        """(n, 2) input states -> (n, 2, 4) joint states."""
        return (psis @ self.matrix.T).reshape(-1, 2, PROBE_DIM)

    def completion(self) -> np.ndarray:
        """An 8x8 unitary whose first two columns are this isometry."""
        rng = np.random.default_rng(0)
        filler = rng.normal(size=(8, 6)) + 1j * rng.normal(size=(8, 6))
        q, r = np.linalg.qr(np.hstack([self.matrix, filler]))
        # QR fixes columns only up to phase; restore the isometry exactly.
        q = q * (np.diag(r) / np.abs(np.diag(r)))
        q[:, :2] = self.matrix
        return q


def build_isometry(params: CollectiveParams) -> EveIsometry:
    pv = build_probe_vectors(params)
    sf, sd = math.sqrt(params.fidelity), math.sqrt(params.disturbance)
    ket0, ket1 = np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)
    col0 = sf * np.kron(ket0, pv.a) + sd * np.kron(ket1, pv.b)
    col1 = sf * np.kron(ket1, pv.c) + sd * np.kron(ket0, pv.d)
    return EveIsometry(np.stack([col0, col1], axis=1), params)


# --- conditional probe states ------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProbeConditionals:
    """Unnormalized probe states ``E^t_ij`` (Alice sent i, Bob reads j)."""

    basis: str
    e: dict[tuple[int, int], np.ndarray]

    def weight(self, i: int, j: int) -> float:
        return weight(self.e[i, j])

    def gram(self) -> np.ndarray:
        """4x4 matrix of <E_ij|E_kl> over (00, 01, 10, 11)."""
        vecs = np.stack([self.e[p] for p in PAIRS])
        return vecs.conj() @ vecs.T


def probe_conditionals(params: CollectiveParams, basis: str) -> ProbeConditionals:
    """Expand ``V|i_t>|X>`` in basis t using the explicit component formulas."""
    t = _axis(basis)
    pv = build_probe_vectors(params)
    A, B, C, D = pv.a, pv.b, pv.c, pv.d
    sf, sd = math.sqrt(params.fidelity), math.sqrt(params.disturbance)
    if t == "z":
        e = {(0, 0): sf * A, (0, 1): sd * B, (1, 0): sd * D, (1, 1): sf * C}
    elif t == "x":
        e = {
            (0, 0): 0.5 * (sf * (A + C) + sd * (B + D)),
            (0, 1): 0.5 * (sf * (A - C) + sd * (D - B)),
            (1, 0): 0.5 * (sf * (A - C) + sd * (B - D)),
            (1, 1): 0.5 * (sf * (A + C) - sd * (B + D)),
        }
    else:
        e = {
            (0, 0): 0.5 * (sf * (A + C) + 1j * sd * (D - B)),
            (0, 1): 0.5 * (sf * (A - C) + 1j * sd * (D + B)),
            (1, 0): 0.5 * (sf * (A - C) - 1j * sd * (B + D)),
            (1, 1): 0.5 * (sf * (A + C) + 1j * sd * (B - D)),
        }
    return ProbeConditionals(t, e)


def projected_conditionals(iso: EveIsometry, basis: str) -> ProbeConditionals:
    """Same states obtained by applying ``<j_t| (x) 1`` to ``V|i_t>`` numerically."""
    t = _axis(basis)
    vecs = make_basis(t.upper()).vectors
    e = {}
    for i, j in PAIRS:
        joint = iso.apply(vecs[i])
        e[i, j] = vecs[j].conj() @ joint
    return ProbeConditionals(t, e)


def conditional_target(params: CollectiveParams) -> np.ndarray:
    """Expected Gram matrix of the conditionals, identical for every basis."""
    f, d = params.fidelity, params.disturbance
    g = np.zeros((4, 4), dtype=complex)
    g[0, 0] = g[3, 3] = f
    g[1, 1] = g[2, 2] = d
    g[0, 3] = g[3, 0] = f * params.cos_theta
    return g


# --- constraint verification ---------------------------------------------------


@dataclass
class BrussReport:
    params: CollectiveParams
    residuals: dict[str, float]

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())

    @property
    def ok(self) -> bool:
        return self.max_residual < TOL


def verify_bruss(params: CollectiveParams) -> BrussReport:
    """Residuals of every probe-vector and conditional-state identity.

    Families:

    * ``normalization``: |A|, |B|, |C|, |D| = 1
    * ``unitarity``: <A|D> + <B|C> = 0
    * ``x_fidelity_sum`` / ``y_fidelity_sum``: the eight-term inner-product
      sums that equal fidelity in the x and y bases force to vanish
    * ``ab_dc``: <A|B> + <D|C> = 0
    * ``re_bd``: Re<B|D> = 0
    * ``re_ac``: Re<A|C> = 2 - 1/F
    * ``fidelity_xy``: F = (1 +/- ...)/2 relations for the x and y bases
    * ``nullities``: <B|D>, Im<A|C>, <A|B>, <D|C>, <A|D>, <B|C> and the
      real/imaginary scalars a, b, alpha, beta all vanish
    * ``basis_fidelity``: <E^t_ii|E^t_ii> = F for all t
    * ``symmetry``: <E^t_ij|E^t_kl> equal across t, all 16 index sets
    * ``conditional_table``: Gram matrix equals {F, 1-F, F cos(theta), 0}
    * ``e00_e11``: <E^t_00|E^t_11> = F Re<A|C>
    * ``isometry``: V^dagger V = 1
    * ``formula_vs_projection``: explicit formulas agree with the isometry
    """
    pv = build_probe_vectors(params)
    A, B, C, D = pv.a, pv.b, pv.c, pv.d

    def ip(u, v):
        return complex(np.vdot(u, v))

    F = params.fidelity
    ac, bd = ip(A, C), ip(B, D)
    ab, ad, bc, dc = ip(A, B), ip(A, D), ip(B, C), ip(D, C)
    ba, cb, cd, da = ip(B, A), ip(C, B), ip(C, D), ip(D, A)

    res: dict[str, float] = {}
    res["normalization"] = max(abs(weight(v) - 1) for v in (A, B, C, D))
    res["unitarity"] = abs(ad + bc)
    res["x_fidelity_sum"] = abs(ab + ad + ba + bc + cb + cd + da + dc)
    res["y_fidelity_sum"] = abs(-ad + ab + da + dc - ba - bc - cd + cb)
    res["ab_dc"] = abs(ab + dc)
    res["re_bd"] = abs(bd.real)
    res["re_ac"] = abs(ac.real - (2 - 1 / F))
    res["fidelity_xy"] = max(
        abs(F - 0.5 * (1 + F * ac.real + (1 - F) * bd.real)),
        abs(F - 0.5 * (1 + F * ac.real - (1 - F) * bd.real)),
    )
    res["nullities"] = max(abs(bd), abs(ac.imag), abs(ab), abs(dc), abs(ad), abs(bc))

    conds = {t: probe_conditionals(params, t) for t in ("x", "y", "z")}
    grams = {t: c.gram() for t, c in conds.items()}
    res["basis_fidelity"] = max(
        abs(c.weight(i, i) - F) for c in conds.values() for i in (0, 1)
    )
    res["symmetry"] = max(
        float(np.abs(grams[t] - grams["z"]).max()) for t in ("x", "y")
    )
    target = conditional_target(params)
    res["conditional_table"] = max(float(np.abs(g - target).max()) for g in grams.values())
    res["e00_e11"] = max(abs(g[0, 3] - F * ac.real) for g in grams.values())

    iso = build_isometry(params)
    res["isometry"] = float(np.abs(dagger(iso.matrix) @ iso.matrix - np.eye(2)).max())
    worst = 0.0
    for t, c in conds.items():
        proj = projected_conditionals(iso, t)
        worst = max(worst, max(float(np.abs(c.e[p] - proj.e[p]).max()) for p in PAIRS))
    res["formula_vs_projection"] = worst
    return BrussReport(params, res)


def symmetry_table(params: CollectiveParams) -> np.ndarray:
    """All 16 x 3 inner products <E^t_ij|E^t_kl>, shape (3, 16), bases x, y, z."""
    rows = []
    for t in ("x", "y", "z"):
        c = probe_conditionals(params, t)
        rows.append([np.vdot(c.e[i, j], c.e[k, l])
                     for (i, j), (k, l) in itertools.product(PAIRS, PAIRS)])
    return np.array(rows)


# --- Eve's probe measurement ----------------------------------------------------


OUTCOMES = ("B", "D", "+", "-")
GUESS = {"B": 0, "D": 1, "+": 0, "-": 1}


@dataclass(frozen=True, eq=False)
class EveMeasurement:
    """Four-outcome projective measurement on the probe for one basis."""

    basis: str
    projectors: dict[str, np.ndarray]

    @property
    def stacked(self) -> np.ndarray:
        return np.stack([self.projectors[k] for k in OUTCOMES])

    def probabilities(self, probe: np.ndarray) -> np.ndarray:
        """Outcome probabilities for a (possibly unnormalized) probe state."""
        w = weight(probe)
        return np.array([np.vdot(probe, self.projectors[k] @ probe).real for k in OUTCOMES]) / w

    def guess_probability(self, probe: np.ndarray, bit: int) -> float:
        p = self.probabilities(probe)
        return float(sum(pk for pk, k in zip(p, OUTCOMES) if GUESS[k] == bit))

    def is_complete(self, tol: float = TOL) -> bool:
        ps = [self.projectors[k] for k in OUTCOMES]
        if not np.allclose(sum(ps), np.eye(PROBE_DIM), rtol=0, atol=tol):
            return False
        if not all(is_projector(p, tol) for p in ps):
            return False
        return all(np.allclose(p @ q, 0, atol=tol) for p, q in itertools.combinations(ps, 2))


def _line_projector(v: np.ndarray) -> np.ndarray:
    if weight(v) <= WEIGHT_EPS:
        return np.zeros((PROBE_DIM, PROBE_DIM), dtype=complex)
    return density(v)


def eve_measurement(params: CollectiveParams, basis: str) -> EveMeasurement:
    cond = probe_conditionals(params, basis)
    pi_b = _line_projector(cond.e[0, 1])
    pi_d = _line_projector(cond.e[1, 0])
    delta = density(cond.e[0, 0]) - density(cond.e[1, 1])
    vals, vecs = np.linalg.eigh(delta)
    pi_plus = np.zeros((PROBE_DIM, PROBE_DIM), dtype=complex)
    for lam, v in zip(vals, vecs.T):
        if lam > EIG_EPS:
            pi_plus += projector(v)
    pi_minus = np.eye(PROBE_DIM) - pi_b - pi_d - pi_plus
    # Symmetrize away rounding so the remainder is Hermitian to machine precision.
    pi_minus = 0.5 * (pi_minus + dagger(pi_minus))
    return EveMeasurement(cond.basis, {"B": pi_b, "D": pi_d, "+": pi_plus, "-": pi_minus})


def sector_success(params: CollectiveParams, basis: str = "z") -> tuple[float, float]:
    """Eve's success on the (00, 11) and (01, 10) sectors under eve_measurement."""
    m = eve_measurement(params, basis)
    cond = probe_conditionals(params, basis)
    no_flip = 0.5 * (m.guess_probability(cond.e[0, 0], 0) + m.guess_probability(cond.e[1, 1], 1))
    if params.disturbance <= 0.0:
        return no_flip, 1.0
    flip = 0.5 * (m.guess_probability(cond.e[0, 1], 0) + m.guess_probability(cond.e[1, 0], 1))
    return no_flip, flip


def eve_guess_batch(measurements: list[EveMeasurement], probes: np.ndarray,
                    basis_idx: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sample Eve's bit guess for each probe state.

    ``measurements[k]`` is used for rounds with ``basis_idx == k``. One
    uniform draw is consumed per round.
    """
    stacked = np.stack([m.stacked for m in measurements])  # (nb, 4, 4, 4)
    proj = stacked[basis_idx]  # (n, 4 outcomes, 4, 4)
    amps = np.einsum("nkab,nb->nka", proj, probes)
    probs = np.einsum("nka,nka->nk", amps.conj(), amps).real
    probs /= probs.sum(axis=1, keepdims=True)
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probes.shape[0])
    outcome = np.minimum((u[:, None] >= cum[:, :-1]).sum(axis=1), 3)
    guess_of = np.array([GUESS[k] for k in OUTCOMES])
    return guess_of[outcome]


# --- analytic curves -------------------------------------------------------------


def _check_d(d: float) -> None:
    if not (math.isfinite(d) and 0.0 <= d <= 0.5):
        raise ContractError(f"disturbance {d!r} outside [0, 1/2]")


def neg_entropy(p: float) -> float:
    """p log2 p + (1-p) log2 (1-p) with 0 log 0 = 0 (minus binary entropy)."""
    out = 0.0
    for x in (p, 1.0 - p):
        if x > 0.0:
            out += x * math.log2(x)
    return out


def pe_curve(d: float) -> float:
    """Eve's optimal guessing probability against the six-state protocol."""
    _check_d(d)
    return 0.5 * (1 + d + math.sqrt((2 - 3 * d) * d))


def ie_curve(d: float) -> float:
    """Eve's Shannon information, from the sector success probabilities."""
    _check_d(d)
    p = make_params(disturbance=d)
    p_no_flip = 0.5 * (1 + p.sin_theta)
    return 1 + p.fidelity * neg_entropy(p_no_flip) + p.disturbance * neg_entropy(1.0)


def ie_closed_form(d: float) -> float:
    """The arccoth expression for Eve's information; valid for 0 < D < 1/2.

    ``arccoth((1-D)/r)`` with ``r = sqrt((2-3D)D)`` is evaluated as
    ``ln((1-D+r)/(1-2D))`` (same value, since ``(1-D)^2 - r^2 = (1-2D)^2``),
    which stays accurate as D approaches 1/2.
    """
    if not 0.0 < d < 0.5:
        raise ContractError("closed form is defined on the open interval (0, 1/2)")
    r = math.sqrt((2 - 3 * d) * d)
    arccoth = math.log((1 - d + r) / (1 - 2 * d))
    ln4 = math.log(4)
    return 1 + 2 * r / ln4 * arccoth - 2 * (1 - d) / ln4 * math.log(2 * (1 - d) / (1 - 2 * d))


def bb84_pe(d: float) -> float:
    _check_d(d)
    return 0.5 + math.sqrt(d * (1 - d))


def bb84_ie(d: float) -> float:
    """Eve's information against BB84; the D = 1/2 endpoint is its limit, 1.

    ``atanh(2s)`` with ``s = sqrt(D(1-D))`` is evaluated as
    ``ln((1+2s)/(1-2D))``; the direct form loses all precision near 1/2.
    """
    _check_d(d)
    if d == 0.5:
        return 1.0
    s = math.sqrt(d * (1 - d))
    atanh_2s = math.log((1 + 2 * s) / (1 - 2 * d))
    return math.log(1 - 2 * d) / math.log(2) + 2 / math.log(2) * s * atanh_2s


def bb84_curves(d: float) -> tuple[float, float, float]:
    """(P_E, I_E, Q_AB) for the optimal symmetric collective attack on BB84."""
    return bb84_pe(d), bb84_ie(d), 1 - d


# --- single-round channel ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CollectiveRound:
    """Joint qubit-probe state after Eve's interaction, before Bob measures."""

    joint: np.ndarray  # (2, 4)
    params: CollectiveParams

    def bob_measure(self, basis, rng: np.random.Generator) -> tuple[int, np.ndarray]:
        """Bob's outcome and the (unnormalized) probe state it leaves behind."""
        amps = basis.matrix @ self.joint  # (2 outcomes, 4)
        w = (amps * amps.conj()).real.sum(axis=1)
        bit = int(rng.random() >= w[0] / w.sum())
        return bit, amps[bit]


def collective_attack_channel(psi: np.ndarray, params: CollectiveParams,
                              rng: np.random.Generator | None = None) -> CollectiveRound:
    """Entangle the probe with one qubit; measurement happens later.

    ``rng`` is accepted for interface symmetry with the intercept/resend
    channel; the interaction itself is deterministic.
    """
    check_normalized(psi)
    return CollectiveRound(build_isometry(params).apply(psi), params)


def helstrom_mc(params: CollectiveParams, rounds: int, rng: np.random.Generator,
                chunk: int = 1 << 16) -> tuple[int, int]:
    """Monte Carlo of Eve's guess on rounds where Alice and Bob share a basis.

    Returns ``(correct, rounds)``. Basis and bit are uniform; Bob's outcome
    is Born-sampled from the joint state and Eve measures the probe state
    it leaves behind.
    """
    iso = build_isometry(params)
    bases = [make_basis(lbl) for lbl in BASIS_LABELS]
    meas = [eve_measurement(params, lbl) for lbl in BASIS_LABELS]
    kets = np.stack([np.stack(b.vectors) for b in bases])  # (3, 2, 2)
    bras = np.stack([b.matrix for b in bases])
    correct = 0
    done = 0
    while done < rounds:
        n = min(chunk, rounds - done)
        t = rng.integers(0, 3, size=n)
        bit = rng.integers(0, 2, size=n)
        joint = iso.apply_batch(kets[t, bit])
        amps = np.einsum("nbq,nqk->nbk", bras[t], joint)
        w = np.einsum("nbk,nbk->nb", amps.conj(), amps).real
        bob = (rng.random(n) >= w[:, 0] / w.sum(axis=1)).astype(int)
        probes = amps[np.arange(n), bob]
        guess = eve_guess_batch(meas, probes, t, rng)
        correct += int((guess == bit).sum())
        done += n
    return correct, rounds
