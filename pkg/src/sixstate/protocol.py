"""Prepare-and-measure session engine for the six-state and BB84 schemes.

Each round Alice picks a basis and bit uniformly, the attack acts on the
qubit, Bob measures in a uniformly chosen basis, and the round is kept if
the bases agree. Eve's guess is scored against Alice's bit on kept rounds;
for the collective attack she measures her probe only after the basis is
announced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .collective import (
    CollectiveParams,
    build_isometry,
    eve_guess_batch,
    eve_measurement,
    make_params,
)
from .intercept_resend import IRStrategy
from .montecarlo import binomial_se, run_sharded
from .quantum import ContractError, MeasurementBasis, make_basis, rotated_basis

MAX_BASES = 3


class InvariantViolation(RuntimeError):
    """A simulated quantity broke a contract that holds by construction."""


@dataclass(frozen=True, eq=False)
class SchemeConfig:
    scheme: str
    bases: tuple[MeasurementBasis, ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(b.label for b in self.bases)

    @property
    def kets(self) -> np.ndarray:
        """(n_bases, 2 bits, 2 amplitudes)."""
        return np.stack([np.stack(b.vectors) for b in self.bases])

    @property
    def bras(self) -> np.ndarray:
        return np.stack([b.matrix for b in self.bases])


def scheme_config(scheme: str) -> SchemeConfig:
    key = scheme.lower().replace("_", "-")
    if key in ("six-state", "sixstate", "6-state"):
        return SchemeConfig("six-state", tuple(make_basis(t) for t in ("Z", "X", "Y")))
    if key == "bb84":
        return SchemeConfig("bb84", tuple(make_basis(t) for t in ("Z", "X")))
    raise ContractError(f"unknown scheme {scheme!r}; expected six-state or bb84")


# --- attack models ---------------------------------------------------------------
#
# intercept(states, rng) -> (joint, eve_bits)
#   states: (n, 2) input qubits; joint: (n, 2, k) qubit x register amplitudes
#   eve_bits: (n,) immediate guesses, or None when Eve decides later
# resolve(probes, basis_labels, basis_idx, rng) -> guesses, for deferred attacks


@dataclass(frozen=True)
class NoAttack:
    name: str = "none"
    deferred: bool = False

    def intercept(self, states, rng):
        return states[:, :, None], None


@dataclass(frozen=True, eq=False)
class InterceptResend:
    strategy: IRStrategy
    name: str = "intercept-resend"
    deferred: bool = False

    def intercept(self, states, rng):
        basis = rotated_basis(self.strategy.alpha, self.strategy.beta)
        amps = states @ basis.matrix.T  # <xi_j|psi>
        p0 = np.abs(amps[:, 0]) ** 2 / (np.abs(amps) ** 2).sum(axis=1)
        j = (rng.random(states.shape[0]) >= p0).astype(int)
        resent = np.stack(basis.vectors)[j]
        return resent[:, :, None], j


@dataclass(frozen=True, eq=False)
class CollectiveAttack:
    params: CollectiveParams
    name: str = "collective"
    deferred: bool = True

    def intercept(self, states, rng):
        return build_isometry(self.params).apply_batch(states), None

    def resolve(self, probes, labels, basis_idx, rng):
        meas = [eve_measurement(self.params, lbl) for lbl in labels]
        return eve_guess_batch(meas, probes, basis_idx, rng)


def attack_registry(name: str, **params):
    """Build an attack model by name.

    ``"none"``; ``"intercept-resend"`` with ``alpha``, ``beta``;
    ``"collective"`` with one of ``disturbance``, ``theta``, ``fidelity``.
    """
    key = name.lower()
    if key == "none":
        if params:
            raise ContractError(f"attack 'none' takes no parameters (got {sorted(params)})")
        return NoAttack()
    if key in ("intercept-resend", "ir"):
        extra = set(params) - {"alpha", "beta"}
        if extra or len(params) != 2:
            raise ContractError("intercept-resend needs exactly alpha and beta")
        return InterceptResend(IRStrategy(float(params["alpha"]), float(params["beta"])))
    if key == "collective":
        return CollectiveAttack(make_params(**params))
    raise ContractError(f"unknown attack {name!r}; expected none, intercept-resend or collective")


# --- sessions ----------------------------------------------------------------------

# Counter layout per shard: [rounds, (sifted, errors, eve_correct) x MAX_BASES,
#                            unsifted, eve_correct_unsifted]
_N_COUNTERS = 1 + 3 * MAX_BASES + 2


def _session_task(config: SchemeConfig, attack, n: int, rng: np.random.Generator) -> np.ndarray:
    nb = len(config.bases)
    kets, bras = config.kets, config.bras
    a_basis = rng.integers(0, nb, size=n)
    a_bit = rng.integers(0, 2, size=n)
    joint, eve_bits = attack.intercept(kets[a_basis, a_bit], rng)

    b_basis = rng.integers(0, nb, size=n)
    amps = np.einsum("nbq,nqk->nbk", bras[b_basis], joint)
    w = np.einsum("nbk,nbk->nb", amps.conj(), amps).real
    b_bit = (rng.random(n) >= w[:, 0] / w.sum(axis=1)).astype(int)

    if attack.deferred:
        probes = amps[np.arange(n), b_bit]
        eve_bits = attack.resolve(probes, config.labels, a_basis, rng)

    sifted = a_basis == b_basis
    error = sifted & (b_bit != a_bit)
    eve_ok = np.zeros(n, dtype=bool) if eve_bits is None else (eve_bits == a_bit)

    out = np.zeros(_N_COUNTERS, dtype=np.int64)
    out[0] = n
    for k in range(nb):
        sel = sifted & (a_basis == k)
        out[1 + 3 * k] = sel.sum()
        out[2 + 3 * k] = (error & sel).sum()
        out[3 + 3 * k] = (eve_ok & sel).sum()
    out[-2] = (~sifted).sum()
    out[-1] = (eve_ok & ~sifted).sum()
    return out


@dataclass
class BasisCounts:
    sifted: int
    errors: int
    eve_correct: int | None


@dataclass
class SessionStats:
    scheme: str
    attack: str
    rounds: int
    sifted: int
    errors_in_sifted: int
    eve_correct_in_sifted: int | None
    per_basis: dict[str, BasisCounts] = field(default_factory=dict)
    # Recorded but not part of the reported rates.
    eve_correct_unsifted: int | None = None

    @property
    def sift_rate(self) -> float:
        return self.sifted / self.rounds

    @property
    def qber(self) -> float:
        return self.errors_in_sifted / self.sifted if self.sifted else math.nan

    @property
    def q_ab(self) -> float:
        return 1.0 - self.qber

    @property
    def eve_accuracy(self) -> float | None:
        if self.eve_correct_in_sifted is None or not self.sifted:
            return None
        return self.eve_correct_in_sifted / self.sifted

    def standard_errors(self) -> dict[str, float | None]:
        eve = self.eve_accuracy
        return {
            "sift_rate": binomial_se(self.sift_rate, self.rounds),
            "qber": binomial_se(self.qber, self.sifted),
            "q_ab": binomial_se(self.q_ab, self.sifted),
            "eve_accuracy": None if eve is None else binomial_se(eve, self.sifted),
        }

    def basis_rates(self, label: str) -> dict[str, float | None]:
        c = self.per_basis[label]
        q = 1 - c.errors / c.sifted if c.sifted else math.nan
        eve = None if c.eve_correct is None or not c.sifted else c.eve_correct / c.sifted
        return {
            "q_ab": q,
            "q_ab_se": binomial_se(q, c.sifted),
            "eve_accuracy": eve,
            "eve_accuracy_se": None if eve is None else binomial_se(eve, c.sifted),
        }

    def check_invariants(self) -> None:
        problems = []
        if not 0 <= self.sifted <= self.rounds:
            problems.append("sifted outside [0, rounds]")
        if not 0 <= self.errors_in_sifted <= self.sifted:
            problems.append("errors outside [0, sifted]")
        if self.eve_correct_in_sifted is not None and not 0 <= self.eve_correct_in_sifted <= self.sifted:
            problems.append("eve_correct outside [0, sifted]")
        if sum(c.sifted for c in self.per_basis.values()) != self.sifted:
            problems.append("per-basis sift counts do not add up")
        if self.attack == "none" and self.errors_in_sifted:
            problems.append("errors without an attack")
        if problems:
            raise InvariantViolation("; ".join(problems))

    def to_dict(self) -> dict:
        se = self.standard_errors()
        return {
            "scheme": self.scheme,
            "attack": self.attack,
            "rounds": self.rounds,
            "sifted": self.sifted,
            "errors_in_sifted": self.errors_in_sifted,
            "eve_correct_in_sifted": self.eve_correct_in_sifted,
            "sift_rate": self.sift_rate,
            "sift_rate_se": se["sift_rate"],
            "qber": self.qber,
            "qber_se": se["qber"],
            "q_ab": self.q_ab,
            "q_ab_se": se["q_ab"],
            "eve_accuracy": self.eve_accuracy,
            "eve_accuracy_se": se["eve_accuracy"],
            "per_basis": {
                lbl: {"sifted": c.sifted, "errors": c.errors, "eve_correct": c.eve_correct,
                      **self.basis_rates(lbl)}
                for lbl, c in self.per_basis.items()
            },
        }


def run_session(config: SchemeConfig, attack=None, rounds: int = 1_000_000, seed: int = 0,
                workers: int = 1) -> SessionStats:
    """Simulate ``rounds`` protocol rounds; deterministic in ``seed``."""
    if rounds < 1:
        raise ContractError("rounds must be >= 1")
    attack = attack or NoAttack()
    counts = run_sharded(partial(_session_task, config, attack), rounds, seed, workers)
    has_eve = attack.name != "none"
    per_basis = {}
    for k, lbl in enumerate(config.labels):
        s, e, ok = (int(v) for v in counts[1 + 3 * k: 4 + 3 * k])
        per_basis[lbl] = BasisCounts(s, e, ok if has_eve else None)
    stats = SessionStats(
        scheme=config.scheme,
        attack=attack.name,
        rounds=int(counts[0]),
        sifted=sum(c.sifted for c in per_basis.values()),
        errors_in_sifted=sum(c.errors for c in per_basis.values()),
        eve_correct_in_sifted=(sum(c.eve_correct for c in per_basis.values()) if has_eve else None),
        per_basis=per_basis,
        eve_correct_unsifted=int(counts[-1]) if has_eve else None,
    )
    stats.check_invariants()
    return stats
