"""Intercept/resend attack on the six-state protocol.

Eve measures every qubit in the basis ``{V|0>, V|1>}`` with
``V = su2_rotation(alpha, beta, 0)`` and resends the state she observed.
``P_t`` is the probability that her outcome equals Alice's bit and ``Q_t``
the probability that Bob still reads Alice's bit, both conditioned on
Alice and Bob using basis ``t``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .quantum import ContractError, born_sample, rotated_basis

TWO_PI = 2.0 * math.pi
AXES = ("x", "y", "z")

P_OPT = (3.0 + math.sqrt(3.0)) / 6.0
P_WORST = (3.0 - math.sqrt(3.0)) / 6.0
Q_OPT = 2.0 / 3.0
SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class IRStrategy:
    """Eve's measurement angles, reduced into [0, 2pi)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ContractError("strategy angles must be finite")
        object.__setattr__(self, "alpha", _reduce(self.alpha))
        object.__setattr__(self, "beta", _reduce(self.beta))


def _reduce(angle: float) -> float:
    r = math.fmod(angle, TWO_PI) % TWO_PI
    # A tiny negative input rounds up to exactly 2pi.
    return 0.0 if r >= TWO_PI else r


@dataclass(frozen=True)
class IRReport:
    p: dict[str, float]
    q: dict[str, float]

    @property
    def p_mean(self) -> float:
        return sum(self.p.values()) / 3.0

    @property
    def p_min(self) -> float:
        return min(self.p.values())


@dataclass(frozen=True)
class SymmetricSolution:
    alpha: float
    beta: float
    p_common: float
    q_common: float
    optimal: bool


def _pq(alpha, beta):
    """Closed forms for (P_x, P_y, P_z), (Q_x, Q_y, Q_z); broadcasts over arrays."""
    ca, sa = np.cos(alpha), np.sin(alpha)
    sb = np.sin(beta)
    c2, s2 = np.cos(beta / 2) ** 2, np.sin(beta / 2) ** 2
    cos2b = np.cos(2 * beta)
    p = (
        0.5 * (1 + ca * sb),
        0.5 * (1 + sa * sb),
        c2,
    )
    q = (
        (5 + np.cos(2 * alpha) - 2 * ca**2 * cos2b) / 8,
        (5 - np.cos(2 * alpha) - 2 * sa**2 * cos2b) / 8,
        c2**2 + s2**2,
    )
    return p, q


def ir_analytic(strategy: IRStrategy) -> IRReport:
    p, q = _pq(strategy.alpha, strategy.beta)
    return IRReport(
        p={t: float(v) for t, v in zip(AXES, p)},
        q={t: float(v) for t, v in zip(AXES, q)},
    )


def symmetric_betas() -> list[tuple[float, float]]:
    """The four (alpha, beta) pairs with P_x = P_y = P_z, in closed form."""
    lo = math.sqrt((3 - math.sqrt(3)) / 6)
    hi = math.sqrt((3 + math.sqrt(3)) / 6)
    return [
        (math.pi / 4, 2 * math.acos(-lo)),
        (math.pi / 4, 2 * math.acos(hi)),
        (5 * math.pi / 4, 2 * math.acos(lo)),
        (5 * math.pi / 4, 2 * math.acos(-hi)),
    ]


def solve_symmetric() -> list[SymmetricSolution]:
    """All strategies with equal guessing probability in the three bases.

    Roots come from closed forms; each is checked against the analytic
    P/Q formulas and a ``RuntimeError`` is raised if a residual exceeds
    ``SYMMETRY_TOL``.
    """
    out = []
    for alpha, beta in symmetric_betas():
        rep = ir_analytic(IRStrategy(alpha, beta))
        px, py, pz = (rep.p[t] for t in AXES)
        spread = max(abs(px - py), abs(py - pz), abs(px - pz))
        if spread > SYMMETRY_TOL:
            raise RuntimeError(f"symmetric root ({alpha}, {beta}) has residual {spread:g}")
        qs = list(rep.q.values())
        out.append(
            SymmetricSolution(
                alpha=alpha,
                beta=beta,
                p_common=pz,
                q_common=sum(qs) / 3,
                optimal=abs(pz - P_OPT) < SYMMETRY_TOL,
            )
        )
    return out


@dataclass
class ScanResult:
    """Outcome of a uniform (alpha, beta) grid scan over [0, 2pi)^2."""

    alphas: np.ndarray
    betas: np.ndarray
    p: np.ndarray  # (3, n_alpha, n_beta), axes x, y, z
    q: np.ndarray
    bound: float
    candidates: np.ndarray
    clusters: list[list[tuple[int, int]]] = field(default_factory=list)

    def __len__(self) -> int:
        return self.alphas.size * self.betas.size

    def report(self, i: int, j: int) -> IRReport:
        return IRReport(
            p={t: float(self.p[k, i, j]) for k, t in enumerate(AXES)},
            q={t: float(self.q[k, i, j]) for k, t in enumerate(AXES)},
        )

    def rows(self):
        """Yield ``(alpha, beta, IRReport)`` for every grid cell."""
        for i, a in enumerate(self.alphas):
            for j, b in enumerate(self.betas):
                yield float(a), float(b), self.report(i, j)

    @property
    def p_min(self) -> np.ndarray:
        return self.p.min(axis=0)

    @property
    def p_mean(self) -> np.ndarray:
        return self.p.mean(axis=0)

    def max_min_p(self) -> float:
        return float(self.p_min.max())

    def cluster_centres(self) -> list[tuple[float, float]]:
        """Circular-mean centre of each candidate cluster."""
        centres = []
        for cells in self.clusters:
            ii = np.array([c[0] for c in cells])
            jj = np.array([c[1] for c in cells])
            centres.append((_circular_mean(self.alphas[ii]), _circular_mean(self.betas[jj])))
        return centres


def _circular_mean(angles: np.ndarray) -> float:
    return float(math.atan2(np.sin(angles).mean(), np.cos(angles).mean()) % TWO_PI)


def _periodic_components(mask: np.ndarray) -> list[list[tuple[int, int]]]:
    """8-connected components of a boolean mask on a torus."""
    n, m = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for start in zip(*np.nonzero(mask)):
        if seen[start]:
            continue
        seen[start] = True
        queue = deque([start])
        comp = []
        while queue:
            i, j = queue.popleft()
            comp.append((int(i), int(j)))
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    ni, nj = (i + di) % n, (j + dj) % m
                    if mask[ni, nj] and not seen[ni, nj]:
                        seen[ni, nj] = True
                        queue.append((ni, nj))
        comps.append(comp)
    return comps


def ir_scan(alpha_steps: int, beta_steps: int) -> ScanResult:
    """Evaluate P_t, Q_t over a uniform grid and flag near-symmetric cells.

    A cell is a symmetry candidate when ``max_t |P_t - P_s| < 2 * step``
    (unit gradient bound, ``step`` the coarser grid spacing), so no exact
    root can fall between grid points unflagged.
    """
    if alpha_steps < 2 or beta_steps < 2:
        raise ContractError("scan needs at least 2 steps per axis")
    alphas = np.arange(alpha_steps) * (TWO_PI / alpha_steps)
    betas = np.arange(beta_steps) * (TWO_PI / beta_steps)
    a, b = np.meshgrid(alphas, betas, indexing="ij")
    p, q = _pq(a, b)
    p = np.stack(p)
    q = np.stack(q)
    spread = p.max(axis=0) - p.min(axis=0)
    bound = 2.0 * max(TWO_PI / alpha_steps, TWO_PI / beta_steps)
    mask = spread < bound
    return ScanResult(alphas, betas, p, q, bound, mask, _periodic_components(mask))


def ir_attack_channel(psi: np.ndarray, strategy: IRStrategy, rng: np.random.Generator):
    """Intercept one qubit: returns ``(delivered_state, eve_bit)``."""
    basis = rotated_basis(strategy.alpha, strategy.beta)
    j = born_sample(psi, basis, rng)
    return basis.vectors[j].copy(), j


def bb84_breidbart_constants() -> tuple[float, float]:
    """Eve's guess and Alice/Bob's no-detection probabilities against BB84."""
    return (2 + math.sqrt(2)) / 4, 3 / 4
