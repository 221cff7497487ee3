"""Switched-system view of the buffered asynchronous update.

The augmented state stacks the q most recent grid states. Every assignment
of a delay in {0, .., q-1} to each cross-PE dependency edge yields one mode
matrix; all modes share the two unit eigenvalues whose eigenvectors define
the rank-2 steady-state projector.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, build_sync_matrix


class ModeCountError(ValueError):
    """Mode enumeration refused: too many modes."""


class DeflationError(RuntimeError):
    """Deflated mode matrix is not strictly stable (construction bug)."""


@dataclass(frozen=True)
class AugmentedSpec:
    """Grid plus buffer length q; fixes the augmented dimension Nnq.

    Dependency edges are the (updating point, neighbor) pairs where the
    neighbor lives in a different PE and the updating point is not a
    Dirichlet endpoint. Edges are ordered by updating point, left
    neighbor before right; delay patterns and mode indices follow this
    order lexicographically.
    """

    grid: GridSpec
    buffer_len: int

    def __post_init__(self) -> None:
        if self.buffer_len < 1:
            raise ValueError("buffer_len must be >= 1")

    @property
    def dim(self) -> int:
        return self.grid.total_points * self.buffer_len

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        """Directed cross-PE dependency edges, 0-based global indices."""
        g = self.grid
        out = []
        for i in range(1, g.total_points - 1):
            for nb in (i - 1, i + 1):
                if g.pe_of(nb) != g.pe_of(i):
                    out.append((i, nb))
        return tuple(out)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def mode_count(self) -> int:
        return self.buffer_len**self.num_edges


@dataclass(frozen=True)
class ModeMatrix:
    """One mode of the switched system: matrix plus its delay pattern."""

    w: np.ndarray
    delays: tuple[int, ...]


@dataclass(frozen=True)
class SwitchingDistribution:
    """Per-edge categorical delay distributions, independent across edges.

    ``probs[e, d]`` is the probability that edge e reads with delay d.
    The mode probability of a delay pattern is the product of its
    per-edge probabilities.
    """

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2:
            raise ValueError("probs must be a (num_edges, q) array")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if p.shape[0] > 0 and np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("each per-edge distribution must sum to 1")
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, aspec: AugmentedSpec) -> "SwitchingDistribution":
        q = aspec.buffer_len
        return cls(np.full((aspec.num_edges, q), 1.0 / q))

    @classmethod
    def from_delay_probs(
        cls, aspec: AugmentedSpec, delay_probs
    ) -> "SwitchingDistribution":
        """Same categorical over delays applied to every edge."""
        p = np.asarray(delay_probs, dtype=float)
        if p.shape != (aspec.buffer_len,):
            raise ValueError("delay_probs must have length q")
        return cls(np.tile(p, (aspec.num_edges, 1)))

    @property
    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs, axis=1)


def build_mode_matrix(aspec: AugmentedSpec, delays) -> ModeMatrix:
    """Mode matrix for one delay pattern.

    Block row 0 realizes the buffered stencil update: the r-entry of each
    cross-PE edge sits in the block column given by that edge's delay;
    within-PE reads use block 0. Block rows 1..q-1 shift the history.
    """
    delays = tuple(int(d) for d in np.asarray(delays, dtype=int).ravel())
    if len(delays) != aspec.num_edges:
        raise ValueError(
            f"pattern length {len(delays)} != num_edges {aspec.num_edges}"
        )
    q = aspec.buffer_len
    if any(d < 0 or d >= q for d in delays):
        raise ValueError(f"delays must lie in [0, {q - 1}]")

    g = aspec.grid
    nn = g.total_points
    r = g.r
    w = np.zeros((aspec.dim, aspec.dim))
    for b in range(1, q):
        w[b * nn:(b + 1) * nn, (b - 1) * nn:b * nn] = np.eye(nn)
    w[0, 0] = 1.0
    w[nn - 1, nn - 1] = 1.0
    cross = set(aspec.edges)
    for i in range(1, nn - 1):
        w[i, i] = 1.0 - 2.0 * r
        for nb in (i - 1, i + 1):
            if (i, nb) not in cross:
                w[i, nb] = r
    for d, (i, nb) in zip(delays, aspec.edges):
        w[i, d * nn + nb] = r
    return ModeMatrix(w=w, delays=delays)


def worst_case_mode(aspec: AugmentedSpec) -> ModeMatrix:
    """The all-maximal-delay mode W_m (every edge reads the oldest buffer)."""
    return build_mode_matrix(
        aspec, (aspec.buffer_len - 1,) * aspec.num_edges
    )


def enumerate_modes(aspec: AugmentedSpec, cap: int = 100_000) -> list[ModeMatrix]:
    """All q**E mode matrices, lexicographic in the delay pattern.

    The all-zero pattern (synchronous) comes first and the all-(q-1)
    pattern (most delayed) last. Refuses when the mode count exceeds
    ``cap``.
    """
    m = aspec.mode_count
    if m > cap:
        raise ModeCountError(
            f"mode count {m} exceeds cap {cap}; "
            "use the enumeration-free analysis paths"
        )
    return [
        build_mode_matrix(aspec, pattern)
        for pattern in itertools.product(
            range(aspec.buffer_len), repeat=aspec.num_edges
        )
    ]


@dataclass(frozen=True)
class SteadyStateProjector:
    """Rank-2 idempotent shared by all modes; X_ss = psi @ X(0)."""

    psi: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    s1: np.ndarray
    s2: np.ndarray


def build_projector(aspec: AugmentedSpec) -> SteadyStateProjector:
    """Common unit-eigenvalue eigenvectors and the projector psi.

    s1/s2 select the first/last coordinate of the newest grid block;
    v1/v2 are the two boundary ramps repeated over all q blocks.
    """
    nn = aspec.grid.total_points
    q = aspec.buffer_len
    d = aspec.dim
    j = np.arange(nn, dtype=float)
    mu1 = (nn - 1 - j) / (nn - 1)
    mu2 = j / (nn - 1)
    v1 = np.tile(mu1, q)
    v2 = np.tile(mu2, q)
    s1 = np.zeros(d)
    s1[0] = 1.0
    s2 = np.zeros(d)
    s2[nn - 1] = 1.0
    psi = np.outer(v1, s1) + np.outer(v2, s2)
    return SteadyStateProjector(psi=psi, v1=v1, v2=v2, s1=s1, s2=s2)


def _as_matrix(w) -> np.ndarray:
    return w.w if isinstance(w, ModeMatrix) else np.asarray(w, dtype=float)


def spectral_radius(m: np.ndarray) -> float:
    """Spectral radius; dense eigensolver below 500, power iteration above."""
    if m.shape[0] < 500:
        return float(np.max(np.abs(np.linalg.eigvals(m))))
    # power iteration on a shifted/normalized iterate; good enough for the
    # stability guard at large dimension
    rng = np.random.default_rng(0)
    x = rng.standard_normal(m.shape[0])
    x /= np.linalg.norm(x)
    rho = 0.0
    for _ in range(2000):
        y = m @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        rho_new = ny
        x = y / ny
        if abs(rho_new - rho) < 1e-12 * max(rho_new, 1.0):
            rho = rho_new
            break
        rho = rho_new
    return float(rho)


def deflate(w, proj: SteadyStateProjector) -> np.ndarray:
    """Remove the shared unit-eigenvalue subspace: W_tilde = W - psi.

    Raises DeflationError if the result is not strictly stable, which
    indicates a construction bug upstream.
    """
    wt = _as_matrix(w) - proj.psi
    rho = spectral_radius(wt)
    if rho >= 1.0 - 1e-12:
        raise DeflationError(f"deflated matrix has spectral radius {rho}")
    return wt


def expected_matrix(
    aspec: AugmentedSpec,
    dist: SwitchingDistribution,
    proj: SteadyStateProjector | None = None,
) -> np.ndarray:
    """Expected deflated mode Lambda = E[W] - psi, without enumeration.

    Linearity in the per-edge r-entries lets E[W] be assembled by
    spreading each edge's r across delay block-columns weighted by that
    edge's delay probabilities.
    """
    if dist.probs.shape != (aspec.num_edges, aspec.buffer_len):
        raise ValueError("distribution shape does not match aspec")
    if proj is None:
        proj = build_projector(aspec)
    nn = aspec.grid.total_points
    r = aspec.grid.r
    ew = build_mode_matrix(aspec, (0,) * aspec.num_edges).w.copy()
    for e, (i, nb) in enumerate(aspec.edges):
        ew[i, nb] = 0.0  # remove the zero-delay placement
        for d in range(aspec.buffer_len):
            ew[i, d * nn + nb] += r * dist.probs[e, d]
    return ew - proj.psi


def enumerated_expected_matrix(
    aspec: AugmentedSpec,
    dist: SwitchingDistribution,
    proj: SteadyStateProjector | None = None,
    cap: int = 100_000,
) -> np.ndarray:
    """Lambda by brute-force enumeration; oracle for expected_matrix."""
    if proj is None:
        proj = build_projector(aspec)
    lam = np.zeros((aspec.dim, aspec.dim))
    for mode in enumerate_modes(aspec, cap=cap):
        pi = mode_probability(mode.delays, dist)
        lam += pi * (mode.w - proj.psi)
    return lam


def mode_probability(delays, dist: SwitchingDistribution) -> float:
    """Product of per-edge delay probabilities for one pattern."""
    delays = np.asarray(delays, dtype=int).ravel()
    if delays.shape[0] != dist.probs.shape[0]:
        raise ValueError("pattern length does not match distribution")
    if delays.shape[0] == 0:
        return 1.0
    return float(np.prod(dist.probs[np.arange(len(delays)), delays]))


@dataclass(frozen=True)
class EigenstructureReport:
    """Numerical check of the shared eigenstructure of one mode."""

    right_residuals: tuple[float, float]
    left_residuals: tuple[float, float]
    top_moduli: tuple[float, float, float]
    inf_norm: float
    passed: bool


def verify_eigenstructure(
    w, proj: SteadyStateProjector, tol: float = 1e-10
) -> EigenstructureReport:
    """Check the two-unit-eigenvalue claim for one mode matrix.

    Verifies W v_i = v_i and s_i W = s_i, and that exactly the two
    largest eigenvalue moduli equal 1 within ``tol`` with the third
    strictly below 1.
    """
    m = _as_matrix(w)
    rres = tuple(
        float(np.linalg.norm(m @ v - v)) for v in (proj.v1, proj.v2)
    )
    lres = tuple(
        float(np.linalg.norm(s @ m - s)) for s in (proj.s1, proj.s2)
    )
    moduli = np.sort(np.abs(np.linalg.eigvals(m)))[::-1]
    top = tuple(float(x) for x in moduli[:3])
    passed = (
        max(rres) < 1e-10
        and max(lres) < 1e-10
        and abs(top[0] - 1.0) < tol
        and abs(top[1] - 1.0) < tol
        and top[2] < 1.0 - 1e-12
    )
    return EigenstructureReport(
        right_residuals=rres,
        left_residuals=lres,
        top_moduli=top,
        inf_norm=float(np.max(np.abs(m).sum(axis=1))),
        passed=passed,
    )
