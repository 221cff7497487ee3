"""Convergence-rate certificates and probabilistic error bounds.

Everything here needs only the worst-case (all-maximal-delay) deflated
mode and, for the mean-error checks, the enumeration-free expected
matrix. Nothing enumerates modes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .modes import spectral_radius


class LyapunovError(RuntimeError):
    """Discrete Lyapunov solve failed (unstable input or bad residual)."""


class HorizonExhaustedError(RuntimeError):
    """Matrix powers never dropped below norm 1 within the horizon."""


def spectral_norm(m: np.ndarray) -> float:
    """Largest singular value."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return float(scipy.linalg.svdvals(m)[0])


@dataclass(frozen=True)
class LyapunovCertificate:
    """P > 0 solving W~' P W~ - P = -I, with the derived decay rate.

    ``rate`` = 1 - 1/lambda_max(P) bounds the squared-norm contraction;
    ``k_const`` = lambda_max/lambda_min is the sandwich prefactor.
    """

    p: np.ndarray
    lambda_max: float
    lambda_min: float
    residual: float

    @property
    def rate(self) -> float:
        return 1.0 - 1.0 / self.lambda_max

    @property
    def k_const(self) -> float:
        return self.lambda_max / self.lambda_min


def lyapunov_series(w_tilde: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    """P = sum_k (W~')^k (W~)^k by squared (Smith) iteration.

    Independent of the direct solver; used as its oracle.
    """
    p = np.eye(w_tilde.shape[0])
    m = np.asarray(w_tilde, dtype=float)
    for _ in range(200):
        increment = m.T @ p @ m
        p = p + increment
        if np.linalg.norm(increment) < tol * np.linalg.norm(p):
            break
        m = m @ m
    else:
        raise LyapunovError("series accumulation did not converge")
    return p


def solve_discrete_lyapunov(w_tilde: np.ndarray) -> LyapunovCertificate:
    """Certificate for a strictly stable deflated mode.

    Solves W~' P W~ - P = -I directly (Kronecker-vectorized below
    dimension ~60, Bartels-Stewart style above) and validates the
    residual and positive definiteness.
    """
    w_tilde = np.asarray(w_tilde, dtype=float)
    n = w_tilde.shape[0]
    rho = spectral_radius(w_tilde)
    if rho >= 1.0:
        raise LyapunovError(
            f"spectral radius {rho} >= 1; Lyapunov equation has no PD solution"
        )
    method = "direct" if n <= 60 else "bilinear"
    p = scipy.linalg.solve_discrete_lyapunov(
        w_tilde.T, np.eye(n), method=method
    )
    p = 0.5 * (p + p.T)
    eigs = np.linalg.eigvalsh(p)
    residual = float(
        np.linalg.norm(w_tilde.T @ p @ w_tilde - p + np.eye(n))
        / np.linalg.norm(p)
    )
    if eigs[0] <= 0:
        raise LyapunovError("solution not positive definite")
    if residual > 1e-8:
        raise LyapunovError(f"relative residual {residual} exceeds 1e-8")
    return LyapunovCertificate(
        p=p,
        lambda_max=float(eigs[-1]),
        lambda_min=float(eigs[0]),
        residual=residual,
    )


def convergence_rate_bound(
    cert: LyapunovCertificate,
    e0_norm: float,
    steps: int,
    k_const: float | None = None,
) -> np.ndarray:
    """Per-step bound on ||e_bar(k)||: sqrt(K * rate**k) * ||e(0)||.

    ``cert`` certifies the worst-case mode; ``k_const`` overrides the
    prefactor (1 when the identity-weighted contraction check passed).
    """
    k = cert.k_const if k_const is None else float(k_const)
    ks = np.arange(steps + 1, dtype=float)
    return np.sqrt(k * cert.rate**ks) * e0_norm


def exact_mean_curve(lam: np.ndarray, e0: np.ndarray, steps: int):
    """Mean-error propagation e_bar(k) = Lambda^k e(0), by iteration.

    Returns (vectors, norms): (steps+1, dim) stacked iterates and their
    Euclidean norms.
    """
    e = np.asarray(e0, dtype=float)
    vectors = np.empty((steps + 1, e.shape[0]))
    vectors[0] = e
    for k in range(1, steps + 1):
        e = lam @ e
        vectors[k] = e
    return vectors, np.linalg.norm(vectors, axis=1)


@dataclass(frozen=True)
class MeanContractionReport:
    """Outcome of the identity-weighted contraction check for Lambda.

    ``margin`` <= 0 means lambda_max(Lambda' Lambda) <= 1 - 1/lambda_max(P_m),
    so the bound holds with prefactor K = 1. Otherwise ``k_const`` comes
    from the condition number of the P solving Lambda' P Lambda - P = -I.
    """

    margin: float
    passed: bool
    k_const: float
    lambda_max_p: float
    smallest_singular_value: float


def verify_mean_contraction(
    lam: np.ndarray, cert: LyapunovCertificate
) -> MeanContractionReport:
    """Check Lambda' P Lambda - P <= -I/lambda_max(P_m) with P = I.

    When the identity-weighted check fails, solves Lambda' P Lambda - P
    = -I directly; the reported prefactor is then the condition number
    of that P, and ``lambda_max_p`` lets callers confirm
    lambda_max(P) <= lambda_max(P_m), which keeps the worst-case rate
    applicable.
    """
    lam = np.asarray(lam, dtype=float)
    gram_top = float(np.linalg.eigvalsh(lam.T @ lam)[-1])
    margin = gram_top - (1.0 - 1.0 / cert.lambda_max)
    svals = scipy.linalg.svdvals(lam)
    if margin <= 0:
        k_const = 1.0
        lambda_max_p = 1.0
    else:
        lam_cert = solve_discrete_lyapunov(lam)
        k_const = lam_cert.k_const
        lambda_max_p = lam_cert.lambda_max
    return MeanContractionReport(
        margin=margin,
        passed=margin <= 0,
        k_const=k_const,
        lambda_max_p=lambda_max_p,
        smallest_singular_value=float(svals[-1]),
    )


@dataclass(frozen=True)
class TailConstants:
    """Constants (k0, c0, c1) bounding ||W~_m^k||^4.

    k0 is the first power whose fourth-powered spectral norm drops below
    1, c1 that value, and c0 the maximum over smaller powers. They give
    lambda_max(P~_m) < k0*c0/(1-c1) for the Kronecker-lifted Lyapunov
    solution, hence the second-moment decay rate.
    """

    k0: int
    c0: float
    c1: float

    @property
    def lifted_lambda_max_bound(self) -> float:
        return self.k0 * self.c0 / (1.0 - self.c1)

    @property
    def second_moment_rate(self) -> float:
        return 1.0 - (1.0 - self.c1) / (self.k0 * self.c0)


def _power_norms(w_tilde: np.ndarray, horizon: int):
    """Yield (k, ||W~^k||) for k = 0, 1, ... up to the horizon."""
    m = np.eye(w_tilde.shape[0])
    for k in range(horizon + 1):
        yield k, spectral_norm(m)
        m = m @ w_tilde


def tail_constants(w_tilde: np.ndarray, horizon: int = 100_000) -> TailConstants:
    """Find (k0, c0, c1) by walking powers of the worst-case mode."""
    w_tilde = np.asarray(w_tilde, dtype=float)
    c0 = 1.0
    smallest = np.inf
    m = np.eye(w_tilde.shape[0])
    u = None  # warm start for the singular-vector iteration
    for k in range(horizon + 1):
        norm_k, u = _top_singular_value(m, u)
        fourth = norm_k**4
        if fourth < 1.0:
            # confirm against the full SVD before committing to k0
            fourth = spectral_norm(m) ** 4
            if fourth < 1.0:
                return TailConstants(k0=k, c0=c0, c1=fourth)
        smallest = min(smallest, fourth)
        c0 = max(c0, fourth)
        m = m @ w_tilde
    raise HorizonExhaustedError(
        f"||W~^k||^4 never dropped below 1 within {horizon} powers "
        f"(smallest seen: {smallest})"
    )


def _top_singular_value(m: np.ndarray, u0=None, tol: float = 1e-12):
    """Largest singular value by power iteration on M'M, warm-started.

    Falls back on the dense SVD for small matrices where it is cheap.
    """
    n = m.shape[0]
    if n <= 64 or u0 is None:
        s = spectral_norm(m)
        # seed the next warm start with the top right singular vector
        _, _, vt = np.linalg.svd(m)
        return s, vt[0]
    u = u0 / np.linalg.norm(u0)
    s = 0.0
    stable = 0
    for _ in range(1000):
        v = m @ u
        w = m.T @ v
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0, u
        s_new = float(np.sqrt(nw))
        u_new = w / nw
        stable = stable + 1 if abs(s_new - s) <= tol * max(s_new, 1.0) else 0
        u, s = u_new, s_new
        if stable >= 2:
            break
    return s, u


@dataclass(frozen=True)
class SecondMomentReport:
    """Verified chain lambda_max(P~_m) < sum ||W~^k||^4 <= k0 c0/(1-c1)."""

    lifted_lambda_max: float
    truncated_sum: float
    tail_bound: float
    chain_holds: bool
    constants: TailConstants


def second_moment_bound_check(
    w_tilde: np.ndarray,
    horizon: int = 500,
    dim_guard: int = 2500,
) -> SecondMomentReport:
    """Solve the Kronecker-lifted Lyapunov equation and verify the chain.

    The lifted dimension (Nnq)^2 must not exceed ``dim_guard``; beyond
    it, only the bound (no direct verification) is available and this
    raises instead.
    """
    w_tilde = np.asarray(w_tilde, dtype=float)
    lifted_dim = w_tilde.shape[0] ** 2
    if lifted_dim > dim_guard:
        raise ValueError(
            f"lifted dimension {lifted_dim} exceeds guard {dim_guard}; "
            "use tail_constants for the bound-only mode"
        )
    gamma = np.kron(w_tilde, w_tilde)
    cert = solve_discrete_lyapunov(gamma)
    tc = tail_constants(w_tilde, horizon=horizon)
    truncated = 0.0
    for k, s in _power_norms(w_tilde, horizon):
        term = s**4
        truncated += term
        if term < 1e-16:
            break
    chain = cert.lambda_max < truncated <= tc.lifted_lambda_max_bound
    return SecondMomentReport(
        lifted_lambda_max=cert.lambda_max,
        truncated_sum=truncated,
        tail_bound=tc.lifted_lambda_max_bound,
        chain_holds=bool(chain),
        constants=tc,
    )


@dataclass(frozen=True)
class ErrorBoundCurve:
    """min(1, beta(k)) bounding Pr(||e(k)||^2 > epsilon) per step."""

    epsilon: float
    values: np.ndarray


def error_probability_bound(
    tc: TailConstants,
    e0: np.ndarray,
    epsilon: float,
    steps: int,
    dim: int | None = None,
    k_const: float = 1.0,
) -> ErrorBoundCurve:
    """Markov tail bound from the second-moment decay rate.

    beta(k) = (sqrt(dim) * K / epsilon) * rate**(k/2) * ||e(0)||^2, with
    dim the augmented dimension (the vec(I) factor) and rate the
    second-moment rate from the tail constants.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    e0 = np.asarray(e0, dtype=float)
    if dim is None:
        dim = e0.shape[0]
    y0_norm = float(np.dot(e0, e0))  # ||vec(e0 e0')|| = ||e0||^2
    ks = np.arange(steps + 1, dtype=float)
    beta = (
        np.sqrt(dim) * k_const / epsilon
        * tc.second_moment_rate ** (ks / 2.0)
        * y0_norm
    )
    return ErrorBoundCurve(epsilon=epsilon, values=np.minimum(1.0, beta))


@dataclass(frozen=True)
class KronNormReport:
    """Both sides of ||(W~ (x) W~)^k|| = ||W~^k||^2."""

    lifted_norm: float
    squared_norm: float

    @property
    def difference(self) -> float:
        return abs(self.lifted_norm - self.squared_norm)


def kron_norm_identity_check(
    w_tilde: np.ndarray, k: int, dim_guard: int = 2500
) -> KronNormReport:
    """Materialize the Kronecker power and compare spectral norms."""
    w_tilde = np.asarray(w_tilde, dtype=float)
    if w_tilde.shape[0] ** 2 > dim_guard:
        raise ValueError("lifted dimension exceeds guard")
    gamma = np.kron(w_tilde, w_tilde)
    lifted = spectral_norm(np.linalg.matrix_power(gamma, k))
    squared = spectral_norm(np.linalg.matrix_power(w_tilde, k)) ** 2
    return KronNormReport(lifted_norm=lifted, squared_norm=squared)
