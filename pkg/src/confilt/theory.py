"""Mean-square performance prediction for the constrained logarithmic-cost filter.

The analysis tracks the weight-deviation correlation Phi(n) = E[wt(n) wt(n)^T]
(wt = optimal weights minus current weights, confined to range(P)) through the
weighted-variance recursion

    Phi(n+1) = unvec(F(n)^T vec(Phi(n))) + mu^2 h_U(n) unvec(gamma),

    F(n)  = I - 2 mu h_G(n) kron((P R P)^T, I_L)      (column-stacking vec)
    gamma = vec(P R P)

where the two moment functionals of the error kernel g,

    h_G = E[e g(e)] / E[e^2],      h_U = E[g^2(e)],

are evaluated for zero-mean Gaussian e with variance sigma_e^2(n) =
trace(R Phi(n)) + sigma_v^2. Both are computed by Gauss-Hermite quadrature
with adaptive node doubling.

The steady-state closed form replaces the exact functionals with their
small-error Gaussian-moment approximation (h_G ~ 3 alpha sigma_e^2,
h_U ~ 15 alpha^2 sigma_e^6), which turns the fixed-point condition into a
quadratic in the excess error power and yields

    emse(inf) = (1 - 5 a mu b sv2 - sqrt(1 - 10 a mu b sv2)) / (5 a mu b),

with b = gamma^T S^+ vec(R), S = kron(P R P, I_L). The minus root is the
physical one (it vanishes with the noise). The approximation is accurate
for alpha * sigma_e^2 << 1; the transient recursion never uses it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_hermite

from .constraints import ConstraintSet, kron, unvec, vec
from .kernels import AlgorithmParams, DivergenceError
from .simulation import SignalModel, optimal_constrained_wiener


@dataclass(frozen=True)
class GaussianErrorModel:
    """Zero-mean Gaussian error with variance sigma_e2, kernel parameter alpha."""

    sigma_e2: float
    alpha: float

    def __post_init__(self):
        if self.sigma_e2 < 0:
            raise ValueError(f"error variance must be >= 0, got {self.sigma_e2}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")


@dataclass(eq=False)
class TheoryTrace:
    """Predicted transient curves; weight_correlation is the final Phi."""

    msd: np.ndarray  # E||wt(n)||^2, n = 0..N
    emse: np.ndarray  # E||wt(n)||^2_R, n = 0..N
    weight_correlation: np.ndarray  # Phi(N), L x L


@dataclass(frozen=True)
class SteadyStatePrediction:
    """Closed-form asymptotic values (NaN fields when the regime is invalid)."""

    emse: float
    msd: float
    beta_factor: float
    hG_ss: float
    hU_ss: float
    discriminant: float
    valid: bool


_node_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

_MIN_NODES = 64
_MAX_NODES = 4096
_QUAD_RTOL = 1e-11


def _hermite_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _node_cache:
        x, w = roots_hermite(n)
        _node_cache[n] = (x, w / np.sqrt(np.pi))
    return _node_cache[n]


def _gauss_expectation(func, sigma2: float) -> float:
    """E[func(e)] for e ~ N(0, sigma2), nodes doubled until converged."""
    scale = np.sqrt(2.0 * sigma2)
    with np.errstate(over="ignore"):
        n = _MIN_NODES
        x, w = _hermite_nodes(n)
        prev = float(w @ func(scale * x))
        while n < _MAX_NODES:
            n *= 2
            x, w = _hermite_nodes(n)
            val = float(w @ func(scale * x))
            if abs(val - prev) <= _QUAD_RTOL * max(abs(val), 1e-300):
                return val
            prev = val
    return prev


def h_G(model: GaussianErrorModel) -> float:
    """Gradient-correlation functional E[e g(e)] / E[e^2], in (0, 1).

    Equals (1/sigma_e2) E[alpha e^4 / (1 + alpha e^2)]; tends to
    3 alpha sigma_e2 for small alpha and to 1 for large alpha.
    """
    s2, a = model.sigma_e2, model.alpha
    if s2 == 0.0:
        return 0.0
    # e^2 * x/(1+x) with x = alpha e^2, written overflow-safe
    return _gauss_expectation(lambda e: e * e * (1.0 - 1.0 / (1.0 + a * e * e)), s2) / s2


def h_U(model: GaussianErrorModel) -> float:
    """Squared-kernel power E[g^2(e)], in (0, sigma_e2).

    Equals E[alpha^2 e^6 / (1 + alpha e^2)^2]; tends to
    15 alpha^2 sigma_e2^3 for small alpha and to sigma_e2 for large alpha.
    """
    s2, a = model.sigma_e2, model.alpha
    if s2 == 0.0:
        return 0.0
    return _gauss_expectation(
        lambda e: e * e * (1.0 - 1.0 / (1.0 + a * e * e)) ** 2, s2
    )


def variance_transition(
    R: np.ndarray, P: np.ndarray, mu: float, hG: float, hU: float
) -> tuple[np.ndarray, np.ndarray]:
    """One-step weighted-variance map in vec coordinates.

    Returns (F, drive) with F = I - 2 mu hG kron((P R P)^T, I) and
    drive = mu^2 hU vec(P R P), so that for any weighting matrix S,
    unvec(F @ vec(S)) == S - 2 mu hG S (P R P).
    """
    R = np.asarray(R, dtype=float)
    P = np.asarray(P, dtype=float)
    if R.shape != P.shape or R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError(f"R and P must be square and same shape, got {R.shape} vs {P.shape}")
    L = R.shape[0]
    M = P @ R @ P
    F = np.eye(L * L) - (2.0 * mu * hG) * kron(M.T, np.eye(L))
    gamma = vec(M)
    return F, (mu * mu * hU) * gamma


def transient_predictor(
    scenario: SignalModel,
    cs: ConstraintSet,
    params: AlgorithmParams,
    w0: np.ndarray,
    N: int,
) -> TheoryTrace:
    """Iterate the variance recursion from w(0) = w0 for N steps.

    The initial deviation is projected onto range(P), matching the
    feasible-start convention of the simulations. Emits msd(n) = trace(Phi)
    and emse(n) = trace(R Phi) for n = 0..N.
    """
    if N < 1:
        raise ValueError(f"need at least one iteration, got N={N}")
    R = scenario.R
    L = R.shape[0]
    w_o = optimal_constrained_wiener(scenario, cs)
    wt0 = cs.P @ (w_o - np.asarray(w0, dtype=float))
    phi = np.outer(wt0, wt0)

    M = cs.P @ R @ cs.P
    # F(n)^T differs from F(n) only through h_G(n); precompute the fixed part.
    KT = kron(M, np.eye(L))
    gamma = vec(M)
    vec_r = vec(R)
    mu, alpha = params.mu, params.alpha
    sv2 = scenario.sigma_v2

    msd = np.empty(N + 1)
    emse = np.empty(N + 1)
    vphi = vec(phi)
    # divergence is detected through the trace check; silence the transient
    # inf/nan arithmetic that precedes it
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(N + 1):
            emse_n = float(vec_r @ vphi)
            msd_n = float(np.trace(unvec(vphi, L)))
            if not (np.isfinite(emse_n) and np.isfinite(msd_n)):
                raise DivergenceError(
                    f"theory recursion diverged at iteration {n}", iteration=n
                )
            msd[n] = msd_n
            emse[n] = emse_n
            if n == N:
                break
            model = GaussianErrorModel(sigma_e2=max(emse_n, 0.0) + sv2, alpha=alpha)
            hg = h_G(model)
            hu = h_U(model)
            vphi = vphi - (2.0 * mu * hg) * (KT @ vphi) + (mu * mu * hu) * gamma
            # keep Phi symmetric against roundoff
            phi_m = unvec(vphi, L)
            vphi = vec(0.5 * (phi_m + phi_m.T))
    return TheoryTrace(msd=msd, emse=emse, weight_correlation=unvec(vphi, L))


def steady_state_emse(
    scenario: SignalModel, cs: ConstraintSet, params: AlgorithmParams
) -> SteadyStatePrediction:
    """Closed-form steady-state excess MSE and MSD.

    beta_factor = gamma^T S^+ vec(R) is evaluated through the factored
    pseudo-inverse S^+ = pinv(P R P) kron I, which acts only on the
    deviation subspace range(P) where the weight error lives. A negative
    discriminant (step size too large for the asymptotic model) is
    reported via valid=False with NaN predictions.
    """
    R = scenario.R
    M = cs.P @ R @ cs.P
    Mp = np.linalg.pinv(M, hermitian=True)
    beta = float(np.trace(M @ R @ Mp))
    beta_msd = float(np.trace(M @ Mp))  # = rank(P R P) = L - K

    mu, alpha = params.mu, params.alpha
    sv2 = scenario.sigma_v2
    disc = 1.0 - 10.0 * alpha * mu * beta * sv2
    if disc < 0.0:
        nan = float("nan")
        return SteadyStatePrediction(
            emse=nan, msd=nan, beta_factor=beta, hG_ss=nan, hU_ss=nan,
            discriminant=disc, valid=False,
        )

    # minus root, in the cancellation-free form
    # (1 - b - sqrt(1 - 2b)) / (5 a mu beta) == 5 a mu beta sv2^2 / (1 - b + sqrt(1 - 2b))
    # with b = 5 a mu beta sv2; also covers mu = 0 (zeta = 0) smoothly
    b = 5.0 * alpha * mu * beta * sv2
    zeta = (5.0 * alpha * mu * beta * sv2 * sv2) / (1.0 - b + np.sqrt(disc))
    se2 = zeta + sv2
    hg_ss = 3.0 * alpha * se2
    hu_ss = 15.0 * alpha**2 * se2**3
    xi = 0.5 * mu * 5.0 * alpha * se2 * se2 * beta_msd
    return SteadyStatePrediction(
        emse=float(zeta), msd=float(xi), beta_factor=beta,
        hG_ss=float(hg_ss), hU_ss=float(hu_ss),
        discriminant=float(disc), valid=True,
    )
