"""
Channel estimators for the pilot model y = Phi_tilde h_b + v.

LS and MMSE operate on the antenna-domain channel vector; OMP, BL and
MBL recover the sparse beamspace vector. ``bcrlb`` gives the Bayesian
Cramer-Rao benchmark for a fixed hyperparameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import ConfigError, DomainError, NumericalError

__all__ = [
    "OmpConfig",
    "OmpResult",
    "BlConfig",
    "HyperparameterState",
    "CrlbResult",
    "estimate_ls",
    "estimate_mmse",
    "estimate_omp",
    "estimate_bl",
    "estimate_mbl",
    "bl_evidence",
    "bcrlb",
    "oracle_gamma",
    "nmse",
]

PINV_RCOND = 1e-10


def _hermitian(M):
    return 0.5 * (M + M.conj().T)


def _chol(M, iteration=None, what="covariance"):
    try:
        return cho_factor(_hermitian(M), lower=True, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        raise NumericalError(f"{what} is not positive definite", iteration) from exc


def _logdet(cf):
    return 2.0 * float(np.sum(np.log(np.abs(np.diag(cf[0])))))


# ---------------------------------------------------------------------------
# classical estimators


def estimate_ls(y, Phi):
    """Minimum-norm least squares, Phi^+ y."""
    return np.linalg.pinv(Phi, rcond=PINV_RCOND) @ y


def estimate_mmse(y, Phi, R_h, R_v):
    """Linear MMSE: (R_h^-1 + Phi^H R_v^-1 Phi)^-1 Phi^H R_v^-1 y."""
    R_h = np.atleast_2d(R_h)
    R_v = np.atleast_2d(R_v)
    try:
        Rh_inv = np.linalg.inv(R_h)
    except LinAlgError as exc:
        raise NumericalError("prior covariance R_h is singular") from exc
    cv = _chol(R_v, what="noise covariance R_v")
    Rv_inv_Phi = cho_solve(cv, Phi)
    Rv_inv_y = cho_solve(cv, y)
    info = _hermitian(Rh_inv + Phi.conj().T @ Rv_inv_Phi)
    return np.linalg.solve(info, Phi.conj().T @ Rv_inv_y)


# ---------------------------------------------------------------------------
# OMP


@dataclass(frozen=True)
class OmpConfig:
    """Stopping rule of orthogonal matching pursuit.

    The loop runs while the change in residual energy between successive
    iterations is at least ``epsilon_t``. ``residual_floor`` additionally
    stops once the residual energy drops below that fraction of ||y||^2,
    which keeps exactly-explained noiseless inputs from picking up
    spurious atoms.
    """

    epsilon_t: float = 1e-3
    max_iters: Optional[int] = None
    normalize: bool = True
    residual_floor: float = 1e-20

    def __post_init__(self):
        if not self.epsilon_t > 0:
            raise ConfigError("epsilon_t must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.residual_floor < 0:
            raise ConfigError("residual_floor must be non-negative")


@dataclass
class OmpResult:
    h_b: np.ndarray
    support: List[int]
    residual_energies: List[float]
    truncated: bool

    def __iter__(self):
        return iter((self.h_b, self.support, self.residual_energies))


def estimate_omp(y, Phi_tilde, config=None):
    """Greedy sparse recovery with a least-squares refit per iteration.

    Returns an :class:`OmpResult`; unpacking yields
    ``(h_b, support, residual_energies)``.
    """
    config = config or OmpConfig()
    Phi = np.asarray(Phi_tilde)
    m, n = Phi.shape
    norms = np.linalg.norm(Phi, axis=0)
    if np.any(norms == 0):
        raise DomainError("sensing matrix has an all-zero column")
    weights = 1.0 / norms if config.normalize else np.ones(n)
    max_iters = config.max_iters if config.max_iters is not None else min(m, n)

    y = np.asarray(y, dtype=complex)
    y_energy = float(np.vdot(y, y).real)
    r = y.copy()
    prev_energy, energy = 0.0, y_energy
    energies = [energy]
    support: List[int] = []
    coef = np.zeros(0, dtype=complex)
    truncated = False
    while abs(prev_energy - energy) >= config.epsilon_t:
        if energy <= config.residual_floor * y_energy:
            break
        if len(support) >= max_iters:
            truncated = True
            break
        corr = np.abs(Phi.conj().T @ r) * weights
        corr[support] = -np.inf
        support.append(int(np.argmax(corr)))
        sub = Phi[:, support]
        coef = np.linalg.lstsq(sub, y, rcond=None)[0]
        r = y - sub @ coef
        prev_energy, energy = energy, float(np.vdot(r, r).real)
        if energy > prev_energy * (1 + 1e-12) + 1e-300:
            raise NumericalError("OMP residual energy increased", len(support))
        energies.append(energy)
    h_b = np.zeros(n, dtype=complex)
    h_b[support] = coef
    return OmpResult(h_b, support, energies, truncated)


# ---------------------------------------------------------------------------
# Bayesian learning


@dataclass(frozen=True)
class BlConfig:
    epsilon: float = 1e-6
    k_max: int = 50
    gamma_floor: float = 1e-12
    gamma_init: float = 1.0
    domain: str = "auto"  # "auto", "measurement" or "beamspace"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.k_max < 1:
            raise ConfigError("k_max must be >= 1")
        if not self.gamma_floor > 0:
            raise ConfigError("gamma_floor must be positive")
        if not self.gamma_init > 0:
            raise ConfigError("gamma_init must be positive")
        if self.domain not in ("auto", "measurement", "beamspace"):
            raise ConfigError(f"unknown domain {self.domain!r}")


@dataclass
class HyperparameterState:
    """Output of the EM iterations.

    ``loglik`` is the evidence (up to an additive constant) at the final
    hyperparameters; ``evidence_trace[j]`` is the evidence at the
    hyperparameters used in E-step ``j + 1``.
    """

    gamma_hat: np.ndarray
    mu_b: np.ndarray
    R_b: np.ndarray
    iteration: int
    loglik: float
    converged: bool = False
    evidence_trace: List[float] = field(default_factory=list)


def bl_evidence(Y, Phi_tilde, R_v, gamma):
    """-M log det R_y - sum_m y_m^H R_y^-1 y_m with R_y = R_v + Phi Gamma Phi^H."""
    Y = np.asarray(Y)
    if Y.ndim == 1:
        Y = Y[:, None]
    R_y = R_v + (Phi_tilde * gamma) @ Phi_tilde.conj().T
    cf = _chol(R_y, what="evidence covariance R_y")
    quad = np.vdot(Y, cho_solve(cf, Y)).real
    return float(-Y.shape[1] * _logdet(cf) - quad)


def _e_step(Y, Phi, R_v, gamma, use_measurement, full, iteration, Rv_cf=None):
    """Posterior moments for prior variances ``gamma``.

    Returns (mu, diag(R_b), R_b or None, evidence).
    """
    M = Y.shape[1]
    R_y = R_v + (Phi * gamma) @ Phi.conj().T
    cy = _chol(R_y, iteration, "R_y")
    evidence = float(-M * _logdet(cy) - np.vdot(Y, cho_solve(cy, Y)).real)
    if use_measurement:
        Ry_inv_Phi = cho_solve(cy, Phi)
        mu = gamma[:, None] * (Phi.conj().T @ cho_solve(cy, Y))
        quad = np.einsum("ij,ij->j", Phi.conj(), Ry_inv_Phi).real
        diag = gamma - gamma ** 2 * quad
        R_b = None
        if full:
            R_b = _hermitian(np.diag(gamma) - (gamma[:, None] * (Phi.conj().T @ Ry_inv_Phi))
                             * gamma[None, :])
    else:
        info = Phi.conj().T @ cho_solve(Rv_cf, Phi)
        # scaled symmetric form keeps small-gamma rows well conditioned
        s = np.sqrt(gamma)
        inner = _hermitian(s[:, None] * info * s[None, :]) + np.eye(len(gamma))
        ci = _chol(inner, iteration, "posterior information")
        R_b = s[:, None] * cho_solve(ci, np.diag(s))
        R_b = _hermitian(R_b)
        mu = R_b @ (Phi.conj().T @ cho_solve(Rv_cf, Y))
        diag = np.real(np.diag(R_b)).copy()
    return mu, np.maximum(diag, 0.0), R_b, evidence


def _run_em(Y, Phi_tilde, R_v, config, callback):
    Phi = np.asarray(Phi_tilde)
    m, n = Phi.shape
    R_v = np.asarray(R_v)
    if R_v.shape != (m, m):
        raise DomainError(f"R_v must be {m}x{m}")
    if config.domain == "auto":
        use_measurement = m < n
    else:
        use_measurement = config.domain == "measurement"
    Rv_cf = None if use_measurement else _chol(R_v, what="noise covariance R_v")

    gamma = np.full(n, float(config.gamma_init))
    trace: List[float] = []
    converged = False
    j = 0
    for j in range(1, config.k_max + 1):
        mu, diag, _, evidence = _e_step(Y, Phi, R_v, gamma, use_measurement, False, j, Rv_cf)
        trace.append(evidence)
        if callback is not None:
            callback(j, gamma.copy(), mu.copy())
        new = diag + np.mean(np.abs(mu) ** 2, axis=1)
        new = np.maximum(new, config.gamma_floor)
        if not np.all(np.isfinite(new)):
            raise NumericalError("non-finite hyperparameter update", j)
        delta = np.linalg.norm(new - gamma)
        gamma = new
        if delta <= config.epsilon:
            converged = True
            break
    mu, _, R_b, evidence = _e_step(Y, Phi, R_v, gamma, use_measurement, True, j + 1, Rv_cf)
    trace.append(evidence)
    return HyperparameterState(gamma, mu, R_b, j, evidence, converged, trace)


def estimate_bl(y, Phi_tilde, R_v, config=None, callback=None):
    """Sparse Bayesian learning via EM on per-coefficient prior variances.

    Parameters
    ----------
    y : (M_T M_R,) complex
    Phi_tilde : (M_T M_R, G_R G_T) complex
    R_v : noise covariance
    config : BlConfig
    callback : callable(iteration, gamma, mu), optional
        Invoked after each E-step with the hyperparameters that produced
        the posterior mean ``mu``.

    Returns
    -------
    h_b : posterior mean at the final hyperparameters
    state : HyperparameterState
    """
    config = config or BlConfig()
    y = np.asarray(y, dtype=complex)
    if y.ndim != 1:
        raise DomainError("estimate_bl expects a single measurement vector")
    cb = None if callback is None else (lambda j, g, mu: callback(j, g, mu[:, 0]))
    state = _run_em(y[:, None], Phi_tilde, R_v, config, cb)
    state.mu_b = state.mu_b[:, 0]
    return state.mu_b, state


def estimate_mbl(Y, Phi_tilde, R_v, config=None, callback=None):
    """Multiple-measurement-vector BL sharing one hyperparameter vector.

    Returns the G_R G_T x M posterior-mean matrix and the state. With a
    single column this performs the same arithmetic as :func:`estimate_bl`.
    """
    config = config or BlConfig()
    Y = np.asarray(Y, dtype=complex)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[1] < 1:
        raise DomainError("need at least one measurement vector")
    state = _run_em(Y, Phi_tilde, R_v, config, callback)
    return state.mu_b, state


# ---------------------------------------------------------------------------
# benchmark


@dataclass(frozen=True)
class CrlbResult:
    J_B: np.ndarray
    mse_bound_beamspace: float
    mse_bound_channel: float
    J_inv: np.ndarray


def bcrlb(Phi_tilde, R_v, gamma_oracle, Psi=None):
    """Bayesian CRLB with J_B = Phi^H R_v^-1 Phi + Gamma^-1.

    The inverse is formed as Gamma - Gamma Phi^H (R_v + Phi Gamma Phi^H)^-1
    Phi Gamma, which stays accurate for tiny prior variances.
    """
    Phi = np.asarray(Phi_tilde)
    gamma = np.asarray(gamma_oracle, dtype=float)
    if gamma.shape != (Phi.shape[1],):
        raise DomainError("gamma_oracle length must equal the number of columns")
    if not np.all(gamma > 0) or not np.all(np.isfinite(gamma)):
        raise NumericalError("Bayesian information is singular: prior variances must be positive")
    cv = _chol(R_v, what="noise covariance R_v")
    J = _hermitian(Phi.conj().T @ cho_solve(cv, Phi) + np.diag(1.0 / gamma))
    cy = _chol(R_v + (Phi * gamma) @ Phi.conj().T, what="R_y")
    PG = Phi * gamma
    J_inv = _hermitian(np.diag(gamma) - PG.conj().T @ cho_solve(cy, PG))
    bound_b = float(np.real(np.trace(J_inv)))
    if Psi is None:
        bound_h = float("nan")
    else:
        bound_h = float(np.real(np.einsum("ij,jk,ik->", Psi, J_inv, Psi.conj())))
    return CrlbResult(J, bound_b, bound_h, J_inv)


def oracle_gamma(h_b_true, floor=1e-12):
    """Per-trial genie prior variances |h_b|^2 + floor."""
    return np.abs(np.asarray(h_b_true)) ** 2 + floor


def nmse(H_hat, H):
    """||H_hat - H||_F^2 / ||H||_F^2."""
    H_hat = np.asarray(getattr(H_hat, "H", H_hat))
    H = np.asarray(getattr(H, "H", H))
    if H_hat.shape != H.shape:
        raise DomainError(f"shape mismatch {H_hat.shape} vs {H.shape}")
    den = np.linalg.norm(H) ** 2
    if den == 0:
        raise DomainError("reference channel is zero")
    return float(np.linalg.norm(H_hat - H) ** 2 / den)
