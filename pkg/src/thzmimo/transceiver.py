"""
Fully-digital water-filling precoder, hybrid precoder/combiner built from
beamspace CSI, the MMSE combiner, and link metrics (ASE, QPSK BER).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor

from .beamspace import beam_index, beamspace_to_channel
from .errors import DomainError, NumericalError

__all__ = [
    "PrecoderSet",
    "CombinerSet",
    "TransceiverDesign",
    "LinkMetrics",
    "water_filling",
    "fully_digital_precoder",
    "select_rf_beams",
    "mmse_combiner",
    "hybrid_from_beamspace",
    "digital_design",
    "design_from_beamspace",
    "ase",
    "ber_qpsk",
    "uniform_feedback_quantizer",
]

BISECTION_TOL = 1e-10


@dataclass(frozen=True)
class PrecoderSet:
    F_opt: np.ndarray
    F_RF: np.ndarray
    F_BB: np.ndarray
    P: np.ndarray
    P_T: float

    @property
    def F(self):
        return self.F_RF @ self.F_BB


@dataclass(frozen=True)
class CombinerSet:
    W_M: np.ndarray
    W_RF: np.ndarray
    W_BB: np.ndarray
    R_yy: np.ndarray

    @property
    def W(self):
        return self.W_RF @ self.W_BB


@dataclass(frozen=True)
class TransceiverDesign:
    """Precoder F = F_RF F_BB and combiner W = W_RF W_BB for N_S streams."""

    F_RF: np.ndarray
    F_BB: np.ndarray
    W_RF: np.ndarray
    W_BB: np.ndarray

    @property
    def F(self):
        return self.F_RF @ self.F_BB

    @property
    def W(self):
        return self.W_RF @ self.W_BB

    @property
    def n_streams(self):
        return self.F_BB.shape[1]


@dataclass(frozen=True)
class LinkMetrics:
    ase: float
    ber: float
    snr_db: float


def water_filling(gains, budget, sigma_v2, tol=BISECTION_TOL):
    """p_i = max(0, lambda - sigma^2/g_i) with sum p_i = budget.

    ``gains`` are the squared singular values. The water level is found
    by bisection on [0, sigma^2/min(g) + budget] and then polished on the
    resulting active set so that the budget holds to rounding error.
    """
    g = np.asarray(gains, dtype=float)
    if np.any(g <= 0):
        raise DomainError("channel gains must be positive")
    floors = sigma_v2 / g
    lo, hi = 0.0, float(np.max(floors) + budget)

    def used(lam):
        return float(np.sum(np.maximum(0.0, lam - floors)))

    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if used(mid) < budget:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    lam = 0.5 * (lo + hi)
    active = floors < lam
    if np.any(active):
        lam = (budget + floors[active].sum()) / active.sum()
    p = np.maximum(0.0, lam - floors)
    return p, float(lam)


def fully_digital_precoder(H, n_streams, P_T=1.0, sigma_v2=1.0):
    """Water-filling precoder F_opt = V_1 P^(1/2).

    Returns ``(F_opt, p, lam)``.
    """
    H = np.asarray(getattr(H, "H", H))
    _, s, Vh = np.linalg.svd(H)
    tol = max(H.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    if n_streams < 1 or n_streams > rank:
        raise DomainError(f"N_S={n_streams} exceeds the channel rank {rank}")
    p, lam = water_filling(s[:n_streams] ** 2, P_T * n_streams, sigma_v2)
    F_opt = Vh.conj().T[:, :n_streams] * np.sqrt(p)
    return F_opt, p, lam


def select_rf_beams(h_b, G_R, G_T, n_rf):
    """Pick N_RF distinct AoD columns and AoA rows from the strongest coefficients.

    Coefficients are visited in descending magnitude; an index already
    chosen on one side is skipped for that side only.
    """
    h_b = np.asarray(h_b)
    if h_b.shape != (G_R * G_T,):
        raise DomainError(f"beamspace vector must have length {G_R * G_T}")
    if n_rf > min(G_R, G_T):
        raise DomainError("N_RF exceeds the grid size")
    order = np.argsort(-np.abs(h_b), kind="stable")
    tx, rx = [], []
    for s in order:
        k, j = beam_index(int(s), G_R)
        if len(tx) < n_rf and j not in tx:
            tx.append(j)
        if len(rx) < n_rf and k not in rx:
            rx.append(k)
        if len(tx) == n_rf and len(rx) == n_rf:
            return tx, rx
    raise DomainError("ran out of beamspace entries; use a larger grid or fewer RF chains")


def mmse_combiner(H, F_RF, F_BB, sigma_v2, n_streams):
    """Fully-digital MMSE combiner W_M and output covariance R_yy.

    W_M = H F (F^H H^H H F + N_S sigma^2 I)^-1 and
    R_yy = (H F F^H H^H + N_S sigma^2 I) / N_S, with F = F_RF F_BB.
    """
    if not sigma_v2 > 0:
        raise DomainError("sigma_v2 must be positive")
    H = np.asarray(getattr(H, "H", H))
    HF = H @ (F_RF @ F_BB)
    ns = n_streams
    gram = HF.conj().T @ HF + ns * sigma_v2 * np.eye(HF.shape[1])
    W_M = np.linalg.solve(gram.T, HF.T).T  # HF gram^-1
    R_yy = (HF @ HF.conj().T + ns * sigma_v2 * np.eye(H.shape[0])) / ns
    return W_M, 0.5 * (R_yy + R_yy.conj().T)


def hybrid_from_beamspace(h_b_hat, A_T, A_R, G_R, G_T, n_rf, F_opt,
                          R_yy=None, W_M=None, H=None, sigma_v2=None, P_T=1.0):
    """Hybrid TPC/RC from estimated beamspace CSI.

    RF stages are dictionary columns for the strongest AoDs/AoAs. The
    baseband precoder is the LS fit F_RF^+ F_opt, rescaled onto the power
    budget P_T N_S. The baseband combiner is the R_yy-weighted LS fit to
    W_M. If ``R_yy``/``W_M`` are omitted they are computed from ``H`` for
    the hybrid precoder.

    Returns ``(F_RF, F_BB, W_RF, W_BB)``.
    """
    n_s = F_opt.shape[1]
    tx, rx = select_rf_beams(h_b_hat, G_R, G_T, n_rf)
    F_RF = A_T[:, tx]
    W_RF = A_R[:, rx]
    if np.linalg.matrix_rank(F_RF) < n_s or np.linalg.matrix_rank(W_RF) < n_s:
        raise DomainError("RF stage rank below N_S; use a larger grid or fewer streams")
    F_BB = np.linalg.pinv(F_RF) @ F_opt
    norm = np.linalg.norm(F_RF @ F_BB)
    if norm == 0:
        raise NumericalError("baseband precoder vanished after projection")
    F_BB = F_BB * (np.sqrt(P_T * n_s) / norm)
    if R_yy is None or W_M is None:
        if H is None or sigma_v2 is None:
            raise DomainError("need R_yy and W_M, or H and sigma_v2 to compute them")
        W_M, R_yy = mmse_combiner(H, F_RF, F_BB, sigma_v2, n_s)
    G = W_RF.conj().T @ R_yy
    W_BB = np.linalg.solve(G @ W_RF, G @ W_M)
    return F_RF, F_BB, W_RF, W_BB


def digital_design(H, n_streams, sigma_v2, P_T=1.0):
    """Fully-digital water-filling precoder with the MMSE combiner."""
    F_opt, _, _ = fully_digital_precoder(H, n_streams, P_T, sigma_v2)
    eye = np.eye(n_streams)
    W_M, _ = mmse_combiner(H, F_opt, eye, sigma_v2, n_streams)
    return TransceiverDesign(F_opt, eye, W_M, eye)


def design_from_beamspace(h_b, A_T, A_R, n_rf, n_streams, sigma_v2, P_T=1.0,
                          H_design=None, feedback=None, H_combiner=None):
    """Hybrid design driven by a beamspace estimate.

    ``H_design`` is the channel used for F_opt; by default the
    reconstruction A_R unvec(h_b) A_T^H. ``H_combiner`` is the channel
    inside W_M and R_yy and defaults to ``H_design``. ``feedback``
    optionally maps h_b before use (e.g. a coefficient quantizer).
    """
    if feedback is not None:
        h_b = feedback(h_b)
    G_R, G_T = A_R.shape[1], A_T.shape[1]
    if H_design is None:
        H_design = beamspace_to_channel(h_b, A_R, A_T)
    if H_combiner is None:
        H_combiner = H_design
    F_opt, _, _ = fully_digital_precoder(H_design, n_streams, P_T, sigma_v2)
    F_RF, F_BB, W_RF, W_BB = hybrid_from_beamspace(
        h_b, A_T, A_R, G_R, G_T, n_rf, F_opt, H=H_combiner, sigma_v2=sigma_v2, P_T=P_T)
    return TransceiverDesign(F_RF, F_BB, W_RF, W_BB)


def _chol(M, what):
    try:
        return cho_factor(0.5 * (M + M.conj().T), lower=True)
    except LinAlgError as exc:
        raise NumericalError(f"{what} is singular") from exc


def ase(H, design, sigma_v2):
    """log2 det(I + R_n^-1 H_eq H_eq^H / N_S) in bits/s/Hz.

    R_n = sigma^2 W^H W and H_eq = W^H H F. The determinant depends on W
    only through its column space, so it is evaluated on an orthonormal
    basis Q of range(W) as log2 det(I + Q^H H F F^H H^H Q / (N_S sigma^2)).
    Combiner columns that vanish (streams switched off by water-filling)
    then drop out instead of making R_n singular.
    """
    if not sigma_v2 > 0:
        raise DomainError("sigma_v2 must be positive")
    H = np.asarray(getattr(H, "H", H))
    F, W = design.F, design.W
    ns = design.n_streams
    U, s, _ = np.linalg.svd(W, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return 0.0
    Q = U[:, s > s[0] * max(W.shape) * np.finfo(float).eps]
    K = Q.conj().T @ H @ F
    M = np.eye(Q.shape[1]) + (K @ K.conj().T) / (ns * sigma_v2)
    cm = _chol(M, "capacity matrix")
    return max(0.0, float(2.0 * np.sum(np.log(np.abs(np.diag(cm[0])))) / np.log(2.0)))


_QPSK_BITS = np.array([[0, 0], [0, 1], [1, 1], [1, 0]])


def _qpsk_map(bits):
    # Gray: bit0 -> sign of I, bit1 -> sign of Q
    return ((1 - 2 * bits[..., 0]) + 1j * (1 - 2 * bits[..., 1])) / np.sqrt(2)


def ber_qpsk(H, design, sigma_v2, n_symbols, rng):
    """Bit-error fraction of Gray-coded QPSK over the designed link.

    Each stream carries unit-energy QPSK scaled by 1/sqrt(N_S); the
    combiner output is sliced per stream by the signs of its real and
    imaginary parts.
    """
    if n_symbols < 1:
        raise DomainError("n_symbols must be >= 1")
    H = np.asarray(getattr(H, "H", H))
    ns = design.n_streams
    bits = rng.integers(0, 2, size=(n_symbols, ns, 2))
    x = _qpsk_map(bits).T / np.sqrt(ns)  # (N_S, n_symbols)
    shape = (H.shape[0], n_symbols)
    noise = np.sqrt(sigma_v2 / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    y = design.W.conj().T @ (H @ (design.F @ x) + noise)
    est = np.stack([(y.real < 0).T, (y.imag < 0).T], axis=-1).astype(int)
    return float(np.mean(est != bits))


def uniform_feedback_quantizer(bits, step):
    """Hook quantizing beamspace coefficients before they are fed back."""
    from .harness.sweeps import quantize_uniform

    def quantize(h_b):
        return quantize_uniform(h_b, bits, step)

    return quantize
