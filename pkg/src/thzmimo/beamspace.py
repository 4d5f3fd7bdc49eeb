"""
Angular grids, array-response dictionaries, frame-based sounding design
and the equivalent beamspace sensing operator.

Vectorization is column-major (``order="F"``) everywhere, so the
beamspace index ``s`` (0-based) of a G_R x G_T matrix maps to row
``s % G_R`` (AoA) and column ``s // G_R`` (AoD).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .channel import array_response
from .errors import ConfigError, DomainError

__all__ = [
    "AngularGrid",
    "SoundingDesign",
    "SensingOperator",
    "make_grid",
    "build_dictionary",
    "dft_matrix",
    "design_sounding",
    "total_coherence",
    "coherence_bound",
    "pilot_coherence",
    "antenna_sensing_matrix",
    "sensing_operator",
    "sounding_noise",
    "simulate_sounding",
    "vec",
    "unvec",
    "beamspace_to_channel",
    "channel_to_beamspace",
    "beam_index",
    "quantize_phases",
]


def vec(M):
    return np.asarray(M).reshape(-1, order="F")


def unvec(v, rows, cols):
    return np.asarray(v).reshape(rows, cols, order="F")


@dataclass(frozen=True)
class AngularGrid:
    cosines: np.ndarray
    angles: np.ndarray

    @property
    def size(self):
        return len(self.angles)


def make_grid(G):
    """Grid with directional cosines 2(i-1)/G - 1, i = 1..G (half-open [-1, 1))."""
    if G < 1:
        raise DomainError("grid size must be >= 1")
    cosines = 2.0 * np.arange(G) / G - 1.0
    return AngularGrid(cosines, np.arccos(cosines))


def build_dictionary(grid, geom):
    """N x G matrix whose columns are steering vectors on the grid."""
    return array_response(geom, grid.angles)


def dft_matrix(n):
    """Unitary DFT matrix; every entry has modulus 1/sqrt(n)."""
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def beam_index(s, G_R):
    """Column-major beamspace index -> (AoA row, AoD column), 0-based."""
    return s % G_R, s // G_R


@dataclass(frozen=True)
class SoundingDesign:
    F_RF: np.ndarray
    W_RF: np.ndarray
    X_p: np.ndarray
    W_BB: np.ndarray
    n_tx: int
    n_rx: int
    n_rf: int
    m_tx: int
    m_rx: int

    @property
    def n_frames(self):
        return self.n_tx // self.n_rf

    @property
    def n_combining_steps(self):
        return self.n_rx // self.n_rf

    @property
    def combiner(self):
        """Overall receive training matrix W_RF W_BB (N_R x M_R)."""
        return self.W_RF @ self.W_BB

    @property
    def precoder(self):
        """Overall transmit training matrix F_RF X_p (N_T x M_T)."""
        return self.F_RF @ self.X_p

    def pilot_blocks(self):
        step = self.m_tx // self.n_frames
        return [self.X_p[i * self.n_rf:(i + 1) * self.n_rf, i * step:(i + 1) * step]
                for i in range(self.n_frames)]

    def combiner_blocks(self):
        step = self.m_rx // self.n_combining_steps
        return [self.W_BB[i * self.n_rf:(i + 1) * self.n_rf, i * step:(i + 1) * step]
                for i in range(self.n_combining_steps)]


def _semi_unitary_block(rows, cols, U=None, V=None):
    # U [I; 0] V^H
    base = np.zeros((rows, cols), dtype=complex)
    base[:cols, :cols] = np.eye(cols)
    if U is not None:
        base = U @ base
    if V is not None:
        base = base @ V.conj().T
    return base


def design_sounding(n_tx, n_rx, n_rf, m_tx, m_rx, mixing="identity"):
    """Training precoders/combiners minimizing the total coherence bound.

    F_RF and W_RF are unitary DFT matrices. Each pilot block and each
    baseband combining block is ``U [I; 0] V^H`` (all singular values one).
    ``mixing="identity"`` takes U = V = I; ``mixing="dft"`` uses DFT
    matrices for U, which spreads every block across all RF chains.
    """
    if n_rf < 1 or n_tx % n_rf or n_rx % n_rf:
        raise ConfigError(f"N_RF={n_rf} must divide N_T={n_tx} and N_R={n_rx}")
    n_f, n_c = n_tx // n_rf, n_rx // n_rf
    if m_tx % n_f or m_rx % n_c:
        raise ConfigError(
            f"N_F={n_f} must divide M_T={m_tx} and N_C={n_c} must divide M_R={m_rx}")
    if not (0 < m_tx <= n_tx and 0 < m_rx <= n_rx):
        raise ConfigError("need 0 < M_T <= N_T and 0 < M_R <= N_R")
    if mixing == "identity":
        U = None
    elif mixing == "dft":
        U = dft_matrix(n_rf)
    else:
        raise ConfigError(f"unknown mixing {mixing!r}")
    xp = _semi_unitary_block(n_rf, m_tx // n_f, U)
    wb = _semi_unitary_block(n_rf, m_rx // n_c, U)
    return SoundingDesign(
        F_RF=dft_matrix(n_tx),
        W_RF=dft_matrix(n_rx),
        X_p=block_diag(*([xp] * n_f)),
        W_BB=block_diag(*([wb] * n_c)),
        n_tx=n_tx, n_rx=n_rx, n_rf=n_rf, m_tx=m_tx, m_rx=m_rx,
    )


def total_coherence(M):
    """Sum of |m_i^H m_j|^2 over ordered pairs i != j of columns."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[1] < 2:
        raise DomainError("total coherence needs at least two columns")
    gram = M.conj().T @ M
    off = np.abs(gram) ** 2
    return float(off.sum() - np.trace(off).real)


def coherence_bound(M):
    """||M M^H||_F^2, an upper bound on the total coherence."""
    M = np.asarray(M)
    return float(np.linalg.norm(M @ M.conj().T, "fro") ** 2)


def pilot_coherence(X):
    """||X^T X^*||_F^2 of one pilot block."""
    X = np.asarray(X)
    return float(np.linalg.norm(X.T @ X.conj(), "fro") ** 2)


def antenna_sensing_matrix(design):
    """Phi = (X_p^T F_RF^T) kron (W_BB^H W_RF^H), acting on vec(H)."""
    return np.kron(design.precoder.T, design.combiner.conj().T)


@dataclass(frozen=True)
class SensingOperator:
    Phi_tilde: np.ndarray
    Psi: np.ndarray
    R_v: np.ndarray
    Phi: np.ndarray
    sigma_v2: float

    @property
    def shape(self):
        return self.Phi_tilde.shape


def sensing_operator(design, A_T, A_R, sigma_v2):
    """Equivalent beamspace sensing matrix, dictionary and noise covariance."""
    if A_T.shape[0] != design.n_tx or A_R.shape[0] != design.n_rx:
        raise DomainError(
            f"dictionary rows {A_T.shape[0]}, {A_R.shape[0]} do not match "
            f"array sizes {design.n_tx}, {design.n_rx}")
    left = design.precoder.T @ A_T.conj()
    right = design.combiner.conj().T @ A_R
    Phi_tilde = np.kron(left, right)
    Psi = np.kron(A_T.conj(), A_R)
    Wc = design.combiner
    R_v = sigma_v2 * np.kron(np.eye(design.m_tx), Wc.conj().T @ Wc)
    return SensingOperator(Phi_tilde, Psi, R_v, antenna_sensing_matrix(design),
                           float(sigma_v2))


def sounding_noise(design, rng, n_blocks=1):
    """Unit-variance receiver noise after training combining, one column per block.

    Returns the M_T M_R x n_blocks matrix vec(W_BB^H W_RF^H V~) for white
    CN(0, 1) antenna noise V~.
    """
    shape = (n_blocks, design.n_rx, design.m_tx)
    white = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    combined = design.combiner.conj().T @ white  # (n_blocks, M_R, M_T)
    return combined.transpose(2, 1, 0).reshape(design.m_tx * design.m_rx, n_blocks)


def simulate_sounding(H, design, sigma_v2, rng, n_blocks=None):
    """Received pilot vector y = Phi vec(H) + v.

    With ``n_blocks`` set, returns the M_T M_R x n_blocks batch for the
    same channel and independent noise per block.
    """
    H = getattr(H, "H", H)
    if H.shape != (design.n_rx, design.n_tx):
        raise DomainError(f"channel shape {H.shape} does not match the sounding design")
    clean = vec(design.combiner.conj().T @ H @ design.precoder)
    noise = sounding_noise(design, rng, 1 if n_blocks is None else n_blocks)
    Y = clean[:, None] + np.sqrt(sigma_v2) * noise
    return Y[:, 0] if n_blocks is None else Y


def beamspace_to_channel(h_b, A_R, A_T):
    """H = A_R unvec(h_b) A_T^H."""
    G_R, G_T = A_R.shape[1], A_T.shape[1]
    h_b = np.asarray(h_b)
    if h_b.shape != (G_R * G_T,):
        raise DomainError(f"beamspace vector must have length {G_R * G_T}")
    return A_R @ unvec(h_b, G_R, G_T) @ A_T.conj().T


def channel_to_beamspace(H, A_R, A_T):
    """Minimum-norm beamspace coefficients Psi^+ vec(H)."""
    H = getattr(H, "H", H)
    Hb = np.linalg.pinv(A_R) @ H @ np.linalg.pinv(A_T.conj().T)
    return vec(Hb)


def quantize_phases(M, bits):
    """Round every entry's phase to the nearest of 2^bits levels, keeping its modulus."""
    if bits is None:
        return M
    step = 2 * np.pi / 2 ** int(bits)
    return np.abs(M) * np.exp(1j * step * np.round(np.angle(M) / step))
