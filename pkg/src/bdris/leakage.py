"""Interference leakage: direct evaluation, quadratic form, zero-IL feasibility."""

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .channels import ChannelSet
from .linalg import vec


def cross_pairs(K: int):
    """All (l, k) with l != k: transmitter l leaking into receiver k."""
    return [(l, k) for k in range(K) for l in range(K) if l != k]


def _ris_term(channels: ChannelSet, theta: np.ndarray) -> np.ndarray:
    """``F_k Theta G_l^H`` for every (l, k), shape (K, K, Nr, Nt)."""
    theta = np.asarray(theta)
    if theta.shape != (channels.M, channels.M):
        raise ValueError(f"theta must be {channels.M}x{channels.M}, got {theta.shape}")
    ft = np.einsum("kam,mn->kan", channels.f_ris, theta)
    return np.einsum("kan,lbn->lkab", ft, channels.g_ris.conj())


def effective_channels(channels: ChannelSet, theta: np.ndarray) -> np.ndarray:
    """``H_lk + F_k Theta G_l^H`` indexed ``[l, k]``."""
    return channels.h_direct + _ris_term(channels, theta)


def _offdiag_mask(K: int) -> np.ndarray:
    return ~np.eye(K, dtype=bool)


def leakage_of(h_eff: np.ndarray) -> float:
    """Sum of squared Frobenius norms over the cross links of an effective channel array."""
    return float(np.sum(np.abs(h_eff[_offdiag_mask(h_eff.shape[0])]) ** 2))


def interference_leakage(channels: ChannelSet, theta: np.ndarray) -> float:
    return leakage_of(effective_channels(channels, theta))


def direct_leakage(channels: ChannelSet) -> float:
    """Leakage without any RIS, ``tr(T)``."""
    return leakage_of(channels.h_direct)


@dataclass
class IlQuadraticForm:
    """``IL(r) = ||target + factor @ r||^2 = t_trace + r^H Sigma r + 2 Re(r^H s)``.

    Stored in factored form; ``sigma_big`` and ``s_vec`` are derived on demand
    because the full Sigma is D x D with D = M^2 for a BD-RIS.
    """

    factor: np.ndarray
    target: np.ndarray
    mode: str
    M: int

    @cached_property
    def sigma_big(self) -> np.ndarray:
        return self.factor.conj().T @ self.factor

    @cached_property
    def s_vec(self) -> np.ndarray:
        return self.factor.conj().T @ self.target

    @property
    def t_trace(self) -> float:
        return float(np.real(np.vdot(self.target, self.target)))

    def evaluate(self, r: np.ndarray) -> float:
        res = self.target + self.factor @ r
        return float(np.real(np.vdot(res, res)))

    def evaluate_expanded(self, r: np.ndarray) -> float:
        quad = np.vdot(r, self.sigma_big @ r)
        return float(self.t_trace + np.real(quad) + 2 * np.real(np.vdot(r, self.s_vec)))


def il_quadratic_form(channels: ChannelSet, mode: str = "bdris") -> IlQuadraticForm:
    """Build the quadratic form of the leakage in ``r = vec(Theta)`` or ``r = diag(Theta)``.

    Each cross link contributes ``vec(H_lk) + (conj(G_l) kron F_k) r`` so that
    ``Sigma = sum conj(G_l)^T conj(G_l) kron F_k^H F_k`` and
    ``s = vec(sum F_k^H H_lk G_l)``.
    """
    if mode not in ("bdris", "diagonal"):
        raise ValueError(f"unknown mode {mode!r}")
    m = channels.M
    blocks, targets = [], []
    for l, k in cross_pairs(channels.K):
        g, f = channels.g_ris[l], channels.f_ris[k]
        if mode == "bdris":
            blocks.append(np.kron(g.conj(), f))
        else:
            # column m is vec(f_m g_m^H)
            blocks.append(np.einsum("bm,am->bam", g.conj(), f).reshape(-1, m))
        targets.append(vec(channels.h_direct[l, k]))
    if not blocks:
        dim = m * m if mode == "bdris" else m
        return IlQuadraticForm(np.zeros((0, dim), dtype=complex), np.zeros(0, dtype=complex), mode, m)
    return IlQuadraticForm(np.vstack(blocks), np.concatenate(targets), mode, m)


def zero_il_feasible(n_r: Sequence[int], n_t: Sequence[int], M: int, symmetric: bool = False) -> bool:
    """Whether an unconstrained (optionally symmetric) BD-RIS can null all leakage.

    Counts ``sum_{l != k} N_Rk N_Tl`` equations against ``M^2`` (or
    ``M(M+1)/2`` symmetric) unknowns. Requires ``M >= max(N_T, N_R)``.

    The count is necessary, not sufficient: when ``M`` is below the summed
    antenna counts the cross-link equations are linearly dependent (rank 52
    instead of 54 for three 3x3 users at M = 8), so nulling can need more
    elements than the count suggests.
    """
    n_r, n_t = list(n_r), list(n_t)
    if len(n_r) != len(n_t):
        raise ValueError("n_r and n_t must list the same users")
    if M < max(n_r + n_t):
        raise ValueError("zero-IL count assumes M >= max(N_T, N_R)")
    K = len(n_r)
    equations = sum(n_r[k] * n_t[l] for l, k in cross_pairs(K))
    unknowns = M * (M + 1) // 2 if symmetric else M * M
    return unknowns >= equations


def il_with_beamformers(channels: ChannelSet, theta: np.ndarray, v, u) -> float:
    """Post-beamforming leakage ``sum ||U_k^H H~_lk V_l||^2``."""
    h_eff = effective_channels(channels, theta)
    return leakage_with(h_eff, v, u)


def leakage_with(h_eff: np.ndarray, v, u) -> float:
    total = 0.0
    for l, k in cross_pairs(h_eff.shape[0]):
        total += float(np.sum(np.abs(u[k].conj().T @ h_eff[l, k] @ v[l]) ** 2))
    return total


def precoded_channels(channels: ChannelSet, v, u) -> ChannelSet:
    """Channels seen after precoding and decoding: ``U_k^H H_lk V_l``, ``U_k^H F_k``, ``V_l^H G_l``."""
    K = channels.K
    hb = np.array([[u[k].conj().T @ channels.h_direct[l, k] @ v[l] for k in range(K)] for l in range(K)])
    fb = np.array([u[k].conj().T @ channels.f_ris[k] for k in range(K)])
    gb = np.array([v[l].conj().T @ channels.g_ris[l] for l in range(K)])
    return ChannelSet(hb, fb, gb, channels.noise_power, dict(channels.meta))
