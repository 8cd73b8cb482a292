"""Stage-II precoder/decoder designs on the effective channels ``H~_lk``.

Effective channels are passed as an array ``h_eff[l, k]`` (Nr x Nt blocks),
see :func:`bdris.leakage.effective_channels`. Powers are linear (the same
unit as ``sigma2``); rates are reported in bit/s/Hz.
"""

import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .channels import ChannelSet
from .leakage import cross_pairs, effective_channels, leakage_with
from .optimizers import NumericalFailure

LN2 = np.log(2.0)


@dataclass
class Beamformers:
    v: List[np.ndarray]
    u: List[np.ndarray]
    info: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.v)

    def powers(self) -> np.ndarray:
        return np.array([float(np.real(np.vdot(v, v))) for v in self.v])

    def streams(self) -> List[int]:
        return [v.shape[1] for v in self.v]

    def decoder_errors(self) -> np.ndarray:
        return np.array([np.linalg.norm(u.conj().T @ u - np.eye(u.shape[1])) for u in self.u])


@dataclass
class PowerAllocation:
    powers: np.ndarray
    water_level: float


@dataclass
class SurrogateCoefficients:
    """Concave lower bound of every user's rate around ``v_bar`` (natural log).

    ``r_bar_k(V) = a[k] + 2 Re tr(A_k^H H~_kk V_k) - tr(B_k (sigma2 I + sum_l H~_lk V_l V_l^H H~_lk^H))``.
    Only the direct link enters the linear term: ``A_k = R_k H~_kk V_bar_k``.
    """

    a: np.ndarray
    a_mat: List[np.ndarray]
    b_mat: List[np.ndarray]
    r_mat: List[np.ndarray]
    sigma2: float


def waterfill(gains, p_total: float, noise: float = 1.0) -> PowerAllocation:
    """Capacity-optimal powers ``p_i = max(0, w - noise/g_i)`` with ``sum p = p_total``."""
    gains = np.asarray(gains, dtype=float)
    powers = np.zeros_like(gains)
    usable = np.flatnonzero(gains > 0)
    if usable.size == 0 or p_total <= 0:
        return PowerAllocation(powers, 0.0)
    order = usable[np.argsort(gains[usable])[::-1]]
    floors = noise / gains[order]
    level = 0.0
    for n in range(order.size, 0, -1):
        f = floors[:n]
        # level - f_i via floor differences: exact-ish even when the floors
        # dwarf p_total
        p = p_total / n + (f[None, :] - f[:, None]).mean(axis=1)
        if p[-1] > 0:
            powers[order[:n]] = p
            level = float(np.mean(f + p))
            break
    return PowerAllocation(powers, float(level))


def _direct(h_eff, k):
    return h_eff[k, k]


def svd_precoders(h_eff: np.ndarray, p_t: float, sigma2: float,
                  max_streams: Optional[int] = None) -> Beamformers:
    """Interference-oblivious SVD beams with waterfilled powers, one user at a time."""
    K = h_eff.shape[0]
    v, u = [], []
    for k in range(K):
        uu, s, vh = np.linalg.svd(_direct(h_eff, k))
        n = s.size if max_streams is None else min(max_streams, s.size)
        alloc = waterfill(s[:n] ** 2, p_t, sigma2)
        active = np.flatnonzero(alloc.powers > 0)
        if active.size == 0:
            warnings.warn(f"user {k}: zero direct channel, no stream allocated", RuntimeWarning)
            v.append(np.zeros((h_eff.shape[3], 1), dtype=complex))
            u.append(np.eye(h_eff.shape[2], 1, dtype=complex))
            continue
        v.append(vh.conj().T[:, active] * np.sqrt(alloc.powers[active]))
        u.append(uu[:, active])
    return Beamformers(v, u)


def _covariances(h_eff, v, k):
    """Received covariance of each transmitter's signal at receiver k."""
    return [h_eff[l, k] @ v[l] @ v[l].conj().T @ h_eff[l, k].conj().T for l in range(h_eff.shape[0])]


def rate_of_user(h_eff: np.ndarray, v, sigma2: float, k: int) -> float:
    """TIN rate ``log2 det(I + (sigma2 I + sum_{l!=k} S_kl)^-1 S_kk)``."""
    return _rate_nats(h_eff, v, sigma2, k) / LN2


def _logdet_pd(a) -> float:
    c = np.linalg.cholesky(0.5 * (a + a.conj().T))
    return 2.0 * float(np.sum(np.log(np.real(np.diag(c)))))


def _rate_nats(h_eff, v, sigma2, k) -> float:
    cov = _covariances(h_eff, v, k)
    n = h_eff.shape[2]
    interference = sigma2 * np.eye(n) + sum(c for l, c in enumerate(cov) if l != k)
    return max(_logdet_pd(interference + cov[k]) - _logdet_pd(interference), 0.0)


def sum_rate(h_eff: np.ndarray, v, sigma2: float) -> float:
    return float(sum(rate_of_user(h_eff, v, sigma2, k) for k in range(h_eff.shape[0])))


def user_rates(h_eff: np.ndarray, v, sigma2: float) -> np.ndarray:
    return np.array([rate_of_user(h_eff, v, sigma2, k) for k in range(h_eff.shape[0])])


def _smallest_eigvecs(a, d):
    _, w = np.linalg.eigh(0.5 * (a + a.conj().T))
    return w[:, :d]


def _initial_beams(h_eff, d, p_t):
    return [np.linalg.svd(_direct(h_eff, k))[2].conj().T[:, :d] * np.sqrt(p_t / d)
            for k in range(h_eff.shape[0])]


def min_il_decoders(h_eff, v, d):
    """Decoders spanning the d least-interfered receive directions."""
    K = h_eff.shape[0]
    u = []
    for k in range(K):
        s = sum((h_eff[l, k] @ v[l] @ v[l].conj().T @ h_eff[l, k].conj().T
                 for l in range(K) if l != k), np.zeros((h_eff.shape[2],) * 2, dtype=complex))
        u.append(_smallest_eigvecs(s, d))
    return u


def min_il_precoders(h_eff, u, d, p_t):
    """Precoders along the d directions leaking least in the reciprocal network."""
    K = h_eff.shape[0]
    v = []
    for l in range(K):
        s = sum((h_eff[l, k].conj().T @ u[k] @ u[k].conj().T @ h_eff[l, k]
                 for k in range(K) if k != l), np.zeros((h_eff.shape[3],) * 2, dtype=complex))
        v.append(_smallest_eigvecs(s, d) * np.sqrt(p_t / d))
    return v


def min_il_beamformers_eff(h_eff: np.ndarray, d: int, p_t: float = 1.0, iters: int = 100,
                           tol: float = 1e-12, v_init=None) -> Beamformers:
    """Alternating min-IL design; ``info['il_trace']`` lists the leakage after every half-step."""
    K, nr, nt = h_eff.shape[0], h_eff.shape[2], h_eff.shape[3]
    if d > min(nr, nt):
        raise ValueError(f"d={d} exceeds min(Nr, Nt)")
    v = _initial_beams(h_eff, d, p_t) if v_init is None else [np.array(x) for x in v_init]
    u = [np.eye(nr, d, dtype=complex) for _ in range(K)]
    trace = []
    it = 0
    for it in range(1, iters + 1):
        u = min_il_decoders(h_eff, v, d)
        trace.append(leakage_with(h_eff, v, u))
        v = min_il_precoders(h_eff, u, d, p_t)
        trace.append(leakage_with(h_eff, v, u))
        if it > 1 and trace[-3] - trace[-1] <= tol * max(trace[-3], 1e-300):
            break
    return Beamformers(v, u, {"il_trace": trace, "iterations": it})


def min_il_beamformers(channels: ChannelSet, theta: np.ndarray, d: int, p_t: float = 1.0,
                       iters: int = 100, **kw) -> Beamformers:
    return min_il_beamformers_eff(effective_channels(channels, theta), d, p_t, iters, **kw)


def _solve_reg(b, h):
    try:
        return np.linalg.solve(b, h)
    except np.linalg.LinAlgError:
        eps = 1e-12 * np.real(np.trace(b)) / b.shape[0]
        return np.linalg.solve(b + eps * np.eye(b.shape[0]), h)


def _max_sinr_filters(chan, tx, sigma2, p_stream):
    """Unit-norm MMSE-direction receive filters for every stream.

    ``chan[l][k]`` maps transmitter l to receiver k; ``tx[l]`` holds the unit
    transmit directions of transmitter l, each sent with power ``p_stream``.
    """
    K = len(tx)
    out = []
    for k in range(K):
        n = chan[k][k].shape[0]
        total = sigma2 * np.eye(n, dtype=complex)
        for l in range(K):
            hv = chan[l][k] @ tx[l]
            total = total + p_stream * hv @ hv.conj().T
        cols = []
        for m in range(tx[k].shape[1]):
            h = chan[k][k] @ tx[k][:, m]
            b = total - p_stream * np.outer(h, h.conj())
            w = _solve_reg(b, h)
            nrm = np.linalg.norm(w)
            cols.append(w / nrm if nrm > 0 else w)
        out.append(np.column_stack(cols))
    return out


def max_sinr_beamformers_eff(h_eff: np.ndarray, d: int, p_t: float, sigma2: float,
                             iters: int = 100, tol: float = 1e-10) -> Beamformers:
    """Per-stream max-SINR alternation with equal stream power ``p_t / d``.

    Receive filters are ``B^-1 h / ||B^-1 h||``; transmit directions come from
    the same rule on the reciprocal network. The returned decoder is an
    orthonormal basis of the filters' span; the per-stream filters are kept
    in ``info['stream_decoders']``.
    """
    K, nr, nt = h_eff.shape[0], h_eff.shape[2], h_eff.shape[3]
    if d > min(nr, nt):
        raise ValueError(f"d={d} exceeds min(Nr, Nt)")
    p_stream = p_t / d
    fwd = [[h_eff[l, k] for k in range(K)] for l in range(K)]
    rev = [[h_eff[k, l].conj().T for k in range(K)] for l in range(K)]
    dirs = [x / np.sqrt(p_stream) for x in _initial_beams(h_eff, d, p_t)]
    filters = None
    trace = []
    it = 0
    for it in range(1, iters + 1):
        filters = _max_sinr_filters(fwd, dirs, sigma2, p_stream)
        dirs = _max_sinr_filters(rev, filters, sigma2, p_stream)
        trace.append(sum_rate(h_eff, [x * np.sqrt(p_stream) for x in dirs], sigma2))
        if it > 1 and abs(trace[-1] - trace[-2]) <= tol * max(abs(trace[-2]), 1e-300):
            break
    filters = _max_sinr_filters(fwd, dirs, sigma2, p_stream)
    v = [x * np.sqrt(p_stream) for x in dirs]
    u = [np.linalg.qr(f)[0] for f in filters]
    return Beamformers(v, u, {"stream_decoders": filters, "rate_trace": trace, "iterations": it})


def max_sinr_beamformers(channels: ChannelSet, theta: np.ndarray, d: int, p_t: float,
                         sigma2: float, iters: int = 100, **kw) -> Beamformers:
    return max_sinr_beamformers_eff(effective_channels(channels, theta), d, p_t, sigma2, iters, **kw)


def surrogate_coefficients(h_eff: np.ndarray, v_bar, sigma2: float) -> SurrogateCoefficients:
    K, n = h_eff.shape[0], h_eff.shape[2]
    a = np.zeros(K)
    a_mat, b_mat, r_mat = [], [], []
    eye = np.eye(n)
    for k in range(K):
        cov = _covariances(h_eff, v_bar, k)
        interference = sigma2 * eye + sum(c for l, c in enumerate(cov) if l != k)
        r = np.linalg.inv(interference)
        r = 0.5 * (r + r.conj().T)
        total_inv = np.linalg.inv(interference + cov[k])
        b = r - 0.5 * (total_inv + total_inv.conj().T)
        rs = r @ cov[k]
        sign, logdet = np.linalg.slogdet(eye + rs)
        a[k] = float(np.real(logdet)) - float(np.real(np.trace(rs)))
        a_mat.append(r @ h_eff[k, k] @ v_bar[k])
        b_mat.append(0.5 * (b + b.conj().T))
        r_mat.append(r)
    return SurrogateCoefficients(a, a_mat, b_mat, r_mat, sigma2)


def surrogate_value(coeffs: SurrogateCoefficients, h_eff: np.ndarray, v, k: int) -> float:
    """``r_bar_k(V; V_bar)`` in nats."""
    n = h_eff.shape[2]
    total = coeffs.sigma2 * np.eye(n) + sum(_covariances(h_eff, v, k))
    lin = 2.0 * np.real(np.trace(coeffs.a_mat[k] @ v[k].conj().T @ h_eff[k, k].conj().T))
    return float(coeffs.a[k] + lin - np.real(np.trace(coeffs.b_mat[k] @ total)))


def _trace_ball_maximizer(d_mat, c_mat, p_max, tol=1e-13, max_iter=300):
    """argmax ``2 Re tr(V^H C) - tr(V^H D V)`` subject to ``||V||_F^2 <= p_max``.

    The solution is ``(D + mu I)^-1 C`` with ``mu >= 0`` found by bisection.
    """
    delta, e = np.linalg.eigh(0.5 * (d_mat + d_mat.conj().T))
    delta = np.maximum(delta, 0.0)
    w = e.conj().T @ c_mat
    wn = np.sum(np.abs(w) ** 2, axis=1)
    if not np.any(wn > 0):
        return np.zeros_like(c_mat), 0.0

    def norm2(mu):
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(wn > 0, wn / (delta + mu) ** 2, 0.0)
        return float(np.sum(terms))

    def build(mu):
        return e @ (w / (delta + mu)[:, None])

    floor = 1e-14 * max(delta.max(), 1e-300)
    if delta[wn > 0].min() > floor and norm2(0.0) <= p_max:
        return build(0.0), 0.0
    lo, hi = 0.0, np.sqrt(wn.sum()) / np.sqrt(p_max)
    while norm2(hi) > p_max:
        hi *= 2.0
        if not np.isfinite(hi):
            raise NumericalFailure("power multiplier bracket failed")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if norm2(mid) > p_max:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    return build(hi), hi


def max_sr_beamformers(h_eff: np.ndarray, v_init, p_t: float, sigma2: float,
                       mm_iters: int = 50, tol: float = 0.0) -> Beamformers:
    """Sum-rate maximization by minorize-maximize on the rate lower bounds.

    Every iteration rebuilds the bound at the current precoders and maximizes
    it exactly (per-user closed form plus power multiplier), so the true sum
    rate never decreases. ``info['rate_trace']`` starts with the initial rate.
    Stops after ``mm_iters`` or when the relative gain drops to ``tol``.
    """
    K = h_eff.shape[0]
    # whitened copy: noise power 1
    scale = 1.0 / np.sqrt(sigma2)
    h = h_eff * scale
    v = [np.array(x, dtype=complex) for x in v_init]
    trace = [sum_rate(h, v, 1.0)]
    it = 0
    for it in range(1, mm_iters + 1):
        co = surrogate_coefficients(h, v, 1.0)
        new_v = []
        for l in range(K):
            d_mat = sum(h[l, k].conj().T @ co.b_mat[k] @ h[l, k] for k in range(K))
            c_mat = h[l, l].conj().T @ co.a_mat[l]
            vl, _ = _trace_ball_maximizer(d_mat, c_mat, p_t)
            new_v.append(vl)
        v = new_v
        trace.append(sum_rate(h, v, 1.0))
        if tol > 0 and trace[-1] - trace[-2] <= tol * max(trace[-2], 1e-300):
            break
    u = [_decoder_basis(h, v, k) for k in range(K)]
    return Beamformers(v, u, {"rate_trace": trace, "iterations": it})


def _decoder_basis(h, v, k):
    """Orthonormal basis of the desired-signal subspace at receiver k."""
    sig = h[k, k] @ v[k]
    uu, s, _ = np.linalg.svd(sig, full_matrices=False)
    rank = max(1, int(np.sum(s > 1e-12 * max(s.max(initial=0.0), 1e-300))))
    return uu[:, :rank]


def max_sr_beamformers_for(channels: ChannelSet, theta: np.ndarray, p_t: float,
                           mm_iters: int = 50, **kw) -> Beamformers:
    """Max-SR design initialized with SVD precoders on the effective channels."""
    h_eff = effective_channels(channels, theta)
    init = svd_precoders(h_eff, p_t, channels.noise_power)
    return max_sr_beamformers(h_eff, init.v, p_t, channels.noise_power, mm_iters, **kw)


__all__ = [
    "Beamformers", "PowerAllocation", "SurrogateCoefficients", "waterfill", "svd_precoders",
    "rate_of_user", "sum_rate", "user_rates", "min_il_beamformers", "min_il_beamformers_eff",
    "max_sinr_beamformers", "max_sinr_beamformers_eff", "surrogate_coefficients",
    "surrogate_value", "max_sr_beamformers", "max_sr_beamformers_for", "cross_pairs",
]
