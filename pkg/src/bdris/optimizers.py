"""Stage-I solvers for the scattering matrix.

* :func:`minimize_il_mo`    geodesic descent on the unitary group, ``Theta = Q Q^T``
* :func:`minimize_il_rtp`   trace-relaxed symmetric least squares, then unitary projection
* :func:`minimize_il_group` block-by-block sweeps for group-connected surfaces
* :func:`minimize_il_diag`  unit-modulus coordinate descent for a diagonal RIS
"""

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .channels import ChannelSet
from .leakage import (
    _ris_term,
    effective_channels,
    il_quadratic_form,
    interference_leakage,
)
from .linalg import (
    TOL_UNITARY,
    ContractError,
    expm_skew_hermitian,
    project_to_unitary,
    random_unitary,
    symmetric_from_coords,
    symmetric_index_pairs,
    symmetry_error,
    takagi,
    unitarity_error,
)

ARCH_FULLY = "fully"
ARCH_GROUP = "group"
ARCH_DIAGONAL = "diagonal"
ARCH_RELAXED = "relaxed-symmetric"


class NumericalFailure(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class OptimizerOptions:
    max_iters: int = 2000
    rel_tol: float = 1e-6
    window: int = 10
    mu0: Optional[float] = None  # None -> 1 / ||grad||_F
    backtrack_factor: float = 0.5
    armijo_c: float = 1e-4
    bisect_tol: float = 1e-8
    seed: Optional[int] = 0
    # group-connected sweeps
    max_outer: int = 20
    outer_tol: float = 1e-6
    inner_max_iters: int = 200
    # diagonal BCD
    max_sweeps: int = 200
    sweep_tol: float = 1e-9

    def __post_init__(self):
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        for name in ("max_iters", "rel_tol", "armijo_c", "bisect_tol", "max_outer",
                     "inner_max_iters", "max_sweeps", "window"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class IterTrace:
    il_values: List[float] = field(default_factory=list)
    wall_time: float = 0.0
    iterations: int = 0
    converged: bool = False
    info: dict = field(default_factory=dict)


@dataclass
class ScatteringMatrix:
    theta: np.ndarray
    architecture: str
    mg: Optional[int] = None

    @property
    def M(self) -> int:
        return self.theta.shape[0]

    def feasibility_errors(self, tol: float = TOL_UNITARY) -> List[str]:
        """Violated structural constraints (empty when feasible)."""
        t = self.theta
        m = t.shape[0]
        errs = []
        if self.architecture in (ARCH_FULLY, ARCH_RELAXED, ARCH_GROUP):
            if symmetry_error(t) > tol * max(1.0, np.linalg.norm(t)):
                errs.append("not symmetric")
        if self.architecture == ARCH_FULLY and unitarity_error(t) > tol:
            errs.append("not unitary")
        if self.architecture == ARCH_RELAXED:
            if np.real(np.vdot(t, t)) > m * (1 + 1e-9):
                errs.append("trace bound exceeded")
        if self.architecture == ARCH_GROUP:
            mg = self.mg
            if not mg or m % mg:
                errs.append("invalid group size")
            else:
                mask = np.kron(np.eye(m // mg, dtype=bool), np.ones((mg, mg), dtype=bool))
                if np.max(np.abs(t[~mask]), initial=0.0) > tol:
                    errs.append("not block diagonal")
                if unitarity_error(t) > tol:
                    errs.append("blocks not unitary")
        if self.architecture == ARCH_DIAGONAL:
            off = t - np.diag(np.diag(t))
            if np.max(np.abs(off), initial=0.0) > tol:
                errs.append("not diagonal")
            if np.max(np.abs(np.abs(np.diag(t)) - 1.0)) > tol:
                errs.append("not unit modulus")
        return errs

    def is_feasible(self, tol: float = TOL_UNITARY) -> bool:
        return not self.feasibility_errors(tol)


class _StackedLeakage:
    """Leakage and its gradient with all users stacked into block matrices."""

    def __init__(self, channels: ChannelSet):
        K, nr, nt = channels.K, channels.Nr, channels.Nt
        self.f = channels.f_ris.reshape(K * nr, channels.M)
        self.g = channels.g_ris.reshape(K * nt, channels.M)
        # block (k, l) holds H_lk
        self.h = channels.h_direct.transpose(1, 2, 0, 3).reshape(K * nr, K * nt)
        self.mask = np.kron(~np.eye(K, dtype=bool), np.ones((nr, nt), dtype=bool))
        self.gh = self.g.conj().T

    def residual(self, theta):
        return (self.h + self.f @ theta @ self.gh) * self.mask

    def value(self, theta) -> float:
        e = self.residual(theta)
        return float(np.real(np.vdot(e, e)))

    def theta_gradient(self, theta):
        """``sum_{l != k} F_k^H (H_lk + F_k Theta G_l^H) G_l``."""
        return self.f.conj().T @ self.residual(theta) @ self.g


def mo_gradient(q: np.ndarray, channels: ChannelSet) -> np.ndarray:
    """Euclidean gradient of ``J(Q) = IL(Q Q^T)`` with respect to ``conj(Q)``.

    With ``Z = sum F_k^H (H_lk + F_k Q Q^T G_l^H) G_l`` the gradient is
    ``(Z + Z^T) conj(Q)``, so that ``dJ = 2 Re tr(grad^H dQ)``.
    """
    obj = _StackedLeakage(channels)
    return _mo_gradient(obj, q, q @ q.T)


def _mo_gradient(obj: _StackedLeakage, q, theta):
    z = obj.theta_gradient(theta)
    return (z + z.T) @ q.conj()


def _skew_direction(grad, q):
    x = q.conj().T @ grad
    b = 0.5 * (x.conj().T - x)
    return 0.5 * (b - b.conj().T)


def _symmetrize(a):
    return 0.5 * (a + a.T)


def minimize_il_mo(channels: ChannelSet, q0: Optional[np.ndarray] = None,
                   options: Optional[OptimizerOptions] = None):
    """Minimize the leakage over symmetric unitary ``Theta = Q Q^T`` by geodesic steps.

    Each iteration moves ``Q <- Q expm(mu B)`` with ``B`` the skew-Hermitian
    tangent direction, using Armijo backtracking so that the recorded leakage
    never increases. Returns ``(ScatteringMatrix, IterTrace)``.
    """
    opts = options or OptimizerOptions()
    start = time.perf_counter()
    m = channels.M
    q = random_unitary(m, opts.seed) if q0 is None else np.asarray(q0, dtype=complex)
    if q.shape != (m, m) or unitarity_error(q) > TOL_UNITARY * max(1.0, np.sqrt(m)):
        raise ContractError("initial point must be an M x M unitary matrix")
    obj = _StackedLeakage(channels)

    theta = q @ q.T
    cost = obj.value(theta)
    trace = IterTrace(il_values=[cost])
    mu = opts.mu0
    clean_accepts = 0
    grad_norm = rgrad_norm = 0.0
    it = 0
    while it < opts.max_iters:
        it += 1
        grad = _mo_gradient(obj, q, theta)
        b = _skew_direction(grad, q)
        grad_norm = float(np.linalg.norm(grad))
        rgrad_norm = float(np.linalg.norm(b))
        if rgrad_norm <= 1e-14 * max(grad_norm, 1e-300) or rgrad_norm == 0.0:
            trace.converged = True
            break
        if mu is None:
            mu = 1.0 / grad_norm
        slope = 2.0 * rgrad_norm ** 2
        backtracked = False
        while True:
            q_new = q @ expm_skew_hermitian(mu * b)
            theta_new = q_new @ q_new.T
            cost_new = obj.value(theta_new)
            if cost_new <= cost - opts.armijo_c * mu * slope:
                break
            mu *= opts.backtrack_factor
            backtracked = True
            if mu * rgrad_norm < 1e-15:
                break
        if cost_new > cost:
            # step collapsed without decrease: numerically stationary
            trace.converged = True
            break
        q, theta, cost = q_new, theta_new, cost_new
        trace.il_values.append(cost)
        if backtracked:
            clean_accepts = 0
        else:
            clean_accepts += 1
            if clean_accepts >= 2:
                mu *= 2.0
                clean_accepts = 0
        w = opts.window
        if len(trace.il_values) > w:
            ref = trace.il_values[-w - 1]
            if ref - cost <= opts.rel_tol * ref:
                trace.converged = True
                break

    trace.iterations = it
    trace.wall_time = time.perf_counter() - start
    trace.info.update(grad_norm=grad_norm, riemannian_grad_norm=rgrad_norm, q=q, final_mu=mu)
    return ScatteringMatrix(_symmetrize(theta), ARCH_FULLY), trace


def _symmetric_factor(factor: np.ndarray, m: int) -> np.ndarray:
    """``factor @ N`` for the symmetric basis N, computed by column gathering."""
    pairs = symmetric_index_pairs(m)
    i = np.array([p[0] for p in pairs])
    j = np.array([p[1] for p in pairs])
    a = factor[:, i + j * m]
    b = factor[:, j + i * m]
    return np.where(i == j, a, (a + b) / np.sqrt(2.0))


class _RegularizedLS:
    """``x(lam) = -(B^H B + lam I)^{-1} B^H h`` through the thin SVD of ``B``.

    At ``lam = 0`` a rank-deficient ``B`` yields the minimum-norm solution.
    """

    def __init__(self, b: np.ndarray, h: np.ndarray):
        if b.shape[0] == 0:
            self.u = np.zeros((0, 0), dtype=complex)
            self.s = np.zeros(0)
            self.vh = np.zeros((0, b.shape[1]), dtype=complex)
        else:
            self.u, self.s, self.vh = np.linalg.svd(b, full_matrices=False)
        smax = self.s[0] if self.s.size else 0.0
        keep = self.s > 1e-12 * max(smax, np.finfo(float).tiny)
        self.u, self.s, self.vh = self.u[:, keep], self.s[keep], self.vh[keep]
        self.c = self.u.conj().T @ h
        self.dim = b.shape[1]

    def coeffs(self, lam):
        return self.s / (self.s ** 2 + lam)

    def norm2(self, lam) -> float:
        return float(np.sum(np.abs(self.c * self.coeffs(lam)) ** 2))

    def solve(self, lam) -> np.ndarray:
        if self.s.size == 0:
            return np.zeros(self.dim, dtype=complex)
        return -(self.vh.conj().T @ (self.coeffs(lam) * self.c))

    @property
    def gradient_norm(self) -> float:
        """``||B^H h||``."""
        return float(np.linalg.norm(self.s * self.c))


def solve_trace_constrained(ls: _RegularizedLS, cap: float, tol: float = 1e-8, max_iter: int = 200):
    """Pick ``lam >= 0`` so that ``||x(lam)||^2 <= cap`` (with equality when active).

    The returned point always satisfies the cap; when active it lies within
    ``tol`` relative below it.
    """
    diag = {"lambda": 0.0, "bisect_iters": 0}
    if ls.norm2(0.0) <= cap:
        return ls.solve(0.0), diag
    lo, hi = 0.0, ls.gradient_norm / np.sqrt(cap)
    doublings = 0
    while ls.norm2(hi) > cap:
        hi *= 2.0
        doublings += 1
        if doublings > 200 or not np.isfinite(hi):
            raise NumericalFailure("could not bracket the trace multiplier", diag)
    for n in range(max_iter):
        mid = 0.5 * (lo + hi)
        val = ls.norm2(mid)
        if cap * (1.0 - tol) <= val <= cap:
            # accept only from the feasible side
            lo = hi = mid
            break
        if val > cap:
            lo = mid
        else:
            hi = mid
    else:
        n = max_iter
    lam = hi
    if abs(ls.norm2(lam) - cap) > max(tol, 1e-6) * cap:
        raise NumericalFailure("trace-multiplier bisection did not converge",
                               dict(diag, lam_lo=lo, lam_hi=hi))
    diag.update({"lambda": lam, "bisect_iters": n + 1, "bracket_doublings": doublings})
    return ls.solve(lam), diag


def relaxed_symmetric_solution(channels: ChannelSet, power_cap: Optional[float] = None,
                               bisect_tol: float = 1e-8):
    """Symmetric ``Theta`` minimizing the leakage subject to ``tr(Theta^H Theta) <= cap``.

    ``power_cap=None`` uses ``M``; ``power_cap=float('inf')`` drops the cap.
    Returns ``(theta_relaxed, x, diagnostics)``.
    """
    m = channels.M
    form = il_quadratic_form(channels, "bdris")
    b = _symmetric_factor(form.factor, m)
    ls = _RegularizedLS(b, form.target)
    cap = float(m) if power_cap is None else power_cap
    x, diag = solve_trace_constrained(ls, cap, bisect_tol)
    theta = symmetric_from_coords(x, m)
    diag.update(x_norm2=float(np.real(np.vdot(x, x))), cap=cap,
                relaxed_il=form.evaluate(theta.reshape(-1, order="F")))
    return theta, x, diag


def unconstrained_relaxed_solution(channels: ChannelSet, symmetric: bool = False):
    """Leakage minimizer with no power and no unitarity constraint (test mode).

    Minimum-norm solution of the least-squares problem over all (or all
    symmetric) M x M matrices. Returns ``(theta, residual_il)``.
    """
    m = channels.M
    if symmetric:
        theta, _, diag = relaxed_symmetric_solution(channels, power_cap=np.inf)
        return theta, diag["relaxed_il"]
    form = il_quadratic_form(channels, "bdris")
    r = _RegularizedLS(form.factor, form.target).solve(0.0)
    return r.reshape(m, m, order="F"), form.evaluate(r)


def minimize_il_rtp(channels: ChannelSet, options: Optional[OptimizerOptions] = None):
    """Relax-then-project: trace-ball symmetric solve followed by unitary projection.

    Returns ``(ScatteringMatrix, diagnostics)``; the diagnostics hold the
    relaxed matrix, the multiplier and the leakage before and after projection.
    """
    opts = options or OptimizerOptions()
    start = time.perf_counter()
    theta_relaxed, x, diag = relaxed_symmetric_solution(channels, bisect_tol=opts.bisect_tol)
    theta = _symmetrize(project_to_unitary(theta_relaxed))
    diag.update(theta_relaxed=theta_relaxed, x=x,
                projected_il=interference_leakage(channels, theta),
                wall_time=time.perf_counter() - start)
    return ScatteringMatrix(theta, ARCH_FULLY), diag


def minimize_il_group(channels: ChannelSet, m_g: int, inner: str = "mo",
                      options: Optional[OptimizerOptions] = None):
    """Group-connected surface: optimize one M_g x M_g block at a time, others fixed.

    Blocks start at the identity and are swept in ascending order. MO blocks
    are warm-started from the Takagi factor of the current block, so each
    block update cannot increase the leakage; an RtP block is kept only if it
    does not increase it.
    """
    opts = options or OptimizerOptions()
    m = channels.M
    if m_g < 1 or m % m_g:
        raise ValueError(f"group size {m_g} does not divide M={m}")
    if inner not in ("mo", "rtp"):
        raise ValueError(f"unknown inner solver {inner!r}")
    start = time.perf_counter()
    n_groups = m // m_g
    theta = np.eye(m, dtype=complex)
    cost = interference_leakage(channels, theta)
    trace = IterTrace(il_values=[cost])
    inner_opts = OptimizerOptions(
        max_iters=opts.inner_max_iters, rel_tol=opts.rel_tol, window=opts.window,
        mu0=opts.mu0, backtrack_factor=opts.backtrack_factor, armijo_c=opts.armijo_c,
        bisect_tol=opts.bisect_tol, seed=opts.seed,
    )
    rejected = 0
    inner_iters = 0
    sweep = 0
    for sweep in range(1, opts.max_outer + 1):
        h_eff = effective_channels(channels, theta)
        for r in range(n_groups):
            sl = slice(r * m_g, (r + 1) * m_g)
            block = theta[sl, sl]
            sub = channels.subset(sl)
            own = _ris_term(sub, block)
            sub = ChannelSet(h_eff - own, sub.f_ris, sub.g_ris, channels.noise_power)
            if inner == "mo":
                q0 = takagi(block).q
                res, tr = minimize_il_mo(sub, q0=q0, options=inner_opts)
                new_block = res.theta
                inner_iters += tr.iterations
            else:
                res, _ = minimize_il_rtp(sub, inner_opts)
                new_block = res.theta
                if interference_leakage(sub, new_block) > interference_leakage(sub, block):
                    rejected += 1
                    continue
            theta[sl, sl] = new_block
            h_eff = sub.h_direct + _ris_term(sub, new_block)
        new_cost = interference_leakage(channels, theta)
        trace.il_values.append(new_cost)
        prev, cost = cost, new_cost
        if prev - new_cost <= opts.outer_tol * prev:
            trace.converged = True
            break
    trace.iterations = sweep
    trace.wall_time = time.perf_counter() - start
    trace.info.update(inner=inner, rejected_blocks=rejected, inner_iterations=inner_iters)
    return ScatteringMatrix(theta, ARCH_GROUP, m_g), trace


def minimize_il_diag(channels: ChannelSet, options: Optional[OptimizerOptions] = None,
                     record_steps: bool = False):
    """Unit-modulus coordinate descent for a diagonal RIS.

    Each coordinate is set to ``-c_m/|c_m|`` with
    ``c_m = s_m + sum_{n != m} Sigma_mn r_n``, the exact minimizer over the
    unit circle. With ``record_steps`` the leakage after every coordinate
    update is kept in ``trace.info['step_il']``.
    """
    opts = options or OptimizerOptions()
    start = time.perf_counter()
    form = il_quadratic_form(channels, "diagonal")
    sigma, s = form.sigma_big, form.s_vec
    m = channels.M
    r = np.ones(m, dtype=complex)
    y = sigma @ r
    cost = form.evaluate(r)
    trace = IterTrace(il_values=[cost])
    steps = [cost] if record_steps else None
    step_cost = cost
    sweep = 0
    for sweep in range(1, opts.max_sweeps + 1):
        for i in range(m):
            c = s[i] + y[i] - sigma[i, i] * r[i]
            mag = abs(c)
            if mag == 0.0:
                continue
            new = -c / mag
            delta = new - r[i]
            if delta == 0:
                continue
            y += sigma[:, i] * delta
            step_cost += 2.0 * float(np.real(np.conj(delta) * c))
            r[i] = new
            if record_steps:
                steps.append(step_cost)
        new_cost = form.evaluate(r)
        step_cost = new_cost
        trace.il_values.append(new_cost)
        prev, cost = cost, new_cost
        if prev - new_cost <= opts.sweep_tol * prev:
            trace.converged = True
            break
    trace.iterations = sweep
    trace.wall_time = time.perf_counter() - start
    if record_steps:
        trace.info["step_il"] = steps
    return ScatteringMatrix(np.diag(r), ARCH_DIAGONAL), trace
