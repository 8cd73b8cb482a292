"""Joint min-IL design of decoders, precoders and a fully-connected BD-RIS."""

import time
from typing import Optional

import numpy as np

from .channels import ChannelSet
from .leakage import effective_channels, leakage_with, precoded_channels
from .optimizers import ARCH_FULLY, IterTrace, OptimizerOptions, ScatteringMatrix, minimize_il_mo
from .precoders import Beamformers, min_il_beamformers, min_il_decoders, min_il_precoders


def joint_min_il(channels: ChannelSet, d: int, p_t: float = 1.0,
                 options: Optional[OptimizerOptions] = None, eps: float = 1e-4,
                 max_outer: int = 100, inner_iters: int = 100, init_iters: int = 100):
    """Three-step alternation: decoders, precoders, then the BD-RIS by MO.

    Beamformers start from the min-IL design without RIS and the surface from
    the identity. The MO step runs on the precoded channels, warm-started at
    the current ``Q``, for at most ``inner_iters`` iterations. Stops when one
    round lowers the leakage by less than ``eps`` times the no-RIS leakage.

    ``trace.il_values`` holds the joint leakage after every single step
    (three per round, preceded by the initial value).
    """
    opts = options or OptimizerOptions()
    start = time.perf_counter()
    m = channels.M
    init = min_il_beamformers(channels, np.zeros((m, m)), d, p_t, iters=init_iters)
    v, u = init.v, init.u
    il_noris = leakage_with(channels.h_direct, v, u)

    theta = np.eye(m, dtype=complex)
    q = np.eye(m, dtype=complex)
    h_eff = effective_channels(channels, theta)
    trace = IterTrace(il_values=[leakage_with(h_eff, v, u)])
    inner = OptimizerOptions(
        max_iters=inner_iters, rel_tol=opts.rel_tol, window=opts.window, mu0=opts.mu0,
        backtrack_factor=opts.backtrack_factor, armijo_c=opts.armijo_c, seed=opts.seed,
    )
    rounds = 0
    mo_iters = 0
    for rounds in range(1, max_outer + 1):
        prev = trace.il_values[-1]
        u = min_il_decoders(h_eff, v, d)
        trace.il_values.append(leakage_with(h_eff, v, u))
        v = min_il_precoders(h_eff, u, d, p_t)
        trace.il_values.append(leakage_with(h_eff, v, u))
        res, tr = minimize_il_mo(precoded_channels(channels, v, u), q0=q, options=inner)
        mo_iters += tr.iterations
        theta, q = res.theta, tr.info["q"]
        h_eff = effective_channels(channels, theta)
        trace.il_values.append(leakage_with(h_eff, v, u))
        if prev - trace.il_values[-1] < eps * il_noris:
            trace.converged = True
            break
    trace.iterations = rounds
    trace.wall_time = time.perf_counter() - start
    trace.info.update(il_noris=il_noris, mo_iterations=mo_iters)
    return ScatteringMatrix(theta, ARCH_FULLY), Beamformers(v, u), trace
