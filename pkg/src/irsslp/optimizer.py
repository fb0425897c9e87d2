"""Projection operators, the accelerated projected-gradient sub-solver, and
the two-block alternating-minimization driver.

Each sub-solver minimizes the smoothed objective over one design block via
extrapolated (momentum) gradient steps projected back onto the feasible set,
with a backtracking line search on the inverse step size.  The driver
alternates between the convex (precoder, spacing) block and the non-convex
unit-modulus block until the combined iterate movement stalls.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .constellation import QamSpec
from .model import ChannelSet, DesignVariables, SymbolBlock, effective_channel_matrix
from .objective import PskTerms, QamTerms


class SolverError(RuntimeError):
    """Raised when a sub-solver hits a non-finite objective or gradient."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class LineSearchConfig:
    """Backtracking parameters for the inverse step size.

    ``initial_step_inverse`` of None triggers a one-time Lipschitz probe: the
    ratio of gradient difference to iterate difference at two random feasible
    points seeds the first step.
    """

    initial_step_inverse: float | None = None
    shrink: float = 2.0
    max_backtracks: int = 50

    def __post_init__(self):
        if self.initial_step_inverse is not None and self.initial_step_inverse <= 0:
            raise ValueError("initial_step_inverse must be positive")
        if self.shrink <= 1:
            raise ValueError("shrink must exceed 1")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be >= 1")


@dataclass
class ApgState:
    """Momentum recursion state: xi_j = (1 + sqrt(1 + 4 xi_{j-1}^2)) / 2."""

    xi: float = 1.0
    alpha: float = 0.0
    iteration: int = 0

    def advance(self) -> float:
        """Step the recursion and return the extrapolation weight alpha_j."""
        xi_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * self.xi * self.xi))
        self.alpha = (self.xi - 1.0) / xi_next
        self.xi = xi_next
        self.iteration += 1
        return self.alpha

    def restart(self) -> None:
        self.xi = 1.0
        self.alpha = 0.0


@dataclass
class ApgResult:
    """Outcome of one sub-solve; ``solution`` is the best feasible iterate."""

    solution: list
    value: float
    objective_values: list
    n_iterations: int
    n_backtracks: int
    converged: bool


@dataclass
class OuterConfig:
    """Driver and sub-solver controls."""

    max_outer: int = 20
    outer_tol: float = 1e-5
    apg_max_iter: int = 1000
    apg_tol: float = 1e-5
    eta: float = 0.01
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)
    eta_continuation: tuple = ()  # optional ladder of larger etas run first

    def __post_init__(self):
        if min(self.max_outer, self.apg_max_iter) < 1:
            raise ValueError("iteration caps must be >= 1")
        if min(self.outer_tol, self.apg_tol, self.eta) <= 0:
            raise ValueError("tolerances and eta must be positive")


@dataclass
class SolverTrace:
    """Objective history and per-stage effort of one alternating run."""

    objective_values: list = field(default_factory=list)
    apg_iterations: list = field(default_factory=list)  # (stage label, count)
    stage_seconds: list = field(default_factory=list)
    n_outer: int = 0
    converged: bool = False
    eta_schedule: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Projections


def project_power_ball(precode, p_total: float) -> np.ndarray:
    """Scale each column with squared norm above p_total back to the sphere."""
    if p_total <= 0:
        raise ValueError("p_total must be positive")
    precode = np.asarray(precode, dtype=complex)
    norms_sq = (np.abs(precode) ** 2).sum(axis=0)
    # relative slack keeps the operator exactly idempotent in floating point
    over = norms_sq > p_total * (1.0 + 1e-12)
    scale = np.ones_like(norms_sq)
    scale[over] = np.sqrt(p_total / norms_sq[over])
    return precode * scale


def project_nonnegative(spacing) -> np.ndarray:
    return np.maximum(np.asarray(spacing, dtype=float), 0.0)


def project_unit_modulus(theta) -> np.ndarray:
    """Normalize each coefficient to unit modulus; zeros map to 1."""
    theta = np.asarray(theta, dtype=complex)
    mag = np.abs(theta)
    out = np.where(mag == 0.0, 1.0 + 0.0j, theta / np.where(mag == 0.0, 1.0, mag))
    keep = np.abs(mag - 1.0) <= 1e-12
    return np.where(keep, theta, out)


# ---------------------------------------------------------------------------
# Block arithmetic (a block is a list of ndarrays updated jointly)


def _b_combine(a, b, scale):
    return [x + scale * y for x, y in zip(a, b)]


def _b_sub(a, b):
    return [x - y for x, y in zip(a, b)]


def _b_norm_sum(a):
    return float(sum(np.linalg.norm(x) for x in a))


def _b_norm_sq(a):
    return float(sum(np.vdot(x, x).real for x in a))


def _b_real_dot(g, d):
    return float(sum(np.vdot(x, y).real for x, y in zip(g, d)))


def _b_finite(a):
    return all(np.all(np.isfinite(x)) for x in a if x.size)


def _probe_step_inverse(fun, project, init, rng: np.random.Generator) -> float:
    """Estimate a local gradient Lipschitz constant from two feasible points."""
    perturbed = []
    for arr in init:
        scale = 0.1 * max(1.0, np.linalg.norm(arr) / max(1, np.sqrt(arr.size)))
        noise = rng.standard_normal(arr.shape)
        if np.iscomplexobj(arr):
            noise = noise + 1j * rng.standard_normal(arr.shape)
        perturbed.append(arr + scale * noise)
    other = project(perturbed)
    _, g0 = fun(init, True)
    _, g1 = fun(other, True)
    dz = math.sqrt(_b_norm_sq(_b_sub(other, init)))
    dg = math.sqrt(_b_norm_sq(_b_sub(g1, g0)))
    if dz <= 0 or not np.isfinite(dg) or dg <= 0:
        return 1.0
    return min(max(dg / dz, 1e-6), 1e12)


def apg_solve(
    fun,
    project,
    init,
    line_search: LineSearchConfig | None = None,
    max_iter: int = 1000,
    tol: float = 1e-5,
    rng: np.random.Generator | None = None,
    restart_on_increase: bool = False,
) -> ApgResult:
    """Minimize ``fun`` over one block with momentum, projection, backtracking.

    ``fun(block, need_grad)`` returns (value, grads or None) and ``project``
    maps a block onto the feasible set.  Iterations stop when the summed
    per-array norm of the iterate change drops to ``tol``.  The returned
    solution is the best feasible iterate seen, so the value never exceeds
    the objective at ``init``.
    """
    ls = line_search or LineSearchConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    current = project([np.array(b) for b in init])
    f_current, _ = fun(current, False)
    if not np.isfinite(f_current):
        raise SolverError("objective is not finite at the initial point")

    beta = ls.initial_step_inverse
    if beta is None:
        beta = _probe_step_inverse(fun, project, current, rng)

    previous = [b.copy() for b in current]
    state = ApgState()
    best_value, best_point = f_current, current
    history = [f_current]
    n_backtracks = 0
    converged = False

    for _ in range(max_iter):
        alpha = state.advance()
        extrapolated = _b_combine(current, _b_sub(current, previous), alpha)
        f_ex, grad = fun(extrapolated, True)
        if not np.isfinite(f_ex) or not _b_finite(grad):
            raise SolverError(
                "non-finite objective or gradient during sub-solve",
                trace=history,
            )
        candidate = None
        f_cand = np.inf
        for _bt in range(ls.max_backtracks):
            candidate = project(_b_combine(extrapolated, grad, -1.0 / beta))
            f_cand, _ = fun(candidate, False)
            step = _b_sub(candidate, extrapolated)
            bound = f_ex + _b_real_dot(grad, step) + 0.5 * beta * _b_norm_sq(step)
            if f_cand <= bound + 1e-12 * max(1.0, abs(bound)):
                break
            beta *= ls.shrink
            n_backtracks += 1

        move = _b_norm_sum(_b_sub(candidate, current))
        previous, current = current, candidate
        if f_cand < best_value:
            best_value, best_point = f_cand, candidate
        if restart_on_increase and f_cand > f_current:
            state.restart()
        f_current = f_cand
        history.append(f_cand)
        if move <= tol:
            converged = True
            break

    return ApgResult(
        solution=[b.copy() for b in best_point],
        value=best_value,
        objective_values=history,
        n_iterations=state.iteration,
        n_backtracks=n_backtracks,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# Block objectives (precomputation of everything the fixed blocks determine)


def _block_terms(sym: SymbolBlock, eta: float):
    if isinstance(sym.spec, QamSpec):
        return QamTerms(sym.symbols, sym.spec.b_level, eta)
    return PskTerms(sym.symbols, sym.spec.order, eta)


def _xd_objective(ch: ChannelSet, sym: SymbolBlock, theta, eta: float):
    heff = effective_channel_matrix(ch, theta)
    heff_h = heff.conj().T.copy()
    terms = _block_terms(sym, eta)
    if isinstance(terms, QamTerms):

        def fun(block, need_grad):
            precode, spacing = block
            value, kappa, grad_d = terms.evaluate(heff_h @ precode, spacing)
            if not need_grad:
                return value, None
            return value, [heff @ kappa, grad_d]

    else:

        def fun(block, need_grad):
            (precode,) = block
            value, kappa = terms.evaluate(heff_h @ precode)
            if not need_grad:
                return value, None
            return value, [heff @ kappa]

    return fun


def _theta_objective(ch: ChannelSet, sym: SymbolBlock, precode, spacing, eta: float):
    # received[i, t] = theta^H q[i, :, t] + base[i, t] with q = R_i^H x_t
    q_arr = np.einsum("knm,nt->kmt", ch.reflect.conj(), precode)
    k, m, t = q_arr.shape
    q_mat = np.ascontiguousarray(q_arr.transpose(1, 0, 2).reshape(m, k * t))  # (M, K*T)
    base = ch.direct.conj() @ precode
    terms = _block_terms(sym, eta)
    is_qam = isinstance(terms, QamTerms)

    def fun(block, need_grad):
        (theta,) = block
        received = (theta.conj() @ q_mat).reshape(k, t) + base
        if is_qam:
            value, kappa, _ = terms.evaluate(received, spacing)
        else:
            value, kappa = terms.evaluate(received)
        if not need_grad:
            return value, None
        return value, [q_mat @ kappa.conj().reshape(k * t)]

    return fun


def _xd_projection(p_total: float, is_qam: bool):
    if is_qam:
        return lambda block: [
            project_power_ball(block[0], p_total),
            project_nonnegative(block[1]),
        ]
    return lambda block: [project_power_ball(block[0], p_total)]


def _assert_feasible(design: DesignVariables, p_total: float) -> None:
    norms_sq = (np.abs(design.precode) ** 2).sum(axis=0)
    assert np.all(norms_sq <= p_total * (1.0 + 1e-9)), "power constraint violated"
    if design.spacing is not None:
        assert np.all(design.spacing >= 0.0), "negative spacing"
    if design.theta.size:
        assert np.all(np.abs(np.abs(design.theta) - 1.0) <= 1e-9), "theta off modulus"


def solve_precoder(
    ch: ChannelSet,
    sym: SymbolBlock,
    theta,
    p_total: float,
    cfg: OuterConfig | None = None,
    rng: np.random.Generator | None = None,
    init: DesignVariables | None = None,
) -> tuple[DesignVariables, ApgResult]:
    """One convex sub-solve of the (precoder, spacing) block for fixed theta."""
    cfg = cfg or OuterConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    theta = np.asarray(theta, dtype=complex)
    is_qam = isinstance(sym.spec, QamSpec)
    if init is None:
        init = warm_start(ch, sym, p_total, rng, theta=theta)
    block = [np.array(init.precode)]
    if is_qam:
        block.append(np.array(init.spacing))
    result = apg_solve(
        _xd_objective(ch, sym, theta, cfg.eta),
        _xd_projection(p_total, is_qam),
        block,
        line_search=cfg.line_search,
        max_iter=cfg.apg_max_iter,
        tol=cfg.apg_tol,
        rng=rng,
    )
    design = DesignVariables(
        precode=result.solution[0],
        theta=theta,
        spacing=result.solution[1] if is_qam else None,
    )
    return design, result


def warm_start(
    ch: ChannelSet,
    sym: SymbolBlock,
    p_total: float,
    rng: np.random.Generator,
    theta=None,
) -> DesignVariables:
    """Feasible starting design: random phases, channel-inverting precoder.

    The precoder targets the intended symbols at unit spacing through the
    effective channel and is projected onto the power ball; if the channel
    Gram matrix is close to singular the matched-filter direction is used
    instead.  Spacings start at one (QAM only).
    """
    if theta is None:
        theta = np.exp(2j * np.pi * rng.uniform(size=ch.n_irs))
    else:
        theta = np.asarray(theta, dtype=complex)
    heff = effective_channel_matrix(ch, theta)  # (N, K)
    symbols = sym.symbols
    gram = heff.conj().T @ heff  # (K, K), rows of the user channel matrix
    use_matched = ch.n_users > ch.n_tx
    if not use_matched:
        use_matched = np.linalg.cond(gram) > 1e10
    if use_matched:
        precode = heff @ symbols
        peak = np.sqrt((np.abs(precode) ** 2).sum(axis=0).max())
        if peak > 0:
            precode = precode * (np.sqrt(p_total) / peak)
    else:
        precode = heff @ np.linalg.solve(gram, symbols)
    precode = project_power_ball(precode, p_total)
    spacing = None
    if isinstance(sym.spec, QamSpec):
        spacing = np.ones(2 * ch.n_users)
    return DesignVariables(precode=precode, theta=theta, spacing=spacing)


def alternating_minimize(
    ch: ChannelSet,
    sym: SymbolBlock,
    p_total: float,
    init: DesignVariables,
    cfg: OuterConfig | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[DesignVariables, SolverTrace]:
    """Alternate sub-solves of the two design blocks until movement stalls.

    Every outer iteration first solves the convex (precoder, spacing) block
    for the current phases, then the phase block for the new precoder; with
    M = 0 the phase stage is skipped entirely.  Each sub-solve returns its
    best iterate, so the recorded objective sequence is nonincreasing.
    """
    cfg = cfg or OuterConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    is_qam = isinstance(sym.spec, QamSpec)
    if is_qam and init.spacing is None:
        raise ValueError("QAM runs need an initial spacing vector")

    precode = project_power_ball(init.precode, p_total)
    spacing = project_nonnegative(init.spacing) if is_qam else None
    theta = project_unit_modulus(init.theta)
    xd_project = _xd_projection(p_total, is_qam)

    trace = SolverTrace()
    etas = list(cfg.eta_continuation) + [cfg.eta]
    trace.eta_schedule = etas

    for eta in etas:
        fun0 = _xd_objective(ch, sym, theta, eta)
        f0, _ = fun0([precode, spacing] if is_qam else [precode], False)
        trace.objective_values.append(f0)
        for _ in range(cfg.max_outer):
            trace.n_outer += 1
            x_prev, d_prev, t_prev = precode, spacing, theta

            tic = time.perf_counter()
            block = [precode, spacing] if is_qam else [precode]
            res_xd = apg_solve(
                _xd_objective(ch, sym, theta, eta),
                xd_project,
                block,
                line_search=cfg.line_search,
                max_iter=cfg.apg_max_iter,
                tol=cfg.apg_tol,
                rng=rng,
            )
            precode = res_xd.solution[0]
            if is_qam:
                spacing = res_xd.solution[1]
            f_outer = res_xd.value
            trace.apg_iterations.append(("precoder", res_xd.n_iterations))
            trace.stage_seconds.append(("precoder", time.perf_counter() - tic))

            if ch.n_irs > 0:
                tic = time.perf_counter()
                res_th = apg_solve(
                    _theta_objective(ch, sym, precode, spacing, eta),
                    lambda block: [project_unit_modulus(block[0])],
                    [theta],
                    line_search=cfg.line_search,
                    max_iter=cfg.apg_max_iter,
                    tol=cfg.apg_tol,
                    rng=rng,
                    restart_on_increase=True,
                )
                theta = res_th.solution[0]
                f_outer = res_th.value
                trace.apg_iterations.append(("phases", res_th.n_iterations))
                trace.stage_seconds.append(("phases", time.perf_counter() - tic))

            trace.objective_values.append(f_outer)
            if __debug__:
                _assert_feasible(
                    DesignVariables(precode=precode, theta=theta, spacing=spacing),
                    p_total,
                )
            move = float(np.linalg.norm(precode - x_prev)) + float(
                np.linalg.norm(theta - t_prev)
            )
            if is_qam:
                move += float(np.linalg.norm(spacing - d_prev))
            if move <= cfg.outer_tol:
                trace.converged = True
                break

    design = DesignVariables(precode=precode, theta=theta, spacing=spacing)
    return design, trace
