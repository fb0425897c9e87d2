"""Reference transmission schemes used in the BER comparisons.

Three baselines accompany the full joint design: channel-inverting (ZF)
precoding without the reflecting surface, the symbol-level design without the
surface, and the symbol-level design with the surface frozen at random phases
(an ablation isolating the value of phase optimization).
"""

from __future__ import annotations

import numpy as np

from .constellation import QamSpec
from .model import ChannelSet, DesignVariables, SymbolBlock
from .optimizer import (
    OuterConfig,
    SolverTrace,
    alternating_minimize,
    solve_precoder,
    warm_start,
)

SCHEME_SLP_IRS = "slp-irs"
SCHEME_SLP_NO_IRS = "slp-noirs"
SCHEME_SLP_RANDOM_THETA = "slp-random-theta"
SCHEME_ZF = "zf"
VALID_SCHEMES = (
    SCHEME_SLP_IRS,
    SCHEME_SLP_NO_IRS,
    SCHEME_SLP_RANDOM_THETA,
    SCHEME_ZF,
)


def zf_precode(direct, symbols, p_total: float) -> tuple[np.ndarray, float]:
    """Zero-forcing precoder over the direct channels, average-power scaled.

    Inverts the K x N user channel matrix so each user receives exactly
    ``gain * symbol`` without interference; the common gain is set so the
    per-slot power averaged over the block equals ``p_total``.  Receivers use
    the returned gain as their detection spacing.
    """
    direct = np.asarray(direct, dtype=complex)
    symbols = np.asarray(symbols, dtype=complex)
    k, n = direct.shape
    if k > n:
        raise ValueError(f"zero forcing needs K <= N, got K={k}, N={n}")
    rows = direct.conj()  # user i sees rows[i] @ x
    gram = rows @ rows.conj().T
    if np.linalg.cond(gram) > 1e12:
        raise ValueError("direct channel matrix is rank deficient")
    unit = rows.conj().T @ np.linalg.solve(gram, symbols)
    mean_power = float((np.abs(unit) ** 2).sum(axis=0).mean())
    gain = float(np.sqrt(p_total / mean_power))
    return gain * unit, gain


def zf_design(ch: ChannelSet, sym: SymbolBlock, p_total: float) -> DesignVariables:
    """ZF precoding packaged as a design (no surface, gain as spacing)."""
    precode, gain = zf_precode(ch.direct, sym.symbols, p_total)
    spacing = None
    if isinstance(sym.spec, QamSpec):
        spacing = np.full(2 * ch.n_users, gain)
    return DesignVariables(
        precode=precode, theta=np.zeros(0, dtype=complex), spacing=spacing
    )


def slp_no_irs(
    ch: ChannelSet,
    sym: SymbolBlock,
    p_total: float,
    cfg: OuterConfig | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[DesignVariables, SolverTrace]:
    """The full solver run on the same realization with the surface removed."""
    rng = rng if rng is not None else np.random.default_rng(0)
    bare = ch.without_irs()
    init = warm_start(bare, sym, p_total, rng)
    return alternating_minimize(bare, sym, p_total, init, cfg, rng)


def slp_random_theta(
    ch: ChannelSet,
    sym: SymbolBlock,
    p_total: float,
    cfg: OuterConfig | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[DesignVariables, SolverTrace]:
    """Surface frozen at random phases; a single convex precoder solve."""
    rng = rng if rng is not None else np.random.default_rng(0)
    init = warm_start(ch, sym, p_total, rng)
    design, result = solve_precoder(
        ch, sym, init.theta, p_total, cfg, rng, init=init
    )
    trace = SolverTrace(
        objective_values=[result.objective_values[0], result.value],
        apg_iterations=[("precoder", result.n_iterations)],
        n_outer=1,
        converged=result.converged,
    )
    return design, trace
