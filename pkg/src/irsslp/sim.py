"""Monte-Carlo bit-error-rate evaluation harness.

A sweep draws independent channel realizations, optimizes each requested
scheme once per realization (designs do not depend on the noise level, which
only scales the margins in the error bound), then reuses the optimized design
across all noise powers with fresh noise draws.  Noise streams are keyed by
(realization, noise index) only, so all schemes face identical noise and the
comparisons are paired.

Counts are aggregated in realization order with derived per-realization
seeds; a sweep with a fixed master seed is reproducible bit for bit.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import (
    SCHEME_SLP_IRS,
    SCHEME_SLP_NO_IRS,
    SCHEME_SLP_RANDOM_THETA,
    SCHEME_ZF,
    VALID_SCHEMES,
    slp_no_irs,
    slp_random_theta,
    zf_design,
)
from .channels import PathLossParams, RicianParams, SceneLayout, generate_scenario
from .constellation import PskSpec, QamSpec, psk_detect, qam_detect
from .model import (
    ChannelSet,
    DesignVariables,
    SymbolBlock,
    SystemDims,
    effective_channel_matrix,
)
from .optimizer import (
    OuterConfig,
    SolverError,
    SolverTrace,
    alternating_minimize,
    warm_start,
)

logger = logging.getLogger(__name__)

CSV_HEADER = (
    "scheme,constellation,N,K,M,T,P_db,sigma2_db,realizations,trials,"
    "bit_errors,bits_total,ber,ci_lo,ci_hi,seed"
)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def constellation_label(spec) -> str:
    if isinstance(spec, QamSpec):
        return f"{spec.order}qam"
    return f"{spec.order}psk"


@dataclass(frozen=True)
class SweepSpec:
    """Complete description of one BER experiment."""

    dims: SystemDims
    noise_powers_db: tuple
    n_realizations: int
    n_noise_trials: int
    schemes: tuple = VALID_SCHEMES
    p_db: float = 20.0
    layout: SceneLayout = field(default_factory=SceneLayout)
    path_loss: PathLossParams = field(default_factory=PathLossParams)
    rician: RicianParams = field(default_factory=RicianParams)
    solver: OuterConfig = field(default_factory=OuterConfig)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "noise_powers_db", tuple(float(v) for v in self.noise_powers_db))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if not self.noise_powers_db:
            raise ValueError("noise_powers_db must be nonempty")
        if not self.schemes:
            raise ValueError("schemes must be nonempty")
        for s in self.schemes:
            if s not in VALID_SCHEMES:
                raise ValueError(f"unknown scheme {s!r}, expected one of {VALID_SCHEMES}")
        if min(self.n_realizations, self.n_noise_trials) < 1:
            raise ValueError("realization and trial counts must be >= 1")
        self.dims.constellation.bits_per_symbol  # BER needs a binary labeling


@dataclass
class BerRecord:
    """One aggregated (scheme, noise power) result row."""

    scheme: str
    constellation: str
    n_tx: int
    n_users: int
    n_irs: int
    block_len: int
    p_db: float
    sigma2_db: float
    realizations: int
    trials: int
    bit_errors: int
    bits_total: int
    ber: float
    ci_lo: float
    ci_hi: float
    seed: int

    def to_csv_row(self) -> str:
        fmt = lambda x: format(x, ".12g")
        return ",".join(
            [
                self.scheme,
                self.constellation,
                str(self.n_tx),
                str(self.n_users),
                str(self.n_irs),
                str(self.block_len),
                fmt(self.p_db),
                fmt(self.sigma2_db),
                str(self.realizations),
                str(self.trials),
                str(self.bit_errors),
                str(self.bits_total),
                fmt(self.ber),
                fmt(self.ci_lo),
                fmt(self.ci_hi),
                str(self.seed),
            ]
        )


def wilson_interval(errors: int, total: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson 95% score interval; at zero errors the lower bound is 0 and the
    upper bound is the usual one-sided small-sample limit."""
    if total <= 0:
        return (float("nan"), float("nan"))
    p = errors / total
    z2 = z * z
    denom = 1.0 + z2 / total
    center = (p + z2 / (2.0 * total)) / denom
    half = z * np.sqrt(p * (1.0 - p) / total + z2 / (4.0 * total * total)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def run_block_trial(
    channel: ChannelSet,
    design: DesignVariables,
    block: SymbolBlock,
    sigma2: float,
    rng: np.random.Generator,
    n_trials: int = 1,
) -> tuple[int, int]:
    """Detect ``n_trials`` noisy copies of the block; returns (errors, bits).

    Each trial draws fresh circular Gaussian noise of variance ``sigma2`` per
    (user, slot), detects with the design's per-user spacings (QAM) or by
    phase (PSK), and compares Gray bit labels against the intended ones.
    """
    if block.bits is None:
        raise ValueError("symbol block has no bit labels")
    heff = effective_channel_matrix(channel, design.theta)
    noiseless = heff.conj().T @ design.precode  # (K, T)
    k, t = noiseless.shape
    scale = np.sqrt(sigma2 / 2.0)
    noise = scale * (
        rng.standard_normal((n_trials, k, t)) + 1j * rng.standard_normal((n_trials, k, t))
    )
    y = noiseless[None, :, :] + noise
    if isinstance(block.spec, QamSpec):
        # floor keeps detection defined for degenerate (zero-spacing) designs
        d_re = np.maximum(design.spacing_real, 1e-12)[None, :, None]
        d_im = np.maximum(design.spacing_imag, 1e-12)[None, :, None]
        detected = qam_detect(y, d_re, d_im, block.spec)
    else:
        detected = psk_detect(y, block.spec)
    bits_hat = block.spec.symbols_to_bits(detected)
    errors = int(np.sum(bits_hat != block.bits[None, :, :, :]))
    total = n_trials * k * t * block.spec.bits_per_symbol
    return errors, total


@dataclass
class SchemeDesign:
    """An optimized design plus the channel view it is evaluated against."""

    scheme: str
    design: DesignVariables
    channel: ChannelSet
    trace: SolverTrace | None = None


def optimize_scheme(
    scheme: str,
    ch: ChannelSet,
    block: SymbolBlock,
    p_total: float,
    cfg: OuterConfig,
    rng: np.random.Generator,
) -> SchemeDesign:
    """Run one scheme's design procedure on one channel realization."""
    if scheme == SCHEME_SLP_IRS:
        init = warm_start(ch, block, p_total, rng)
        design, trace = alternating_minimize(ch, block, p_total, init, cfg, rng)
        return SchemeDesign(scheme, design, ch, trace)
    if scheme == SCHEME_SLP_NO_IRS:
        design, trace = slp_no_irs(ch, block, p_total, cfg, rng)
        return SchemeDesign(scheme, design, ch.without_irs(), trace)
    if scheme == SCHEME_SLP_RANDOM_THETA:
        design, trace = slp_random_theta(ch, block, p_total, cfg, rng)
        return SchemeDesign(scheme, design, ch, trace)
    if scheme == SCHEME_ZF:
        design = zf_design(ch, block, p_total)
        return SchemeDesign(scheme, design, ch.without_irs())
    raise ValueError(f"unknown scheme {scheme!r}")


@dataclass
class SchemeOutcome:
    failed: bool
    counts: list  # (errors, bits) per noise power, empty when failed


@dataclass
class RealizationResult:
    index: int
    outcomes: dict  # scheme -> SchemeOutcome


def _rng(spec_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(spec_seed, spawn_key=key))


def run_realization(spec: SweepSpec, index: int) -> RealizationResult:
    """Generate, optimize, and evaluate one channel realization."""
    scenario_seed = int(
        np.random.SeedSequence(spec.seed, spawn_key=(index, 0)).generate_state(1)[0]
    )
    scenario = generate_scenario(
        spec.dims, spec.layout, spec.path_loss, spec.rician, seed=scenario_seed
    )
    block = SymbolBlock.random(
        spec.dims.constellation,
        spec.dims.n_users,
        spec.dims.block_len,
        _rng(spec.seed, index, 1),
    )
    p_total = db_to_linear(spec.p_db)
    sigma2_list = [db_to_linear(db) for db in spec.noise_powers_db]

    outcomes = {}
    for scheme in spec.schemes:
        # identical solver stream per scheme keeps warm starts paired
        try:
            sd = optimize_scheme(
                scheme, scenario.channel, block, p_total, spec.solver,
                _rng(spec.seed, index, 2),
            )
        except (SolverError, ValueError) as exc:
            logger.warning("realization %d scheme %s failed: %s", index, scheme, exc)
            outcomes[scheme] = SchemeOutcome(failed=True, counts=[])
            continue
        counts = []
        for j, sigma2 in enumerate(sigma2_list):
            # identical noise stream per scheme keeps BER comparisons paired
            counts.append(
                run_block_trial(
                    sd.channel, sd.design, block, sigma2,
                    _rng(spec.seed, index, 3, j), spec.n_noise_trials,
                )
            )
        outcomes[scheme] = SchemeOutcome(failed=False, counts=counts)
    return RealizationResult(index=index, outcomes=outcomes)


@dataclass
class SweepResult:
    records: list
    completed_realizations: int
    failures: dict  # scheme -> count of excluded realizations
    partial: bool


def _worker(args):
    spec, index = args
    return run_realization(spec, index)


def ber_sweep(spec: SweepSpec, threads: int = 1, progress=None) -> SweepResult:
    """Run the full sweep; aggregation order is fixed by realization index.

    ``threads`` > 1 distributes realizations over worker processes; the result
    is identical to a serial run because every realization derives its own
    seeds and aggregation is a deterministic reduce.  A KeyboardInterrupt
    stops the sweep early and returns the completed prefix flagged partial.
    """
    n_sig = len(spec.noise_powers_db)
    errors = {s: [0] * n_sig for s in spec.schemes}
    bits = {s: [0] * n_sig for s in spec.schemes}
    included = {s: 0 for s in spec.schemes}
    failures = {s: 0 for s in spec.schemes}
    completed = 0
    partial = False

    def consume(result: RealizationResult):
        nonlocal completed
        for scheme in spec.schemes:
            outcome = result.outcomes[scheme]
            if outcome.failed:
                failures[scheme] += 1
                continue
            included[scheme] += 1
            for j, (e, b) in enumerate(outcome.counts):
                errors[scheme][j] += e
                bits[scheme][j] += b
        completed += 1
        if progress is not None:
            progress(completed, spec.n_realizations)

    try:
        if threads <= 1:
            for index in range(spec.n_realizations):
                consume(run_realization(spec, index))
        else:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                jobs = ((spec, i) for i in range(spec.n_realizations))
                for result in pool.map(_worker, jobs):
                    consume(result)
    except KeyboardInterrupt:
        partial = True
        logger.warning("sweep interrupted after %d realizations", completed)

    records = []
    label = constellation_label(spec.dims.constellation)
    for scheme in spec.schemes:
        n_irs = spec.dims.n_irs if scheme in (SCHEME_SLP_IRS, SCHEME_SLP_RANDOM_THETA) else 0
        for j, sigma_db in enumerate(spec.noise_powers_db):
            e, b = errors[scheme][j], bits[scheme][j]
            lo, hi = wilson_interval(e, b)
            records.append(
                BerRecord(
                    scheme=scheme,
                    constellation=label,
                    n_tx=spec.dims.n_tx,
                    n_users=spec.dims.n_users,
                    n_irs=n_irs,
                    block_len=spec.dims.block_len,
                    p_db=spec.p_db,
                    sigma2_db=sigma_db,
                    realizations=included[scheme],
                    trials=spec.n_noise_trials,
                    bit_errors=e,
                    bits_total=b,
                    ber=(e / b) if b else float("nan"),
                    ci_lo=lo,
                    ci_hi=hi,
                    seed=spec.seed,
                )
            )
    total_failures = sum(failures.values())
    if total_failures:
        logger.warning("excluded realizations per scheme: %s", failures)
    return SweepResult(
        records=records,
        completed_realizations=completed,
        failures=failures,
        partial=partial,
    )


def records_to_csv(records) -> str:
    lines = [CSV_HEADER]
    lines.extend(r.to_csv_row() for r in records)
    return "\n".join(lines) + "\n"


def convergence_trace(spec: SweepSpec, realization: int = 0) -> SolverTrace:
    """Objective trace of the full design on one realization of the sweep."""
    scenario_seed = int(
        np.random.SeedSequence(spec.seed, spawn_key=(realization, 0)).generate_state(1)[0]
    )
    scenario = generate_scenario(
        spec.dims, spec.layout, spec.path_loss, spec.rician, seed=scenario_seed
    )
    block = SymbolBlock.random(
        spec.dims.constellation,
        spec.dims.n_users,
        spec.dims.block_len,
        _rng(spec.seed, realization, 1),
    )
    p_total = db_to_linear(spec.p_db)
    rng = _rng(spec.seed, realization, 2)
    init = warm_start(scenario.channel, block, p_total, rng)
    _, trace = alternating_minimize(
        scenario.channel, block, p_total, init, spec.solver, rng
    )
    return trace
