"""Command-line frontend: solve, sweep, trace, check, gen-scenario.

All commands read one JSON config (see :mod:`irsslp.config`); ``--seed``
overrides the config seed.  Every output file embeds the seed and the SHA-256
hash of the canonical config so runs can be traced back to their inputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .channels import generate_scenario, load_scenario, save_scenario
from .config import (
    RunConfig,
    config_hash,
    config_to_dict,
    config_to_sweep_spec,
    load_config,
)
from .constellation import PskSpec, QamSpec
from .model import SymbolBlock, SystemDims
from .objective import (
    SmoothingConfig,
    exact_objective_psk,
    exact_objective_qam,
    finite_diff_gradient,
    smooth_max,
    smoothed_objective_psk,
    smoothed_objective_qam,
)
from .optimizer import (
    alternating_minimize,
    project_nonnegative,
    project_power_ball,
    project_unit_modulus,
    warm_start,
)
from .sim import ber_sweep, convergence_trace, db_to_linear, records_to_csv

logger = logging.getLogger("irsslp")


def _scenario_seed(master_seed: int, realization: int = 0) -> int:
    return int(
        np.random.SeedSequence(master_seed, spawn_key=(realization, 0)).generate_state(1)[0]
    )


def _rng(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))


def _complex_to_json(arr: np.ndarray) -> dict:
    return {"real": arr.real.tolist(), "imag": arr.imag.tolist()}


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _effective_config(args) -> tuple[RunConfig, int, str]:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    return cfg, seed, config_hash(cfg)


# ---------------------------------------------------------------------------
# solve


def cmd_solve(args) -> int:
    cfg, seed, digest = _effective_config(args)
    dims = cfg.dims
    if args.scenario:
        scenario, meta = load_scenario(args.scenario)
        if scenario.channel.n_tx != dims.n_tx or scenario.channel.n_users != dims.n_users:
            raise ValueError("scenario file does not match the configured dimensions")
        if scenario.channel.n_irs != dims.n_irs:
            raise ValueError("scenario file has a different surface size")
    else:
        scenario = generate_scenario(
            dims, cfg.layout, cfg.path_loss, cfg.rician, seed=_scenario_seed(seed)
        )

    block = SymbolBlock.random(dims.constellation, dims.n_users, dims.block_len, _rng(seed, 0, 1))
    p_total = db_to_linear(cfg.p_db)
    rng = _rng(seed, 0, 2)
    init = warm_start(scenario.channel, block, p_total, rng)
    design, trace = alternating_minimize(
        scenario.channel, block, p_total, init, cfg.solver, rng
    )

    smoothing = SmoothingConfig(cfg.solver.eta)
    if isinstance(dims.constellation, QamSpec):
        g = exact_objective_qam(scenario.channel, design, block)
        f = smoothed_objective_qam(scenario.channel, design, block, smoothing).value
    else:
        g = exact_objective_psk(
            scenario.channel, design.precode, design.theta, block, dims.constellation.order
        )
        f = smoothed_objective_psk(
            scenario.channel, design.precode, design.theta, block,
            dims.constellation.order, smoothing,
        ).value

    stamp = {"seed": seed, "config_sha256": digest, "package_version": __version__}
    design_path = args.out_design or cfg.output.design
    _write_json(
        design_path,
        {
            "format": "irsslp-design",
            "version": 1,
            **stamp,
            "precode": _complex_to_json(design.precode),
            "theta": _complex_to_json(design.theta),
            "spacing": None if design.spacing is None else design.spacing.tolist(),
            "exact_objective": g,
            "smoothed_objective": f,
        },
    )
    trace_path = args.out_trace or cfg.output.trace
    _write_json(
        trace_path,
        {
            "format": "irsslp-trace",
            "version": 1,
            **stamp,
            "objective_values": trace.objective_values,
            "apg_iterations": trace.apg_iterations,
            "stage_seconds": trace.stage_seconds,
            "n_outer": trace.n_outer,
            "converged": trace.converged,
            "eta_schedule": trace.eta_schedule,
        },
    )
    print(f"exact objective g = {g:.6e}")
    print(f"smoothed objective f = {f:.6e}")
    print(f"wrote {design_path} and {trace_path}")
    return 0


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(args) -> int:
    cfg, seed, digest = _effective_config(args)
    spec = config_to_sweep_spec(cfg)
    if seed != spec.seed:
        from dataclasses import replace

        spec = replace(spec, seed=seed)

    def progress(done, total):
        logger.info("realization %d/%d", done, total)

    result = ber_sweep(spec, threads=args.threads, progress=progress)

    csv_path = args.out_csv or cfg.output.csv
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        handle.write(records_to_csv(result.records))

    manifest_path = args.out_manifest or cfg.output.manifest
    _write_json(
        manifest_path,
        {
            "format": "irsslp-manifest",
            "version": 1,
            "command": "sweep",
            "seed": seed,
            "config_sha256": digest,
            "package_version": __version__,
            "config": config_to_dict(cfg),
            "threads": args.threads,
            "partial": result.partial,
            "completed_realizations": result.completed_realizations,
            "excluded_failures": result.failures,
            "csv": csv_path,
        },
    )
    print(f"wrote {csv_path} ({len(result.records)} records) and {manifest_path}")
    if result.partial:
        print("sweep was interrupted; outputs are partial", file=sys.stderr)
        return 130
    return 0


# ---------------------------------------------------------------------------
# trace


def cmd_trace(args) -> int:
    cfg, seed, digest = _effective_config(args)
    spec = config_to_sweep_spec(cfg)
    if seed != spec.seed:
        from dataclasses import replace

        spec = replace(spec, seed=seed)
    trace = convergence_trace(spec)
    out = args.out or cfg.output.trace
    _write_json(
        out,
        {
            "format": "irsslp-trace",
            "version": 1,
            "seed": seed,
            "config_sha256": digest,
            "package_version": __version__,
            "objective_values": trace.objective_values,
            "apg_iterations": trace.apg_iterations,
            "stage_seconds": trace.stage_seconds,
            "n_outer": trace.n_outer,
            "converged": trace.converged,
            "eta_schedule": trace.eta_schedule,
        },
    )
    values = trace.objective_values
    print(f"objective: start {values[0]:.6e}, end {values[-1]:.6e}, outer iterations {trace.n_outer}")
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# gen-scenario


def cmd_gen_scenario(args) -> int:
    cfg, seed, digest = _effective_config(args)
    scenario = generate_scenario(
        cfg.dims, cfg.layout, cfg.path_loss, cfg.rician, seed=_scenario_seed(seed)
    )
    out = args.out or cfg.output.scenario
    save_scenario(
        out,
        scenario,
        extra_meta={
            "master_seed": seed,
            "config_sha256": digest,
            "package_version": __version__,
        },
    )
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# check


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_instance(rng: np.random.Generator, qam: bool):
    from .model import ChannelSet, DesignVariables

    n, k, m, t = (int(rng.integers(1, 5)) for _ in range(4))
    cgauss = lambda *shape: (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    ch = ChannelSet.from_links(cgauss(m, n), cgauss(k, n), cgauss(k, m))
    spec = QamSpec(2) if qam else PskSpec(8)
    block = SymbolBlock.random(spec, k, t, rng)
    precode = cgauss(n, t)
    theta = np.exp(2j * np.pi * rng.uniform(size=m))
    spacing = rng.uniform(0.1, 1.0, size=2 * k) if qam else None
    design = DesignVariables(precode=precode, theta=theta, spacing=spacing)
    return ch, design, block


def _gradient_check(rng, n_instances, eta, qam, corrupt=False) -> float:
    worst = 0.0
    smoothing = SmoothingConfig(eta)
    for _ in range(n_instances):
        ch, design, block = _random_instance(rng, qam)
        if qam:
            ev = smoothed_objective_qam(ch, design, block, smoothing)
            blocks = [np.array(design.precode), np.array(design.spacing), np.array(design.theta)]

            def fn(bs):
                from .model import DesignVariables

                d = DesignVariables(precode=bs[0], theta=bs[2], spacing=bs[1])
                return smoothed_objective_qam(ch, d, block, smoothing).value

            analytic = [ev.grad_precode, ev.grad_spacing, ev.grad_theta]
        else:
            order = block.spec.order
            ev = smoothed_objective_psk(ch, design.precode, design.theta, block, order, smoothing)
            blocks = [np.array(design.precode), np.array(design.theta)]

            def fn(bs):
                return smoothed_objective_psk(ch, bs[0], bs[1], block, order, smoothing).value

            analytic = [ev.grad_precode, ev.grad_theta]
        numeric = finite_diff_gradient(fn, blocks)
        if corrupt:
            analytic = [g + 1e-3 for g in analytic]
        stack_a = np.concatenate([g.ravel() for g in analytic])
        stack_n = np.concatenate([g.ravel() for g in numeric])
        denom = max(np.linalg.norm(stack_n), 1e-300)
        worst = max(worst, float(np.linalg.norm(stack_a - stack_n) / denom))
    return worst


def _projection_check(rng, n_inputs=100, n_samples=100) -> bool:
    ok = True
    for _ in range(n_inputs):
        x = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
        p = 2.0
        px = project_power_ball(x, p)
        ok &= bool(np.array_equal(project_power_ball(px, p), px))
        d = rng.standard_normal(6)
        pd = project_nonnegative(d)
        ok &= bool(np.array_equal(project_nonnegative(pd), pd))
        th = 3.0 * (rng.standard_normal(5) + 1j * rng.standard_normal(5))
        pt = project_unit_modulus(th)
        ok &= bool(np.array_equal(project_unit_modulus(pt), pt))
        for _s in range(n_samples):
            y = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
            y = project_power_ball(y, p * (1 - 1e-9))
            ok &= np.linalg.norm(x - px) <= np.linalg.norm(x - y) + 1e-12
        if not ok:
            break
    return ok


def _sandwich_check(rng, n_instances=200) -> bool:
    for _ in range(n_instances):
        qam = bool(rng.integers(0, 2))
        ch, design, block = _random_instance(rng, qam)
        eta = float(rng.choice([0.01, 0.1, 1.0]))
        smoothing = SmoothingConfig(eta)
        if qam:
            from .objective import qam_margins

            g = exact_objective_qam(ch, design, block)
            f = smoothed_objective_qam(ch, design, block, smoothing).value
            _, masks = qam_margins(ch, design, block).stacked()
            n_terms = int(masks.sum())
        else:
            order = block.spec.order
            g = exact_objective_psk(ch, design.precode, design.theta, block, order)
            f = smoothed_objective_psk(
                ch, design.precode, design.theta, block, order, smoothing
            ).value
            n_terms = 2 * block.symbols.size
        if not (g - 1e-12 <= f <= g + eta * np.log(n_terms) + 1e-12):
            return False
    return True


def run_diagnostics(seed: int = 0, n_instances: int = 20, corrupt_gradient: bool = False):
    """Gradient, projection, and smoothing-gap checks on random instances."""
    checks = []
    worst = 0.0
    for eta, tol in ((0.1, 1e-5), (0.01, 1e-4)):
        for qam in (True, False):
            rng = np.random.default_rng(seed)
            err = _gradient_check(rng, n_instances, eta, qam, corrupt=corrupt_gradient)
            worst = max(worst, err)
            name = f"gradient[{'qam' if qam else 'psk'}, eta={eta}]"
            checks.append(CheckResult(name, err <= tol, f"max rel error {err:.3e} (tol {tol:.0e})"))
    rng = np.random.default_rng(seed + 1)
    checks.append(CheckResult("projections", _projection_check(rng), "idempotence and nearest-point sampling"))
    rng = np.random.default_rng(seed + 2)
    checks.append(CheckResult("smoothing-sandwich", _sandwich_check(rng), "g <= f <= g + eta log(terms)"))
    return checks, worst


def cmd_check(args) -> int:
    if args.config:
        _effective_config(args)  # validates the config file itself
    checks, worst = run_diagnostics(
        seed=args.seed if args.seed is not None else 0,
        n_instances=args.instances,
        corrupt_gradient=args.corrupt_gradient,
    )
    failed = 0
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"[{status}] {check.name}: {check.detail}")
        failed += 0 if check.passed else 1
    print(f"max gradient relative error observed: {worst:.3e}")
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 0 if failed == 0 else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irsslp",
        description="Joint symbol-level precoding and reflecting-surface design simulator",
    )
    parser.add_argument("--version", action="version", version=f"irsslp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="optimize one realization and save the design")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--scenario", help="pre-saved scenario npz to solve on")
    p_solve.add_argument("--seed", type=int)
    p_solve.add_argument("--out-design")
    p_solve.add_argument("--out-trace")
    p_solve.set_defaults(func=cmd_solve)

    p_sweep = sub.add_parser("sweep", help="Monte-Carlo BER sweep to CSV + manifest")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--seed", type=int)
    p_sweep.add_argument("--threads", type=int, default=1)
    p_sweep.add_argument("--out-csv")
    p_sweep.add_argument("--out-manifest")
    p_sweep.set_defaults(func=cmd_sweep)

    p_trace = sub.add_parser("trace", help="objective convergence trace of one solve")
    p_trace.add_argument("--config", required=True)
    p_trace.add_argument("--seed", type=int)
    p_trace.add_argument("--out")
    p_trace.set_defaults(func=cmd_trace)

    p_check = sub.add_parser("check", help="numerical diagnostics (gradients, projections)")
    p_check.add_argument("--config")
    p_check.add_argument("--seed", type=int)
    p_check.add_argument("--instances", type=int, default=20)
    p_check.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    p_check.set_defaults(func=cmd_check)

    p_gen = sub.add_parser("gen-scenario", help="draw and save one channel realization")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--seed", type=int)
    p_gen.add_argument("--out")
    p_gen.set_defaults(func=cmd_gen_scenario)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
