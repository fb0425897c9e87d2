"""Declarative run configuration: JSON schema, strict loading, hashing.

A config file is a JSON object with the sections below; unknown keys anywhere
are rejected.  Decibel values live only in the config; they are converted to
linear units exactly once when the experiment objects are built.

Sections (all optional except dims, sweep, seed):
  dims        n_tx, n_users, n_irs, block_len, constellation {kind, b_level|order}
  geometry    bs_pos, irs_pos, user_center, user_radius
  path_loss   c0_db, alpha_bs_irs, alpha_irs_user, alpha_bs_user
  rician      beta_bs_irs, beta_irs_user, beta_bs_user
  power       p_db
  solver      eta, max_outer, outer_tol, apg_max_iter, apg_tol,
              line_search {initial_step_inverse, shrink, max_backtracks},
              eta_continuation
  sweep       noise_powers_db, realizations, trials, schemes
  output      csv, manifest, design, trace, scenario
  seed        integer master seed
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .channels import PathLossParams, RicianParams, SceneLayout
from .constellation import PskSpec, QamSpec
from .model import SystemDims
from .optimizer import LineSearchConfig, OuterConfig
from .sim import VALID_SCHEMES, SweepSpec


@dataclass(frozen=True)
class SweepSettings:
    noise_powers_db: tuple
    realizations: int
    trials: int
    schemes: tuple = VALID_SCHEMES


@dataclass(frozen=True)
class OutputPaths:
    csv: str = "results.csv"
    manifest: str = "manifest.json"
    design: str = "design.json"
    trace: str = "trace.json"
    scenario: str = "scenario.npz"


@dataclass(frozen=True)
class RunConfig:
    dims: SystemDims
    sweep: SweepSettings
    seed: int
    layout: SceneLayout = field(default_factory=SceneLayout)
    path_loss: PathLossParams = field(default_factory=PathLossParams)
    rician: RicianParams = field(default_factory=RicianParams)
    p_db: float = 20.0
    solver: OuterConfig = field(default_factory=OuterConfig)
    output: OutputPaths = field(default_factory=OutputPaths)


def _take(section: dict, context: str, required=(), optional=()):
    """Pop known keys from a section dict, rejecting anything left over."""
    if not isinstance(section, dict):
        raise ValueError(f"{context} must be a JSON object")
    section = dict(section)
    out = {}
    for key in required:
        if key not in section:
            raise ValueError(f"{context} is missing required key {key!r}")
        out[key] = section.pop(key)
    for key in optional:
        if key in section:
            out[key] = section.pop(key)
    if section:
        raise ValueError(f"unknown keys in {context}: {sorted(section)}")
    return out


def _constellation_from_dict(data: dict):
    kind = _take(data, "dims.constellation", required=("kind",), optional=("b_level", "order"))
    if kind["kind"] == "qam":
        if "b_level" not in kind:
            raise ValueError("qam constellation needs b_level")
        return QamSpec(int(kind["b_level"]))
    if kind["kind"] == "psk":
        if "order" not in kind:
            raise ValueError("psk constellation needs order")
        return PskSpec(int(kind["order"]))
    raise ValueError(f"unknown constellation kind {kind['kind']!r}")


def config_from_dict(data: dict) -> RunConfig:
    top = _take(
        data,
        "config",
        required=("dims", "sweep", "seed"),
        optional=("geometry", "path_loss", "rician", "power", "solver", "output"),
    )

    d = _take(
        top["dims"], "dims",
        required=("n_tx", "n_users", "n_irs", "block_len", "constellation"),
    )
    dims = SystemDims(
        n_tx=int(d["n_tx"]),
        n_users=int(d["n_users"]),
        n_irs=int(d["n_irs"]),
        block_len=int(d["block_len"]),
        constellation=_constellation_from_dict(d["constellation"]),
    )

    s = _take(
        top["sweep"], "sweep",
        required=("noise_powers_db", "realizations", "trials"),
        optional=("schemes",),
    )
    sweep = SweepSettings(
        noise_powers_db=tuple(float(v) for v in s["noise_powers_db"]),
        realizations=int(s["realizations"]),
        trials=int(s["trials"]),
        schemes=tuple(s.get("schemes", VALID_SCHEMES)),
    )

    layout = SceneLayout()
    if "geometry" in top:
        g = _take(
            top["geometry"], "geometry",
            optional=("bs_pos", "irs_pos", "user_center", "user_radius"),
        )
        layout = SceneLayout(
            bs_pos=tuple(float(v) for v in g.get("bs_pos", layout.bs_pos)),
            irs_pos=tuple(float(v) for v in g.get("irs_pos", layout.irs_pos)),
            user_center=tuple(float(v) for v in g.get("user_center", layout.user_center)),
            user_radius=float(g.get("user_radius", layout.user_radius)),
        )

    pl = PathLossParams()
    if "path_loss" in top:
        p = _take(
            top["path_loss"], "path_loss",
            optional=("c0_db", "alpha_bs_irs", "alpha_irs_user", "alpha_bs_user"),
        )
        pl = PathLossParams(
            c0_db=float(p.get("c0_db", pl.c0_db)),
            alpha_bs_irs=float(p.get("alpha_bs_irs", pl.alpha_bs_irs)),
            alpha_irs_user=float(p.get("alpha_irs_user", pl.alpha_irs_user)),
            alpha_bs_user=float(p.get("alpha_bs_user", pl.alpha_bs_user)),
        )

    rc = RicianParams()
    if "rician" in top:
        r = _take(
            top["rician"], "rician",
            optional=("beta_bs_irs", "beta_irs_user", "beta_bs_user"),
        )
        rc = RicianParams(
            beta_bs_irs=float(r.get("beta_bs_irs", rc.beta_bs_irs)),
            beta_irs_user=float(r.get("beta_irs_user", rc.beta_irs_user)),
            beta_bs_user=float(r.get("beta_bs_user", rc.beta_bs_user)),
        )

    p_db = 20.0
    if "power" in top:
        p_db = float(_take(top["power"], "power", required=("p_db",))["p_db"])

    solver = OuterConfig()
    if "solver" in top:
        v = _take(
            top["solver"], "solver",
            optional=(
                "eta", "max_outer", "outer_tol", "apg_max_iter", "apg_tol",
                "line_search", "eta_continuation",
            ),
        )
        ls = LineSearchConfig()
        if "line_search" in v:
            lsv = _take(
                v["line_search"], "solver.line_search",
                optional=("initial_step_inverse", "shrink", "max_backtracks"),
            )
            raw = lsv.get("initial_step_inverse", None)
            ls = LineSearchConfig(
                initial_step_inverse=None if raw is None else float(raw),
                shrink=float(lsv.get("shrink", ls.shrink)),
                max_backtracks=int(lsv.get("max_backtracks", ls.max_backtracks)),
            )
        solver = OuterConfig(
            max_outer=int(v.get("max_outer", solver.max_outer)),
            outer_tol=float(v.get("outer_tol", solver.outer_tol)),
            apg_max_iter=int(v.get("apg_max_iter", solver.apg_max_iter)),
            apg_tol=float(v.get("apg_tol", solver.apg_tol)),
            eta=float(v.get("eta", solver.eta)),
            line_search=ls,
            eta_continuation=tuple(float(e) for e in v.get("eta_continuation", ())),
        )

    output = OutputPaths()
    if "output" in top:
        o = _take(
            top["output"], "output",
            optional=("csv", "manifest", "design", "trace", "scenario"),
        )
        output = OutputPaths(
            csv=str(o.get("csv", output.csv)),
            manifest=str(o.get("manifest", output.manifest)),
            design=str(o.get("design", output.design)),
            trace=str(o.get("trace", output.trace)),
            scenario=str(o.get("scenario", output.scenario)),
        )

    return RunConfig(
        dims=dims,
        sweep=sweep,
        seed=int(top["seed"]),
        layout=layout,
        path_loss=pl,
        rician=rc,
        p_db=p_db,
        solver=solver,
        output=output,
    )


def config_to_dict(cfg: RunConfig) -> dict:
    spec = cfg.dims.constellation
    if isinstance(spec, QamSpec):
        constellation = {"kind": "qam", "b_level": spec.b_level}
    else:
        constellation = {"kind": "psk", "order": spec.order}
    ls = cfg.solver.line_search
    return {
        "dims": {
            "n_tx": cfg.dims.n_tx,
            "n_users": cfg.dims.n_users,
            "n_irs": cfg.dims.n_irs,
            "block_len": cfg.dims.block_len,
            "constellation": constellation,
        },
        "geometry": {
            "bs_pos": list(cfg.layout.bs_pos),
            "irs_pos": list(cfg.layout.irs_pos),
            "user_center": list(cfg.layout.user_center),
            "user_radius": cfg.layout.user_radius,
        },
        "path_loss": {
            "c0_db": cfg.path_loss.c0_db,
            "alpha_bs_irs": cfg.path_loss.alpha_bs_irs,
            "alpha_irs_user": cfg.path_loss.alpha_irs_user,
            "alpha_bs_user": cfg.path_loss.alpha_bs_user,
        },
        "rician": {
            "beta_bs_irs": cfg.rician.beta_bs_irs,
            "beta_irs_user": cfg.rician.beta_irs_user,
            "beta_bs_user": cfg.rician.beta_bs_user,
        },
        "power": {"p_db": cfg.p_db},
        "solver": {
            "eta": cfg.solver.eta,
            "max_outer": cfg.solver.max_outer,
            "outer_tol": cfg.solver.outer_tol,
            "apg_max_iter": cfg.solver.apg_max_iter,
            "apg_tol": cfg.solver.apg_tol,
            "line_search": {
                "initial_step_inverse": ls.initial_step_inverse,
                "shrink": ls.shrink,
                "max_backtracks": ls.max_backtracks,
            },
            "eta_continuation": list(cfg.solver.eta_continuation),
        },
        "sweep": {
            "noise_powers_db": list(cfg.sweep.noise_powers_db),
            "realizations": cfg.sweep.realizations,
            "trials": cfg.sweep.trials,
            "schemes": list(cfg.sweep.schemes),
        },
        "output": {
            "csv": cfg.output.csv,
            "manifest": cfg.output.manifest,
            "design": cfg.output.design,
            "trace": cfg.output.trace,
            "scenario": cfg.output.scenario,
        },
        "seed": cfg.seed,
    }


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as handle:
        return config_from_dict(json.load(handle))


def save_config(path, cfg: RunConfig) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(config_to_dict(cfg), handle, indent=2, sort_keys=True)
        handle.write("\n")


def config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def config_to_sweep_spec(cfg: RunConfig) -> SweepSpec:
    return SweepSpec(
        dims=cfg.dims,
        noise_powers_db=cfg.sweep.noise_powers_db,
        n_realizations=cfg.sweep.realizations,
        n_noise_trials=cfg.sweep.trials,
        schemes=cfg.sweep.schemes,
        p_db=cfg.p_db,
        layout=cfg.layout,
        path_loss=cfg.path_loss,
        rician=cfg.rician,
        solver=cfg.solver,
        seed=cfg.seed,
    )
