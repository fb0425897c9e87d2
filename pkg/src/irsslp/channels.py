"""Scenario geometry, path loss, and Rician channel synthesis.

The default layout puts the base station at the origin, the reflecting
surface 50 m away on the x-axis, and the users on a circle of radius 10 m
centered at (40, 20).  Every link is a normalized Rician matrix scaled by the
amplitude path-loss factor sqrt(L(d)) with L(d) = 10^(c0_db / 10) * d^-alpha.

Randomness is split into named per-link streams derived from one seed, so
adding users or surface elements does not perturb draws of existing blocks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import ChannelSet, SystemDims

SCENARIO_FORMAT = "irsslp-scenario"
SCENARIO_VERSION = 1


@dataclass(frozen=True)
class SceneLayout:
    """Fixed node placement; user positions are drawn per realization."""

    bs_pos: tuple = (0.0, 0.0)
    irs_pos: tuple = (50.0, 0.0)
    user_center: tuple = (40.0, 20.0)
    user_radius: float = 10.0

    def __post_init__(self):
        if self.user_radius <= 0:
            raise ValueError("user_radius must be positive")


@dataclass(frozen=True)
class Geometry:
    """A realized layout including the drawn user positions."""

    bs_pos: np.ndarray
    irs_pos: np.ndarray
    user_center: np.ndarray
    user_radius: float
    user_positions: np.ndarray  # (K, 2)

    def __post_init__(self):
        for name in ("bs_pos", "irs_pos", "user_center", "user_positions"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.user_radius <= 0:
            raise ValueError("user_radius must be positive")
        dist = np.linalg.norm(self.user_positions - self.user_center, axis=1)
        if not np.allclose(dist, self.user_radius, atol=1e-9):
            raise ValueError("user positions are not on the stated circle")


@dataclass(frozen=True)
class PathLossParams:
    """Reference gain at 1 m (dB, signed) and per-link distance exponents."""

    c0_db: float = 20.0
    alpha_bs_irs: float = 2.2
    alpha_irs_user: float = 2.8
    alpha_bs_user: float = 2.8

    def __post_init__(self):
        if min(self.alpha_bs_irs, self.alpha_irs_user, self.alpha_bs_user) <= 0:
            raise ValueError("path-loss exponents must be positive")


@dataclass(frozen=True)
class RicianParams:
    """Line-of-sight mixing weights per link, each in [0, 1]."""

    beta_bs_irs: float = 0.6
    beta_irs_user: float = 0.0
    beta_bs_user: float = 0.0

    def __post_init__(self):
        for b in (self.beta_bs_irs, self.beta_irs_user, self.beta_bs_user):
            if not 0.0 <= b <= 1.0:
                raise ValueError("Rician factors must lie in [0, 1]")


@dataclass(frozen=True)
class Scenario:
    """One generated channel realization plus the geometry that produced it."""

    channel: ChannelSet
    geometry: Geometry
    seed: int


def path_loss(dist: float, c0_db: float, alpha: float) -> float:
    """Linear power gain of a link of length ``dist`` meters."""
    if dist <= 0:
        raise ValueError(f"distance must be positive, got {dist}")
    return 10.0 ** (c0_db / 10.0) * dist ** (-alpha)


def rician_matrix(rows: int, cols: int, beta: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-power Rician fading matrix beta * LOS + sqrt(1 - beta^2) * NLOS.

    The deterministic component is the constant matrix (1 + 1j) / sqrt(2);
    the scattered component is i.i.d. standard circular complex Gaussian.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    los = (1.0 + 1.0j) / np.sqrt(2.0) * np.ones((rows, cols))
    nlos = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2.0)
    return beta * los + np.sqrt(1.0 - beta**2) * nlos


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def place_users(layout: SceneLayout, n_users: int, rng: np.random.Generator) -> np.ndarray:
    angles = rng.uniform(0.0, 2.0 * np.pi, size=n_users)
    center = np.asarray(layout.user_center, dtype=float)
    offsets = layout.user_radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return center + offsets


def generate_scenario(
    dims: SystemDims,
    layout: SceneLayout | None = None,
    pl: PathLossParams | None = None,
    rc: RicianParams | None = None,
    seed: int = 0,
) -> Scenario:
    """Draw user positions and all channel links for one realization."""
    layout = layout or SceneLayout()
    pl = pl or PathLossParams()
    rc = rc or RicianParams()
    n, k, m = dims.n_tx, dims.n_users, dims.n_irs

    positions = place_users(layout, k, _stream(seed, 0))
    geometry = Geometry(
        bs_pos=np.asarray(layout.bs_pos, dtype=float),
        irs_pos=np.asarray(layout.irs_pos, dtype=float),
        user_center=np.asarray(layout.user_center, dtype=float),
        user_radius=layout.user_radius,
        user_positions=positions,
    )

    d_bs_irs = float(np.linalg.norm(geometry.irs_pos - geometry.bs_pos))
    if m > 0:
        gain = np.sqrt(path_loss(d_bs_irs, pl.c0_db, pl.alpha_bs_irs))
        bs_irs = gain * rician_matrix(m, n, rc.beta_bs_irs, _stream(seed, 1))
    else:
        bs_irs = np.zeros((0, n), dtype=complex)

    irs_user = np.zeros((k, m), dtype=complex)
    direct = np.zeros((k, n), dtype=complex)
    for i in range(k):
        if m > 0:
            d_iu = float(np.linalg.norm(positions[i] - geometry.irs_pos))
            gain = np.sqrt(path_loss(d_iu, pl.c0_db, pl.alpha_irs_user))
            irs_user[i] = gain * rician_matrix(m, 1, rc.beta_irs_user, _stream(seed, 2, i))[:, 0]
        d_bu = float(np.linalg.norm(positions[i] - geometry.bs_pos))
        gain = np.sqrt(path_loss(d_bu, pl.c0_db, pl.alpha_bs_user))
        direct[i] = gain * rician_matrix(n, 1, rc.beta_bs_user, _stream(seed, 3, i))[:, 0]

    channel = ChannelSet.from_links(bs_irs, direct, irs_user)
    return Scenario(channel=channel, geometry=geometry, seed=seed)


def save_scenario(path, scenario: Scenario, extra_meta: dict | None = None) -> None:
    """Persist a scenario as an npz archive with a JSON metadata record."""
    meta = {
        "format": SCENARIO_FORMAT,
        "version": SCENARIO_VERSION,
        "seed": scenario.seed,
        "bs_pos": list(scenario.geometry.bs_pos),
        "irs_pos": list(scenario.geometry.irs_pos),
        "user_center": list(scenario.geometry.user_center),
        "user_radius": scenario.geometry.user_radius,
    }
    if extra_meta:
        meta.update(extra_meta)
    np.savez(
        path,
        bs_irs=scenario.channel.bs_irs,
        direct=scenario.channel.direct,
        irs_user=scenario.channel.irs_user,
        user_positions=scenario.geometry.user_positions,
        meta=np.array(json.dumps(meta, sort_keys=True)),
    )


def load_scenario(path) -> tuple[Scenario, dict]:
    """Load a scenario saved by :func:`save_scenario`; returns (scenario, meta)."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != SCENARIO_FORMAT:
            raise ValueError(f"{path} is not a scenario file")
        channel = ChannelSet.from_links(data["bs_irs"], data["direct"], data["irs_user"])
        geometry = Geometry(
            bs_pos=np.asarray(meta["bs_pos"]),
            irs_pos=np.asarray(meta["irs_pos"]),
            user_center=np.asarray(meta["user_center"]),
            user_radius=float(meta["user_radius"]),
            user_positions=data["user_positions"],
        )
    return Scenario(channel=channel, geometry=geometry, seed=int(meta["seed"])), meta
