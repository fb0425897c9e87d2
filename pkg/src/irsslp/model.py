"""Core domain types and the received-signal model.

A base station with N antennas serves K single-antenna users over T symbol
slots, optionally assisted by a passive reflecting surface with M elements.
The effective downlink channel of user i is H_i(theta) = R_i theta + h_i,
where h_i is the direct channel, R_i the precomputed per-user reflection
matrix, and theta the surface coefficient vector; the noiseless receive value
at slot t is H_i(theta)^H x_t.

All types here are immutable after construction (arrays are marked read-only)
and safe to share across concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constellation import PskSpec, QamSpec


def _frozen(arr, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class SystemDims:
    """Problem sizes: antennas, users, surface elements, slots, constellation."""

    n_tx: int
    n_users: int
    n_irs: int
    block_len: int
    constellation: QamSpec | PskSpec

    def __post_init__(self):
        for name in ("n_tx", "n_users", "block_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_irs < 0:
            raise ValueError("n_irs must be >= 0")
        if not isinstance(self.constellation, (QamSpec, PskSpec)):
            raise ValueError("constellation must be a QamSpec or PskSpec")


@dataclass(frozen=True)
class PowerBudget:
    """Transmit power cap and receiver noise variance, both in linear units."""

    p_total: float
    noise_var: float

    def __post_init__(self):
        if self.p_total <= 0:
            raise ValueError("p_total must be positive")
        if self.noise_var <= 0:
            raise ValueError("noise_var must be positive")


@dataclass(frozen=True)
class ChannelSet:
    """One channel realization: BS-surface, direct, and surface-user links.

    ``reflect[i] = bs_irs^H Diag(irs_user[i])`` is cached at construction so
    the effective channel is an affine map of theta.  Build instances through
    :meth:`from_links`.
    """

    bs_irs: np.ndarray  # (M, N)
    direct: np.ndarray  # (K, N)
    irs_user: np.ndarray  # (K, M)
    reflect: np.ndarray = field(repr=False)  # (K, N, M)

    @classmethod
    def from_links(cls, bs_irs, direct, irs_user) -> "ChannelSet":
        bs_irs = _frozen(bs_irs, complex)
        direct = _frozen(direct, complex)
        irs_user = _frozen(irs_user, complex)
        if bs_irs.ndim != 2 or direct.ndim != 2 or irs_user.ndim != 2:
            raise ValueError("channel arrays must be 2-D")
        m, n = bs_irs.shape
        k = direct.shape[0]
        if direct.shape != (k, n):
            raise ValueError(f"direct must be (K, {n}), got {direct.shape}")
        if irs_user.shape != (k, m):
            raise ValueError(f"irs_user must be ({k}, {m}), got {irs_user.shape}")
        reflect = bs_irs.conj().T[None, :, :] * irs_user[:, None, :]
        return cls(bs_irs, direct, irs_user, _frozen(reflect, complex))

    @property
    def n_tx(self) -> int:
        return self.bs_irs.shape[1]

    @property
    def n_users(self) -> int:
        return self.direct.shape[0]

    @property
    def n_irs(self) -> int:
        return self.bs_irs.shape[0]

    def without_irs(self) -> "ChannelSet":
        """The same realization with the reflecting surface removed (M = 0)."""
        return ChannelSet.from_links(
            self.bs_irs[:0], self.direct, self.irs_user[:, :0]
        )


@dataclass(frozen=True)
class DesignVariables:
    """A transmit design: precoding block, QAM spacings, surface coefficients.

    ``spacing`` stacks the K real-axis half spacings followed by the K
    imaginary-axis ones; it is None for PSK designs.
    """

    precode: np.ndarray  # (N, T)
    theta: np.ndarray  # (M,)
    spacing: np.ndarray | None = None  # (2K,) for QAM

    def __post_init__(self):
        object.__setattr__(self, "precode", _frozen(self.precode, complex))
        object.__setattr__(self, "theta", _frozen(self.theta, complex))
        if self.spacing is not None:
            object.__setattr__(self, "spacing", _frozen(self.spacing, float))

    @property
    def spacing_real(self) -> np.ndarray:
        k = self.spacing.shape[0] // 2
        return self.spacing[:k]

    @property
    def spacing_imag(self) -> np.ndarray:
        k = self.spacing.shape[0] // 2
        return self.spacing[k:]


@dataclass(frozen=True)
class SymbolBlock:
    """Intended constellation symbols per user per slot, with Gray bit labels.

    ``bits`` has shape (K, T, bits_per_symbol); it is None when the
    constellation order does not admit a binary labeling.
    """

    spec: QamSpec | PskSpec
    symbols: np.ndarray  # (K, T)
    bits: np.ndarray | None

    @classmethod
    def from_symbols(cls, spec, symbols) -> "SymbolBlock":
        symbols = _frozen(symbols, complex)
        if symbols.ndim != 2:
            raise ValueError("symbols must be a (K, T) matrix")
        spec.validate_symbols(symbols)
        try:
            bits = _frozen(spec.symbols_to_bits(symbols), np.uint8)
        except ValueError:
            bits = None
        return cls(spec, symbols, bits)

    @classmethod
    def random(cls, spec, n_users: int, block_len: int, rng: np.random.Generator):
        return cls.from_symbols(spec, spec.random_symbols((n_users, block_len), rng))

    @property
    def n_users(self) -> int:
        return self.symbols.shape[0]

    @property
    def block_len(self) -> int:
        return self.symbols.shape[1]


def effective_channel(ch: ChannelSet, theta, user: int) -> np.ndarray:
    """Effective downlink channel of one user, R_user theta + direct[user]."""
    theta = np.asarray(theta)
    if theta.shape != (ch.n_irs,):
        raise ValueError(f"theta must have length {ch.n_irs}, got {theta.shape}")
    if not 0 <= user < ch.n_users:
        raise ValueError(f"user index {user} out of range [0, {ch.n_users})")
    return ch.reflect[user] @ theta + ch.direct[user]


def effective_channel_matrix(ch: ChannelSet, theta) -> np.ndarray:
    """All effective channels stacked as columns, shape (N, K)."""
    theta = np.asarray(theta)
    if theta.shape != (ch.n_irs,):
        raise ValueError(f"theta must have length {ch.n_irs}, got {theta.shape}")
    return (ch.reflect @ theta + ch.direct).T


def received_signal(ch: ChannelSet, theta, precode, user: int, slot: int, noise) -> complex:
    """Received sample of one user at one slot for a given noise draw."""
    precode = np.asarray(precode)
    h = effective_channel(ch, theta, user)
    if precode.shape[0] != h.shape[0]:
        raise ValueError(
            f"precode has {precode.shape[0]} rows, expected {h.shape[0]}"
        )
    return complex(np.vdot(h, precode[:, slot]) + noise)
