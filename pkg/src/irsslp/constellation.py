"""QAM/PSK constellation geometry, Gray bit labeling, detection, and error bounds.

QAM points live on the odd-integer grid {+-1, +-3, ..., +-(2B-1)} per axis
(4B^2 points total); PSK points are the L-th roots of unity.  Decision margins
measure the signed distance from a noiseless received point to the nearest
decision boundary: a positive margin means the point is detected correctly in
the absence of noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import erfc


def q_function(x):
    """Gaussian tail probability Q(x) = P(Z > x), Z ~ N(0, 1).

    Accepts scalars or arrays; computed as 0.5 * erfc(x / sqrt(2)).
    """
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def _gray_encode(index):
    return index ^ (index >> 1)


def _gray_decode(code, width: int):
    # Inverse of the reflected binary code via the doubling-shift identity.
    out = np.asarray(code).copy()
    shift = 1
    while shift < width:
        out = out ^ (out >> shift)
        shift *= 2
    return out


def _unpack_bits(codes, width: int) -> np.ndarray:
    codes = np.asarray(codes)
    shifts = np.arange(width - 1, -1, -1)
    return ((codes[..., None] >> shifts) & 1).astype(np.uint8)


def _pack_bits(bits) -> np.ndarray:
    bits = np.asarray(bits)
    width = bits.shape[-1]
    weights = 1 << np.arange(width - 1, -1, -1)
    return (bits.astype(np.int64) * weights).sum(axis=-1)


@dataclass(frozen=True)
class QamSpec:
    """Square QAM constellation with half inter-point spacing 1 per axis.

    The order parameter ``b_level`` gives a 4 * b_level^2 point constellation;
    per-axis amplitudes are the odd integers up to 2 * b_level - 1.  Bit labels
    use a reflected (Gray) code per axis, real-axis bits first, and require
    2 * b_level to be a power of two.
    """

    b_level: int

    def __post_init__(self):
        if not isinstance(self.b_level, (int, np.integer)) or self.b_level < 1:
            raise ValueError(f"b_level must be a positive integer, got {self.b_level!r}")

    @property
    def order(self) -> int:
        return 4 * self.b_level * self.b_level

    @property
    def peak_amplitude(self) -> int:
        """Largest per-axis coordinate, 2B - 1."""
        return 2 * self.b_level - 1

    @cached_property
    def axis_levels(self) -> np.ndarray:
        """The 2B odd-integer amplitudes in increasing order."""
        levels = 2 * np.arange(2 * self.b_level) - self.peak_amplitude
        levels.flags.writeable = False
        return levels

    @cached_property
    def points(self) -> np.ndarray:
        """All 4B^2 points; imaginary axis varies slowest."""
        re, im = np.meshgrid(self.axis_levels, self.axis_levels)
        pts = (re + 1j * im).reshape(-1)
        pts.flags.writeable = False
        return pts

    @property
    def bits_per_axis(self) -> int:
        n = 2 * self.b_level
        width = int(np.log2(n))
        if (1 << width) != n:
            raise ValueError(
                f"Gray labeling needs 2*b_level to be a power of two, got {n}"
            )
        return width

    @property
    def bits_per_symbol(self) -> int:
        return 2 * self.bits_per_axis

    def _axis_to_index(self, values) -> np.ndarray:
        values = np.asarray(values)
        idx = (values + self.peak_amplitude) / 2.0
        rounded = np.rint(idx)
        if not np.allclose(idx, rounded, atol=1e-9) or np.any(rounded < 0) or np.any(
            rounded >= 2 * self.b_level
        ):
            raise ValueError("coordinates are not valid constellation amplitudes")
        return rounded.astype(np.int64)

    def symbols_to_bits(self, symbols) -> np.ndarray:
        """Gray-encode symbols to bits, shape ``symbols.shape + (bits_per_symbol,)``."""
        symbols = np.asarray(symbols)
        k_re = self._axis_to_index(symbols.real)
        k_im = self._axis_to_index(symbols.imag)
        w = self.bits_per_axis
        bits_re = _unpack_bits(_gray_encode(k_re), w)
        bits_im = _unpack_bits(_gray_encode(k_im), w)
        return np.concatenate([bits_re, bits_im], axis=-1)

    def bits_to_symbols(self, bits) -> np.ndarray:
        bits = np.asarray(bits)
        w = self.bits_per_axis
        if bits.shape[-1] != 2 * w:
            raise ValueError(f"expected {2 * w} bits per symbol, got {bits.shape[-1]}")
        k_re = _gray_decode(_pack_bits(bits[..., :w]), w)
        k_im = _gray_decode(_pack_bits(bits[..., w:]), w)
        amp = lambda k: 2 * k - self.peak_amplitude
        return amp(k_re) + 1j * amp(k_im)

    def random_symbols(self, shape, rng: np.random.Generator) -> np.ndarray:
        return self.points[rng.integers(0, self.order, size=shape)]

    def validate_symbols(self, symbols) -> None:
        self._axis_to_index(np.asarray(symbols).real)
        self._axis_to_index(np.asarray(symbols).imag)


@dataclass(frozen=True)
class PskSpec:
    """L-ary PSK constellation e^(j 2 pi n / L), n = 0..L-1.

    Any order >= 2 is accepted for geometry and detection; Gray bit labeling
    additionally requires the order to be a power of two.
    """

    order: int

    def __post_init__(self):
        if not isinstance(self.order, (int, np.integer)) or self.order < 2:
            raise ValueError(f"PSK order must be an integer >= 2, got {self.order!r}")

    @cached_property
    def points(self) -> np.ndarray:
        pts = np.exp(2j * np.pi * np.arange(self.order) / self.order)
        pts.flags.writeable = False
        return pts

    @property
    def boundary_cot(self) -> float:
        """cot(pi / L); the decision wedge degenerates to a half-plane at L = 2."""
        if self.order == 2:
            return 0.0
        return 1.0 / np.tan(np.pi / self.order)

    @property
    def bits_per_symbol(self) -> int:
        width = int(np.log2(self.order))
        if (1 << width) != self.order:
            raise ValueError(f"Gray labeling needs a power-of-two order, got {self.order}")
        return width

    def _symbol_to_index(self, symbols) -> np.ndarray:
        symbols = np.asarray(symbols)
        idx = np.floor(np.angle(symbols) * self.order / (2 * np.pi) + 0.5).astype(np.int64)
        idx %= self.order
        if not np.allclose(self.points[idx], symbols, atol=1e-9):
            raise ValueError("entries are not valid PSK constellation points")
        return idx

    def symbols_to_bits(self, symbols) -> np.ndarray:
        idx = self._symbol_to_index(symbols)
        return _unpack_bits(_gray_encode(idx), self.bits_per_symbol)

    def bits_to_symbols(self, bits) -> np.ndarray:
        bits = np.asarray(bits)
        if bits.shape[-1] != self.bits_per_symbol:
            raise ValueError(f"expected {self.bits_per_symbol} bits per symbol")
        idx = _gray_decode(_pack_bits(bits), self.bits_per_symbol)
        return self.points[idx]

    def random_symbols(self, shape, rng: np.random.Generator) -> np.ndarray:
        return self.points[rng.integers(0, self.order, size=shape)]

    def validate_symbols(self, symbols) -> None:
        self._symbol_to_index(symbols)


@dataclass(frozen=True)
class QamMargins:
    """Per-(user, slot) decision margins and boundary masks for QAM.

    ``real_hi[i, t]`` is the headroom before the real part of the received
    point crosses the next decision boundary above it, ``real_lo`` the one
    below; likewise on the imaginary axis.  The masks are False where the
    intended coordinate sits at the constellation edge and no such boundary
    exists (top level for ``hi``, bottom level for ``lo``).
    """

    real_hi: np.ndarray
    real_lo: np.ndarray
    imag_hi: np.ndarray
    imag_lo: np.ndarray
    mask_real_hi: np.ndarray
    mask_real_lo: np.ndarray
    mask_imag_hi: np.ndarray
    mask_imag_lo: np.ndarray

    def stacked(self):
        """(margins, masks) stacked on a leading axis of size 4, fixed order."""
        margins = np.stack([self.real_hi, self.real_lo, self.imag_hi, self.imag_lo])
        masks = np.stack(
            [self.mask_real_hi, self.mask_real_lo, self.mask_imag_hi, self.mask_imag_lo]
        )
        return margins, masks


@dataclass(frozen=True)
class PskMargins:
    """Angular decision margins for PSK, scaled by 1/sin(pi/L).

    ``ccw`` guards the counterclockwise wedge boundary, ``cw`` the clockwise
    one; min(ccw, cw) is the usual safety margin of the received point inside
    its decision wedge.
    """

    ccw: np.ndarray
    cw: np.ndarray


def qam_margins_from_received(received, spacing, symbols, b_level: int) -> QamMargins:
    """Margins of noiseless received points against the scaled QAM grid.

    ``received`` is the K x T matrix of noiseless receive values, ``spacing``
    the length-2K vector of per-user half spacings (real parts first), and
    ``symbols`` the intended K x T constellation points.
    """
    received = np.asarray(received)
    symbols = np.asarray(symbols)
    spacing = np.asarray(spacing, dtype=float)
    n_users = received.shape[0]
    if spacing.shape != (2 * n_users,):
        raise ValueError(f"spacing must have length {2 * n_users}, got {spacing.shape}")
    d_re = spacing[:n_users][:, None]
    d_im = spacing[n_users:][:, None]
    peak = 2 * b_level - 1

    off_re = received.real - d_re * symbols.real
    off_im = received.imag - d_im * symbols.imag
    return QamMargins(
        real_hi=d_re - off_re,
        real_lo=d_re + off_re,
        imag_hi=d_im - off_im,
        imag_lo=d_im + off_im,
        mask_real_hi=symbols.real != peak,
        mask_real_lo=symbols.real != -peak,
        mask_imag_hi=symbols.imag != peak,
        mask_imag_lo=symbols.imag != -peak,
    )


def psk_margins_from_received(received, symbols, order: int) -> PskMargins:
    """Wedge margins of noiseless received points for L-ary PSK."""
    if order < 2:
        raise ValueError(f"PSK order must be >= 2, got {order}")
    spec = PskSpec(order)
    rotated = np.asarray(received) * np.conj(np.asarray(symbols))
    ct = spec.boundary_cot
    return PskMargins(
        ccw=rotated.real - ct * rotated.imag,
        cw=rotated.real + ct * rotated.imag,
    )


def sep_bound_qam(margins: QamMargins, sigma: float) -> np.ndarray:
    """Symbol-error probability upper bound per (user, slot), capped at 1.

    Each axis contributes the Q-function terms of its existing boundaries;
    the two-axis bound is twice the larger per-axis error probability.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    scale = np.sqrt(2.0) / sigma
    sep_real = (
        margins.mask_real_hi * q_function(scale * margins.real_hi)
        + margins.mask_real_lo * q_function(scale * margins.real_lo)
    )
    sep_imag = (
        margins.mask_imag_hi * q_function(scale * margins.imag_hi)
        + margins.mask_imag_lo * q_function(scale * margins.imag_lo)
    )
    return np.minimum(1.0, 2.0 * np.maximum(sep_real, sep_imag))


def qam_detect(y, d_real, d_imag, spec: QamSpec):
    """Per-axis nearest-amplitude detection of y under spacings (d_real, d_imag).

    Broadcasts over array inputs.  Boundary ties break toward the larger
    amplitude (a measure-zero event, fixed for determinism).
    """
    d_real = np.asarray(d_real, dtype=float)
    d_imag = np.asarray(d_imag, dtype=float)
    if np.any(d_real <= 0) or np.any(d_imag <= 0):
        raise ValueError("detection spacings must be positive")
    y = np.asarray(y)
    re = _nearest_amplitude(y.real / d_real, spec.b_level)
    im = _nearest_amplitude(y.imag / d_imag, spec.b_level)
    return re + 1j * im


def _nearest_amplitude(u, b_level: int):
    peak = 2 * b_level - 1
    # floor(x + 0.5) rounds half toward +inf, i.e. ties go to the upper level
    idx = np.floor((np.asarray(u) + peak) / 2.0 + 0.5)
    idx = np.clip(idx, 0, 2 * b_level - 1)
    return 2.0 * idx - peak


def psk_detect(y, spec: PskSpec):
    """Minimum-angle PSK detection; y = 0 maps to the index-0 point."""
    y = np.asarray(y)
    idx = np.floor(np.angle(y) * spec.order / (2 * np.pi) + 0.5).astype(np.int64)
    idx %= spec.order
    return spec.points[idx]
