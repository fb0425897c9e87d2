"""Worst-case margin objective, its log-sum-exp smoothing, and gradients.

The exact design objective is the largest negated decision margin over all
users, slots, and existing decision boundaries; driving it below zero makes
every noiseless receive point land in the correct decision region, and the
more negative it gets the smaller the worst-case symbol-error probability.
The smoothed surrogate replaces the max with eta * log(sum of exponentials),
which is tight to within eta * log(#terms).

Gradient convention for complex blocks: the real and imaginary parts are
treated as independent real coordinates and the two partials are repacked as
grad_re + 1j * grad_im.  Every consumer (the projected-gradient solvers and
the finite-difference oracle) uses the same convention.

The evaluation path is split into a per-block precomputation (symbol masks
and spacing coefficients, which the solvers reuse across thousands of calls)
and a lean per-point evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constellation import (
    PskSpec,
    QamSpec,
    psk_margins_from_received,
    qam_margins_from_received,
)
from .model import ChannelSet, DesignVariables, SymbolBlock, effective_channel_matrix


@dataclass(frozen=True)
class SmoothingConfig:
    """Smoothing parameter of the log-sum-exp surrogate."""

    eta: float = 0.01

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")


@dataclass(frozen=True)
class ObjectiveEval:
    """Smoothed objective value and its gradients (complex repacked form)."""

    value: float
    grad_precode: np.ndarray  # (N, T) complex
    grad_theta: np.ndarray  # (M,) complex
    grad_spacing: np.ndarray | None = None  # (2K,), QAM only


def smooth_max(values, masks, eta: float):
    """Stable masked log-sum-exp: eta * log(sum_masked exp(values / eta)).

    Returns the smoothed maximum and the masked softmax weights (zero exactly
    where the mask is False).  The largest exponent is factored out before
    summation so small eta cannot overflow.
    """
    values = np.asarray(values, dtype=float)
    scaled = values / eta
    if masks is not None:
        scaled = np.where(masks, scaled, -np.inf)
    top = scaled.max()
    if not np.isfinite(top):
        if top == -np.inf:
            raise ValueError("smooth_max needs at least one unmasked term")
        return float(top), np.zeros_like(scaled)
    shifted = np.exp(scaled - top)
    total = shifted.sum()
    value = eta * (top + np.log(total))
    return float(value), shifted / total


def qam_margins(ch: ChannelSet, design: DesignVariables, sym: SymbolBlock):
    """Decision margins of a QAM design over one channel realization."""
    if design.spacing is None:
        raise ValueError("QAM margins require a spacing vector in the design")
    if not isinstance(sym.spec, QamSpec):
        raise ValueError("symbol block is not QAM")
    heff = effective_channel_matrix(ch, design.theta)
    received = heff.conj().T @ design.precode
    return qam_margins_from_received(
        received, design.spacing, sym.symbols, sym.spec.b_level
    )


def psk_margins(ch: ChannelSet, precode, theta, sym: SymbolBlock, order: int):
    """Wedge margins of a PSK design over one channel realization."""
    heff = effective_channel_matrix(ch, theta)
    received = heff.conj().T @ np.asarray(precode)
    return psk_margins_from_received(received, sym.symbols, order)


def exact_objective_qam(ch: ChannelSet, design: DesignVariables, sym: SymbolBlock) -> float:
    """Largest masked negated margin (the exact minimax objective)."""
    margins, masks = qam_margins(ch, design, sym).stacked()
    return float(np.where(masks, -margins, -np.inf).max())


def exact_objective_psk(ch: ChannelSet, precode, theta, sym: SymbolBlock, order: int) -> float:
    m = psk_margins(ch, precode, theta, sym, order)
    return float(np.maximum(-m.ccw, -m.cw).max())


class QamTerms:
    """Per-block constants of the smoothed QAM objective.

    Everything here depends only on the intended symbols, the constellation
    level, and eta, so the solvers build it once and reuse it per evaluation.
    """

    def __init__(self, symbols, b_level: int, eta: float):
        symbols = np.asarray(symbols)
        peak = 2 * b_level - 1
        self.eta = float(eta)
        self.sym_re = symbols.real.copy()
        self.sym_im = symbols.imag.copy()
        self.n_users = symbols.shape[0]
        # term order: real-hi, real-lo, imag-hi, imag-lo
        self.masked_off = np.stack(
            [
                self.sym_re == peak,
                self.sym_re == -peak,
                self.sym_im == peak,
                self.sym_im == -peak,
            ]
        )
        self.coef_hi_re = 1.0 + self.sym_re
        self.coef_lo_re = 1.0 - self.sym_re
        self.coef_hi_im = 1.0 + self.sym_im
        self.coef_lo_im = 1.0 - self.sym_im

    def evaluate(self, received, spacing):
        """(value, kappa, grad_spacing) at the given receive points.

        ``kappa[i, t]`` is d(value)/d(received[i, t]) in the repacked complex
        convention; margins are affine in the receive points so every block
        gradient follows from kappa by a chain rule through linear maps.
        """
        k = self.n_users
        d_re = spacing[:k, None]
        d_im = spacing[k:, None]
        off_re = received.real - d_re * self.sym_re
        off_im = received.imag - d_im * self.sym_im

        # negated margins scaled by 1/eta, masked terms at -inf
        vals = np.empty((4,) + off_re.shape)
        np.subtract(off_re, d_re, out=vals[0])
        np.negative(off_re, out=vals[1])
        vals[1] -= d_re
        np.subtract(off_im, d_im, out=vals[2])
        np.negative(off_im, out=vals[3])
        vals[3] -= d_im
        vals *= 1.0 / self.eta
        vals[self.masked_off] = -np.inf

        top = vals.max()
        vals -= top
        w = np.exp(vals, out=vals)
        total = w.sum()
        value = self.eta * (top + np.log(total))
        w *= 1.0 / total

        kappa = (w[0] - w[1]) + 1j * (w[2] - w[3])
        grad_spacing = np.concatenate(
            [
                -(w[0] * self.coef_hi_re + w[1] * self.coef_lo_re).sum(axis=1),
                -(w[2] * self.coef_hi_im + w[3] * self.coef_lo_im).sum(axis=1),
            ]
        )
        return float(value), kappa, grad_spacing


class PskTerms:
    """Per-block constants of the smoothed PSK objective."""

    def __init__(self, symbols, order: int, eta: float):
        self.eta = float(eta)
        self.sym = np.asarray(symbols).copy()
        self.sym_conj = self.sym.conj()
        self.cot = PskSpec(order).boundary_cot

    def evaluate(self, received):
        rotated = received * self.sym_conj
        along = rotated.real
        across = self.cot * rotated.imag
        vals = np.empty((2,) + along.shape)
        np.subtract(across, along, out=vals[0])  # -ccw margin
        np.negative(across, out=vals[1])
        vals[1] -= along  # -cw margin
        vals *= 1.0 / self.eta

        top = vals.max()
        vals -= top
        w = np.exp(vals, out=vals)
        total = w.sum()
        value = self.eta * (top + np.log(total))
        w *= 1.0 / total

        kappa = -((w[0] + w[1]) + 1j * self.cot * (w[1] - w[0])) * self.sym
        return float(value), kappa


def _grad_theta_from_kappa(ch: ChannelSet, precode, kappa) -> np.ndarray:
    # sum over (i, t) of conj(kappa) * R_i^H x_t, assembled as einsum
    slot_mix = np.asarray(precode) @ kappa.conj().T  # (N, K)
    return np.einsum("knm,nk->m", ch.reflect.conj(), slot_mix)


def smoothed_objective_qam(
    ch: ChannelSet, design: DesignVariables, sym: SymbolBlock, cfg: SmoothingConfig
) -> ObjectiveEval:
    """Smoothed QAM objective with gradients for all three design blocks."""
    if design.spacing is None:
        raise ValueError("QAM objective requires a spacing vector in the design")
    heff = effective_channel_matrix(ch, design.theta)
    received = heff.conj().T @ design.precode
    terms = QamTerms(sym.symbols, sym.spec.b_level, cfg.eta)
    value, kappa, grad_spacing = terms.evaluate(received, np.asarray(design.spacing))
    return ObjectiveEval(
        value=value,
        grad_precode=heff @ kappa,
        grad_theta=_grad_theta_from_kappa(ch, design.precode, kappa),
        grad_spacing=grad_spacing,
    )


def smoothed_objective_psk(
    ch: ChannelSet, precode, theta, sym: SymbolBlock, order: int, cfg: SmoothingConfig
) -> ObjectiveEval:
    """Smoothed PSK objective with gradients for the precoder and theta."""
    precode = np.asarray(precode)
    heff = effective_channel_matrix(ch, theta)
    received = heff.conj().T @ precode
    terms = PskTerms(sym.symbols, order, cfg.eta)
    value, kappa = terms.evaluate(received)
    return ObjectiveEval(
        value=value,
        grad_precode=heff @ kappa,
        grad_theta=_grad_theta_from_kappa(ch, precode, kappa),
        grad_spacing=None,
    )


def finite_diff_gradient(fn, blocks, step: float = 1e-6):
    """Central finite differences of ``fn`` over a list of arrays.

    Real and imaginary parts of complex blocks are perturbed as independent
    real coordinates; the returned arrays repack the two partials in the same
    complex convention as the analytic gradients.
    """
    blocks = [np.array(b) for b in blocks]

    def eval_at(k, idx, delta):
        probe = [b.copy() for b in blocks]
        probe[k][idx] = probe[k][idx] + delta
        return fn(probe)

    grads = []
    for k, block in enumerate(blocks):
        grad = np.zeros_like(block)
        for idx in np.ndindex(block.shape):
            diff = eval_at(k, idx, step) - eval_at(k, idx, -step)
            deriv = diff / (2.0 * step)
            if np.iscomplexobj(block):
                diff_im = eval_at(k, idx, 1j * step) - eval_at(k, idx, -1j * step)
                deriv = deriv + 1j * (diff_im / (2.0 * step))
            grad[idx] = deriv
        grads.append(grad)
    return grads
