"""Exact propagation of fundamental solutions through step strings.

On an interval where the anti-derivative W is constant the first-order system
for ``(f, f^[1])`` has a nilpotent, trace-free generator, so the transfer
matrix is ``I + len*A`` with determinant exactly 1, and its inverse is
``I - len*A``.  Crossing an atom of the measure leaves ``f`` unchanged and
shifts the quasi-derivative.  Everything here works in ordinary complex
arithmetic, vectorized over the spectral parameter, or in truncated-series
(jet) arithmetic; no quadrature or ODE stepping is involved.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .jets import Jet
from .model import ScalingParams, StringModel, require_valid

__all__ = [
    "interval_transfer",
    "mass_jump",
    "fundamental_system",
    "fundamental_jet",
    "closed_form_jets",
    "ClosedFormJets",
    "rescale_weyl",
    "unscale_weyl",
]


def _check_finite(*vals) -> None:
    for v in vals:
        if not np.all(np.isfinite(np.atleast_1d(v))):
            raise ValueError("non-finite input")


def interval_transfer(z: complex, w: float, length: float) -> np.ndarray:
    """Transfer matrix across an interval of given length where W == w.

    ``I + length * [[-z w, 1], [-z^2 w^2, z w]]``; the generator is nilpotent,
    so the determinant is exactly 1 and the inverse is ``I - length * A``.
    """
    _check_finite(z, w, length)
    if length < 0:
        raise ValueError("interval length must be >= 0")
    zw = z * w
    return np.array([[1.0 - length * zw, length],
                     [-length * zw * zw, 1.0 + length * zw]], dtype=complex)


def mass_jump(z: complex, m: float) -> np.ndarray:
    """Jump matrix across an atom of mass m: f unchanged, f^[1] shifted by -z^2 m f."""
    _check_finite(z, m)
    return np.array([[1.0, 0.0], [-z * z * m, 1.0]], dtype=complex)


# --- compiled factor sequence -----------------------------------------------
#
# kind 0: interval (param1 = w, param2 = length)
# kind 1: atom jump (param1 = mass)

@dataclass(frozen=True)
class _Factor:
    kind: int
    p1: float
    p2: float = 0.0


@lru_cache(maxsize=256)
def _compiled(model: StringModel) -> tuple[_Factor, ...]:
    """Ordered factor list from 0 to R; atoms apply after the interval to
    their left (left-continuity), an atom at 0 right after initialization."""
    bps = model.step.breakpoints
    vals = model.step.values
    atom_at = dict(zip(model.upsilon.positions, model.upsilon.masses))
    cuts = sorted(set(bps) | set(atom_at))
    factors: list[_Factor] = []
    if cuts[0] == 0.0 and 0.0 in atom_at:
        factors.append(_Factor(1, atom_at[0.0]))
    for left, right in zip(cuts, cuts[1:]):
        j = bisect.bisect_right(bps, 0.5 * (left + right)) - 1
        j = min(max(j, 0), len(vals) - 1)
        factors.append(_Factor(0, vals[j], right - left))
        if right in atom_at:
            factors.append(_Factor(1, atom_at[right]))
    return tuple(factors)


def _apply_forward(factor: _Factor, z, state):
    """In place: state (2, ...) -> factor(z) @ state, vectorized over z."""
    f, f1 = state
    if factor.kind == 0:
        zw = z * factor.p1
        ell = factor.p2
        g = f - ell * (zw * f - f1)
        g1 = f1 + ell * zw * (f1 - zw * f)
        state[0], state[1] = g, g1
    else:
        state[1] = f1 - z * z * factor.p1 * f


def _apply_inverse(factor: _Factor, z, state):
    """In place: state -> factor(z)^{-1} @ state (nilpotent inverses, exact)."""
    f, f1 = state
    if factor.kind == 0:
        zw = z * factor.p1
        ell = factor.p2
        g = f + ell * (zw * f - f1)
        g1 = f1 - ell * zw * (f1 - zw * f)
        state[0], state[1] = g, g1
    else:
        state[1] = f1 + z * z * factor.p1 * f


def propagate_to_origin(model: StringModel, z, f_R, f1_R, renormalize: bool = False):
    """Pull a boundary state at R back to ``(f(0), f'(0-))``.

    Vectorized over ``z`` (``f_R``/``f1_R`` broadcast against it).  With
    ``renormalize`` the state is rescaled after every factor and the
    accumulated log-magnitude is returned (third output), which keeps huge-|z|
    sweeps such as the bound-state scan free of overflow; otherwise the third
    output is 0.
    """
    z = np.asarray(z)
    state = np.array(np.broadcast_arrays(np.asarray(f_R), np.asarray(f1_R)))
    if state.dtype != np.asarray(z).dtype:
        common = np.result_type(state.dtype, z.dtype, float)
        state = state.astype(common)
    log_scale = np.zeros(np.broadcast(z, state[0]).shape, dtype=float)
    if state[0].shape != log_scale.shape:
        state = np.broadcast_to(state, (2,) + log_scale.shape).copy()
    factors = _compiled(model)
    for factor in reversed(factors):
        _apply_inverse(factor, z, state)
        if renormalize:
            mag = np.maximum(np.abs(state[0]), np.abs(state[1]))
            mag = np.where(mag > 0, mag, 1.0)
            state /= mag
            log_scale += np.log(mag)
    return state[0], state[1], log_scale


def fundamental_system(model: StringModel, z: complex) -> tuple[complex, complex, complex, complex]:
    """Values ``(theta, theta^[1], phi, phi^[1])`` at x = R.

    Initial conditions ``theta(z,0) = phi^[1](z,0-) = 1`` and
    ``theta^[1](z,0) = phi(z,0) = 0``; every atom of the measure (including
    one sitting exactly at the origin) is crossed, so the returned values are
    the x -> R limits from the right of the quasi-derivative data.  The
    Wronskian ``theta*phi^[1] - phi*theta^[1]`` equals 1 up to rounding.
    """
    require_valid(model)
    _check_finite(z)
    theta = np.array([1.0 + 0j, 0.0 + 0j])
    phi = np.array([0.0 + 0j, 1.0 + 0j])
    for factor in _compiled(model):
        _apply_forward(factor, complex(z), theta)
        _apply_forward(factor, complex(z), phi)
    return complex(theta[0]), complex(theta[1]), complex(phi[0]), complex(phi[1])


def fundamental_jet(model: StringModel, base: complex, order: int) -> tuple[Jet, Jet, Jet, Jet]:
    """Jets in z at ``base`` of the four fundamental values at x = R.

    Transfer entries are polynomials of degree <= 2 in z, so the ordered
    product in truncated-series arithmetic is exact up to the requested order.
    """
    require_valid(model)
    if not (1 <= int(order) <= 6):
        raise ValueError("jet order must lie in [1, 6]")
    z = Jet.variable(complex(base), int(order))
    one = Jet.constant(1.0, int(order), complex(base))
    zero = Jet.constant(0.0, int(order), complex(base))
    theta = [one, zero]
    phi = [zero, one]
    for factor in _compiled(model):
        for state in (theta, phi):
            f, f1 = state
            if factor.kind == 0:
                zw = z * factor.p1
                ell = factor.p2
                state[0] = f + ell * (f1 - zw * f)
                state[1] = f1 + ell * zw * (f1 - zw * f)
            else:
                state[1] = f1 - z * z * factor.p1 * f
    return theta[0], theta[1], phi[0], phi[1]


# --- closed-form z-derivatives at the origin --------------------------------


@dataclass(frozen=True)
class ClosedFormJets:
    """z-derivatives at z = 0 of the fundamental system at x = R.

    All entries are exact piecewise-polynomial integrals of the step
    anti-derivative and plain sums over the atoms.
    """

    theta_dot: float
    theta_qd_dot: float
    phi_dot: float
    phi_qd_dot: float
    theta_ddot: float
    theta_qd_ddot: float
    phi_qd_ddot: float


def _cell_data(model: StringModel):
    bps = model.step.breakpoints
    vals = model.step.values
    return [(bps[j], bps[j + 1], vals[j]) for j in range(len(vals))]


def closed_form_jets(model: StringModel) -> ClosedFormJets:
    require_valid(model)
    i_w = i_w_t = i_w2 = i_w2_t = 0.0
    ii_w = ii_w2 = 0.0
    for a, b, w in _cell_data(model):
        d = b - a
        ii_w += i_w * d + 0.5 * w * d * d
        ii_w2 += i_w2 * d + 0.5 * w * w * d * d
        i_w += w * d
        i_w2 += w * w * d
        i_w_t += 0.5 * w * (b * b - a * a)
        i_w2_t += 0.5 * w * w * (b * b - a * a)
    R = model.R
    ups_tot = model.upsilon.total
    ups_xmom = sum(m * p for p, m in zip(model.upsilon.positions, model.upsilon.masses))
    ups_int = sum(m * (R - p) for p, m in zip(model.upsilon.positions, model.upsilon.masses))
    return ClosedFormJets(
        theta_dot=-i_w,
        theta_qd_dot=0.0,
        phi_dot=ii_w - i_w_t,
        phi_qd_dot=i_w,
        theta_ddot=i_w * i_w - 2.0 * ii_w2 - 2.0 * ups_int,
        theta_qd_ddot=-2.0 * i_w2 - 2.0 * ups_tot,
        phi_qd_ddot=i_w * i_w - 2.0 * i_w2_t - 2.0 * ups_xmom,
    )


def rescale_weyl(mtilde: complex, z: complex, scaling: ScalingParams) -> complex:
    """Map a normalized Weyl value to the scaled string: m(z) = eta*m~(eta z) + c.

    ``mtilde`` must already be the normalized function evaluated at ``eta*z``;
    ``z`` is the argument of the scaled function (recorded for call-site
    clarity, the affine map itself does not use it).
    """
    if scaling.eta <= 0:
        raise ValueError("eta must be > 0")
    del z
    return scaling.eta * mtilde + scaling.c


def unscale_weyl(m: complex, z: complex, scaling: ScalingParams) -> complex:
    """Inverse of :func:`rescale_weyl`: recovers m~(eta z) from m(z)."""
    if scaling.eta <= 0:
        raise ValueError("eta must be > 0")
    del z
    return (m - scaling.c) / scaling.eta


def perturbation_support_scale(model: StringModel) -> float:
    """Geometric scale (max of R and 1) used by search heuristics."""
    return max(model.R, 1.0)


def _tail_log_factor(model: StringModel) -> float:
    if model.tail.is_moebius:
        return math.log1p(2.0 * math.sqrt(model.tail.alpha) * model.R)
    return model.R
