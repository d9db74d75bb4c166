"""Jost scattering data for step strings: a(k), b(k), Weyl functions, spectra.

The Jost solution is pinned to the explicit tail beyond R and pulled back to
the origin through exact inverse transfer factors (nilpotent inverses, no
matrix inversion).  All quantities are computed from the *reduced* boundary
state with the oscillatory tail factor split off; for real k that factor has
modulus one, and on the imaginary axis it keeps the bound-state scan free of
spurious exponentials.  A running log-magnitude renormalization makes large
|k| sweeps overflow-safe.
"""

from __future__ import annotations

import cmath
import math
import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np

from .core import propagate_to_origin
from .jets import Jet
from .model import (
    MOEBIUS,
    StateVector,
    StringModel,
    TailModel,
    require_valid,
)
from .numerics import _scan_values, refine_root

__all__ = [
    "BoundStateSet",
    "SpectralSample",
    "WeylPoleError",
    "sqrt_upper",
    "jost_boundary",
    "scattering_ab",
    "weyl_m",
    "weyl_m_from_ab",
    "model_weyl_reference",
    "spectral_density",
    "bound_states",
    "find_a_zeros",
    "find_eigenvalues",
    "a_jet",
    "herglotz_scan",
    "log_abs_a",
]


class WeylPoleError(ArithmeticError):
    """The Weyl function has a pole (eigenvalue) at the requested point."""

    def __init__(self, z, message="Weyl function pole"):
        super().__init__(f"{message} at z={z}")
        self.z = z


@dataclass(frozen=True)
class BoundStateSet:
    """Zeros of a on the positive imaginary axis plus the eigenvalue set.

    ``kappas`` are the zeros of a; ``eigen_kappas`` the zeros of the Jost
    function at the origin, whose images are the eigenvalues (poles of m,
    reported in the scaled spectral variable).  ``warnings`` carries dip
    reports (|a| minima without sign change, possible even-order zeros) and
    search diagnostics.
    """

    kappas: tuple[float, ...]
    eigenvalues: tuple[float, ...]
    eigen_kappas: tuple[float, ...]
    kappa_max: float
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class SpectralSample:
    lam: float
    rho: float


def sqrt_upper(z):
    """Square root with branch cut along [0, inf): arg(z) taken in [0, 2*pi).

    Maps C \\ [0, inf) into the open upper half-plane.
    """
    z = np.asarray(z, dtype=complex)
    ang = np.angle(z)
    ang = np.where(ang < 0, ang + 2.0 * np.pi, ang)
    out = np.sqrt(np.abs(z)) * np.exp(0.5j * ang)
    return out if out.ndim else complex(out)


def _z_of_k(model: StringModel, k):
    if model.tail.is_moebius:
        return k * k + model.tail.alpha
    return k * k


def _reduced_boundary(model: StringModel, k):
    """Boundary state at R with the oscillatory tail factor removed.

    Linear tail:  full state = e^{ikR} * (1, ik + k^2 R).
    Moebius tail: full state = (1+2 sqrt(a) R)^{ik/(2 sqrt(a))} *
                  ((1+2 sqrt(a) R)^{1/2},
                   (1+2 sqrt(a) R)^{-1/2} ((ik + sqrt(a)) + (k^2+a) R)).
    """
    R = model.R
    if model.tail.is_moebius:
        sa = math.sqrt(model.tail.alpha)
        u = 1.0 + 2.0 * sa * R
        f = np.full_like(np.asarray(k, dtype=complex), math.sqrt(u))
        f1 = ((1j * k + sa) + (k * k + model.tail.alpha) * R) / math.sqrt(u)
        return f, f1
    f = np.ones_like(np.asarray(k, dtype=complex))
    f1 = 1j * k + k * k * R
    return f, f1


def _tail_phase(model: StringModel, k):
    """The factor split off in :func:`_reduced_boundary` (modulus 1 for real k)."""
    if model.tail.is_moebius:
        sa = math.sqrt(model.tail.alpha)
        return np.exp(1j * k * math.log1p(2.0 * sa * model.R) / (2.0 * sa))
    return np.exp(1j * k * model.R)


def jost_boundary(model: StringModel, k) -> StateVector:
    """Jost solution value pair at x = R, matched to the tail.

    The quasi-derivative is continuous across the W jump at R, so these are
    also the left limits used by the transfer product.
    """
    require_valid(model)
    k = complex(k)
    if k == 0:
        raise ValueError("k = 0 is excluded (tail solutions degenerate)")
    f, f1 = _reduced_boundary(model, k)
    phase = _tail_phase(model, k)
    return StateVector(model.R, complex(f * phase), complex(f1 * phase))


def _origin_reduced(model: StringModel, k, renormalize: bool = True):
    """Reduced Jost data at the origin: (f0, f0', log_scale) with the true
    values equal to ``phase * e^{log_scale} * (f0, f0')``."""
    f, f1 = _reduced_boundary(model, k)
    z = _z_of_k(model, k)
    return propagate_to_origin(model, z, f, f1, renormalize=renormalize)


def _ab_reduced(model: StringModel, k):
    """Reduced coefficients (a, b, log_scale): a = phase * e^{ls} * a_red."""
    k = np.asarray(k, dtype=complex)
    if np.any(k == 0):
        raise ValueError("k = 0 is excluded")
    f0, f0p, ls = _origin_reduced(model, k)
    ik = 1j * k
    if model.tail.is_moebius:
        sa = math.sqrt(model.tail.alpha)
        a = ((ik - sa) * f0 + f0p) / (2.0 * ik)
        b = ((ik + sa) * f0 - f0p) / (2.0 * ik)
    else:
        a = (ik * f0 + f0p) / (2.0 * ik)
        b = (ik * f0 - f0p) / (2.0 * ik)
    return a, b, ls


def scattering_ab(model: StringModel, k):
    """Reciprocal transmission coefficient a(k) and companion b(k).

    Vectorized over k.  For real nonzero k: |a|^2 - |b|^2 = 1 and
    a(k)* = a(-k), b(k)* = b(-k); on the imaginary axis both are real.
    """
    require_valid(model)
    scalar = np.ndim(k) == 0
    a, b, ls = _ab_reduced(model, k)
    phase = _tail_phase(model, np.asarray(k, dtype=complex))
    scale = np.exp(ls)
    a = a * scale * phase
    b = b * scale * phase
    if scalar:
        return complex(a), complex(b)
    return a, b


def log_abs_a(model: StringModel, k):
    """log|a(k)| for real k, computed as 0.5*log(1 + |b|^2).

    Conditioning: |a|^2 = 1 + |b|^2 has no cancellation where log|a| is
    O(k^4) small, and the log-scale bookkeeping keeps huge |b| finite.
    """
    a_red, b_red, ls = _ab_reduced(model, k)
    del a_red
    with np.errstate(divide="ignore"):
        log_b = np.log(np.abs(b_red)) + ls
    return 0.5 * np.logaddexp(0.0, 2.0 * log_b)


def weyl_m_from_ab(model: StringModel, k):
    """Normalized Weyl value through the (a, b) route:
    ik m(k^2) = (b-a)/(b+a), resp. (k^2+a) m = sqrt(a) - ik (b-a)/(b+a)."""
    a, b, _ = _ab_reduced(model, k)
    ratio = (b - a) / (b + a)
    if model.tail.is_moebius:
        sa = math.sqrt(model.tail.alpha)
        return (sa - 1j * k * ratio) / (k * k + model.tail.alpha)
    return ratio / (1j * k)


def _normalized_weyl(model: StringModel, zn):
    """m~ at a normalized argument zn (off the ray opening at the tail edge)."""
    if model.tail.is_moebius:
        k = sqrt_upper(np.asarray(zn, dtype=complex) - model.tail.alpha)
    else:
        k = sqrt_upper(zn)
    f0, f0p, ls = _origin_reduced(model, k)
    del ls  # the common scale cancels in the ratio
    tiny = np.abs(f0) <= 1e-13 * np.maximum(np.abs(f0), np.abs(f0p))
    if np.any(tiny):
        bad = np.asarray(zn)[tiny] if np.ndim(zn) else zn
        raise WeylPoleError(bad)
    return f0p / (np.asarray(zn, dtype=complex) * f0)


def weyl_m(model: StringModel, z):
    """Weyl-Titchmarsh function of the scaled string: m(z) = eta*m~(eta z) + c.

    Accepts any z off the real axis, and real z strictly below the (scaled)
    essential-spectrum edge, where m continues meromorphically; a pole there
    raises :class:`WeylPoleError`.  Points on the closed essential ray are
    rejected (use :func:`spectral_density` for boundary values).
    """
    require_valid(model)
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=complex)
    eta, c = model.scaling.eta, model.scaling.c
    zn = eta * z
    edge = model.tail.edge
    on_axis = zn.imag == 0
    if np.any(on_axis & (zn.real >= edge - 0.0)) or np.any(on_axis & (zn.real == 0.0)):
        raise ValueError("z lies on the essential-spectrum ray (or at 0); m is not defined there")
    m = eta * _normalized_weyl(model, zn) + c
    return complex(m) if scalar else m


def model_weyl_reference(tail: TailModel, z):
    """Closed forms for the unperturbed strings: m0(z) = i/sqrt(z) and
    m_alpha(z) = i/(sqrt(z-alpha) + i*sqrt(alpha))."""
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=complex)
    edge = tail.edge
    on_cut = (z.imag == 0) & (z.real >= edge)
    if np.any(on_cut) or np.any((z.imag == 0) & (z.real == 0)):
        raise ValueError("z on the branch cut of the reference Weyl function")
    if tail.kind == MOEBIUS:
        m = 1j / (sqrt_upper(z - tail.alpha) + 1j * math.sqrt(tail.alpha))
    else:
        m = 1j / sqrt_upper(z)
    return complex(m) if scalar else m


def spectral_density(model: StringModel, lam: float) -> SpectralSample:
    """Density of the absolutely continuous spectral measure at lam.

    Uses the exact boundary formula in terms of a + b (never an epsilon-limit
    of m); with scaling, rho(lam) = eta * rho~(eta lam).
    """
    require_valid(model)
    eta = model.scaling.eta
    lam = float(lam)
    edge = model.tail.edge / eta
    if lam <= edge:
        raise ValueError(f"lambda must lie strictly above the spectral edge {edge}")
    ln = eta * lam
    if model.tail.is_moebius:
        k = math.sqrt(ln - model.tail.alpha)
        log_num = 0.5 * math.log(ln - model.tail.alpha) - math.log(math.pi * ln)
    else:
        k = math.sqrt(ln)
        log_num = -math.log(math.pi * math.sqrt(ln))
    a, b, ls = _ab_reduced(model, complex(k))
    s = abs(complex(a + b))
    if s == 0.0:
        raise ArithmeticError("a + b vanished on the real line (cannot happen for valid models)")
    log_rho = math.log(eta) + log_num - 2.0 * (math.log(s) + float(ls))
    return SpectralSample(lam, math.exp(log_rho))


# --- bound states ------------------------------------------------------------


def _a_on_imag_axis(model: StringModel):
    """Real-valued scan function g with sign(g(kappa)) = sign(a(i kappa))."""
    sa = math.sqrt(model.tail.alpha) if model.tail.is_moebius else 0.0

    def g(kappa):
        kappa = np.asarray(kappa, dtype=float)
        z = _z_of_k(model, 1j * kappa)
        f, f1 = _reduced_boundary(model, 1j * kappa)
        f0, f0p, _ = propagate_to_origin(model, z.real, f.real, f1.real, renormalize=True)
        return ((-kappa - sa) * f0 + f0p) / (-2.0 * kappa)

    return g


def _jost_origin_on_imag_axis(model: StringModel):
    """Scan function h with sign(h(kappa)) = sign(f(i kappa, 0))."""

    def h(kappa):
        kappa = np.asarray(kappa, dtype=float)
        z = _z_of_k(model, 1j * kappa)
        f, f1 = _reduced_boundary(model, 1j * kappa)
        f0, _, _ = propagate_to_origin(model, z.real, f.real, f1.real, renormalize=True)
        return f0

    return h


def _alpha_exclusion(alpha: float, a2: float) -> tuple[float, float]:
    """(s_lo, s_hi) around 1 where zeros of a are impossible.

    Every zero i*kappa satisfies F(kappa/sqrt(alpha)) <= 4*alpha^{3/2}*a2
    because all terms of the second trace identity are non-negative, and F
    blows up at 1; outside (s_lo, s_hi) the bound is slack.
    """
    from .trace import F_function

    bound = 4.0 * alpha**1.5 * max(a2, 0.0) + 1e-9
    s = 2.0
    while F_function(s) > bound:
        s *= 2.0
        if s > 1e12:
            break
    lo, hi = 1.0 + 1e-14, s
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if F_function(mid) > bound:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1.0 + 1e-12:
            break
    return 1.0 / hi, hi


def _default_kappa_max(model: StringModel) -> float:
    from .trace import perturbation_norms

    norms = perturbation_norms(model)
    if model.tail.is_moebius:
        rhs = max(1.0, norms.a2)
        return 10.0 * rhs ** (1.0 / 3.0) * (1.0 + math.sqrt(model.tail.alpha))
    return 10.0 * max(1.0, norms.n0) ** (1.0 / 3.0)


def _scan_grid(model: StringModel, kappa_lo: float, kappa_max: float, n_grid: int):
    lin = np.linspace(kappa_lo, kappa_max, n_grid)
    geo = np.geomspace(kappa_lo, kappa_max, max(n_grid // 4, 16))
    grid = np.unique(np.concatenate([lin, geo]))
    if model.tail.is_moebius:
        from .trace import perturbation_norms

        sa = math.sqrt(model.tail.alpha)
        s_lo, s_hi = _alpha_exclusion(model.tail.alpha, perturbation_norms(model).a2)
        lo_edge, hi_edge = sa * s_lo, sa * s_hi
        grid = grid[(grid <= lo_edge) | (grid >= hi_edge)]
        extra = [x for x in (lo_edge, hi_edge) if kappa_lo <= x <= kappa_max]
        grid = np.unique(np.concatenate([grid, np.asarray(extra)]))
    return grid


def _refine_all(g, scan, tol):
    roots, warns = [], []
    for bracket in scan.brackets:
        rec = refine_root(lambda x: float(g(np.asarray([x]))[0]), bracket, tol)
        roots.append(rec.location)
    for dip in scan.dips:
        warns.append(
            f"|g| dip without sign change near kappa={dip.location:.12g} "
            f"(value {dip.value:.3g}); possible even-order zero"
        )
    roots = sorted(roots)
    dedup = []
    for r in roots:
        if not dedup or r - dedup[-1] > 1e-10 * max(1.0, r):
            dedup.append(r)
    return dedup, warns


def bound_states(model: StringModel, kappa_max: float | None = None, tol: float = 1e-12,
                 n_grid: int = 1600) -> BoundStateSet:
    """Locate zeros of a on the positive imaginary axis and the eigenvalues.

    Zeros are found by bracketing sign changes of the real function
    a(i kappa) on (0, kappa_max]; for Moebius tails the structural window
    around sqrt(alpha) (where a(i sqrt(alpha)) = 1) is excluded.  Eigenvalues
    are the zeros of the Jost function at the origin, mapped through
    lambda = -kappa^2 resp. alpha - kappa^2 and the (c, eta) scaling.
    Completeness is certified downstream by the trace-formula residual.
    """
    require_valid(model)
    if kappa_max is None:
        kappa_max = _default_kappa_max(model)
    if kappa_max <= 0 or tol <= 0:
        raise ValueError("kappa_max and tol must be > 0")

    from .trace import perturbation_norms

    norms = perturbation_norms(model)
    warns: list[str] = []
    if model.tail.is_moebius:
        kappa_lo = 1e-6 * min(1.0, math.sqrt(model.tail.alpha))
    else:
        if norms.n0 == 0.0:
            return BoundStateSet((), (), (), kappa_max)
        # every zero obeys (4/3) kappa^-3 <= n0
        kappa_lo = 0.8 * (4.0 / (3.0 * norms.n0)) ** (1.0 / 3.0)
        kappa_lo = min(kappa_lo, 0.5 * kappa_max)

    g = _a_on_imag_axis(model)
    grid = _scan_grid(model, kappa_lo, kappa_max, n_grid)
    scan = _scan_values(grid, np.asarray(g(grid), dtype=float), 1e-3)
    kappas, w = _refine_all(g, scan, tol)
    warns += w

    h = _jost_origin_on_imag_axis(model)
    egrid = np.unique(np.concatenate([np.linspace(kappa_lo, kappa_max, n_grid),
                                      np.geomspace(kappa_lo, kappa_max, max(n_grid // 4, 16))]))
    escan = _scan_values(egrid, np.asarray(h(egrid), dtype=float), 1e-3)
    ekap, w = _refine_all(h, escan, tol)
    warns += [s.replace("even-order zero", "even-order Jost zero") for s in w]

    for ek in ekap:
        if any(abs(ek - kz) <= 1e-9 * max(1.0, ek) for kz in kappas):
            warns.append(
                f"degenerate condition: Jost zero and a-zero coincide near kappa={ek:.12g}"
            )

    eta = model.scaling.eta
    if model.tail.is_moebius:
        lam = [(model.tail.alpha - k * k) / eta for k in ekap]
    else:
        lam = [-(k * k) / eta for k in ekap]
    order = np.argsort(lam)
    lam = [lam[i] for i in order]
    ekap = [ekap[i] for i in order]
    return BoundStateSet(tuple(kappas), tuple(lam), tuple(ekap), float(kappa_max), tuple(warns))


def find_a_zeros(model: StringModel, kappa_max: float | None = None, tol: float = 1e-12,
                 n_grid: int = 1600) -> list[float]:
    """Zeros of a on the positive imaginary axis (see :func:`bound_states`)."""
    bs = bound_states(model, kappa_max, tol, n_grid)
    for w in bs.warnings:
        _warnings.warn(w, RuntimeWarning, stacklevel=2)
    return list(bs.kappas)


def find_eigenvalues(model: StringModel, kappa_max: float | None = None, tol: float = 1e-12,
                     n_grid: int = 1600) -> list[float]:
    """Eigenvalues (poles of m) sorted by increasing value, in the scaled variable."""
    bs = bound_states(model, kappa_max, tol, n_grid)
    for w in bs.warnings:
        _warnings.warn(w, RuntimeWarning, stacklevel=2)
    return list(bs.eigenvalues)


# --- jets of a ----------------------------------------------------------------


def _jet_propagate_back(model: StringModel, z: Jet, f: Jet, f1: Jet) -> tuple[Jet, Jet]:
    from .core import _compiled

    for factor in reversed(_compiled(model)):
        if factor.kind == 0:
            zw = z * factor.p1
            ell = factor.p2
            f, f1 = f + ell * (zw * f - f1), f1 - ell * zw * (f1 - zw * f)
        else:
            f1 = f1 + z * z * factor.p1 * f
    return f, f1


def a_jet(model: StringModel) -> Jet:
    """Taylor jet of a at the trace-formula base point.

    Linear tail: base k = 0, order 4; the constant coefficient is 1,
    coefficients 1 and 2 vanish and coefficient 3 equals -i/2 times the
    perturbation norm.  Moebius tail: base k = i*sqrt(alpha), order 2, with
    constant coefficient 1.
    """
    require_valid(model)
    R = model.R
    if model.tail.is_moebius:
        alpha = model.tail.alpha
        sa = math.sqrt(alpha)
        order = 2
        k = Jet.variable(1j * sa, order)
        z = k * k + alpha
        logu = math.log1p(2.0 * sa * R)
        phase = (k * (1j * logu / (2.0 * sa))).exp()
        f = phase * math.exp(0.5 * logu)
        f1 = phase * math.exp(-0.5 * logu) * ((1j * k + sa) + z * R)
        f0, f0p = _jet_propagate_back(model, z, f, f1)
        return ((1j * k - sa) * f0 + f0p) / (2j * k)
    order = 5
    k = Jet.variable(0.0, order)
    z = k * k
    phase = (1j * k * R).exp()
    f = phase
    f1 = (1j * k + z * R) * phase
    f0, f0p = _jet_propagate_back(model, z, f, f1)
    num = 1j * k * f0 + f0p
    scale = float(np.max(np.abs(num.coeffs))) or 1.0
    if abs(num.coeffs[0]) > 1e-9 * scale:
        raise ArithmeticError("numerator of a does not vanish at k = 0")
    shifted = num.shift_down()
    return Jet(0.0, shifted.coeffs[:order] / 2j)


def herglotz_scan(model: StringModel, grid, evaluator=None) -> dict:
    """Check the Herglotz property of m on a grid in the open upper half-plane.

    Flags points with Im m < -1e-12 and reports the worst conjugate-symmetry
    residual |m(z*) - m(z)*|.  ``evaluator(model, z)`` defaults to
    :func:`weyl_m` (overridable as a test hook).
    """
    require_valid(model)
    evaluator = evaluator or weyl_m
    grid = [complex(z) for z in grid]
    if any(z.imag <= 0 for z in grid):
        raise ValueError("grid points must lie strictly in the upper half-plane")
    flagged = []
    max_neg = 0.0
    max_conj = 0.0
    for z in grid:
        m = complex(evaluator(model, z))
        mc = complex(evaluator(model, z.conjugate()))
        if m.imag < -1e-12:
            flagged.append(z)
            max_neg = max(max_neg, -m.imag)
        max_conj = max(max_conj, abs(mc - m.conjugate()))
    return {
        "flagged": flagged,
        "max_negative_im": max_neg,
        "max_conjugate_residual": max_conj,
        "ok": not flagged,
    }
