"""Model types for the exactly solvable string classes.

A model bundles a piecewise-constant anti-derivative on ``[0, R]``, a finite
discrete measure supported below ``R``, an explicit tail (linear or Moebius)
beyond ``R`` and an affine rescaling ``(c, eta)``.  The internal form is
always the normalized string; ``(c, eta)`` is stored but only applied at the
Weyl-function / spectrum interface.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

__all__ = [
    "LINEAR",
    "MOEBIUS",
    "StepFunction",
    "DiscreteMeasure",
    "TailModel",
    "ScalingParams",
    "StringModel",
    "StateVector",
    "ModelError",
    "validate_model",
    "model_to_dict",
    "model_from_dict",
    "load_model",
    "save_model",
]

LINEAR = "linear"
MOEBIUS = "moebius"


class ModelError(ValueError):
    """Raised when an operation receives a model that fails validation."""


def _finite(xs) -> bool:
    return all(math.isfinite(x) for x in xs)


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant values on ``[x_{j-1}, x_j)``, left-continuous.

    ``breakpoints`` starts at 0 and ends at R; ``values`` has one entry per
    interval.  ``R = 0`` (breakpoints ``(0,)``, no values) encodes an empty
    step part.
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __init__(self, breakpoints: Sequence[float] = (0.0,), values: Sequence[float] = ()) -> None:
        object.__setattr__(self, "breakpoints", tuple(float(x) for x in breakpoints))
        object.__setattr__(self, "values", tuple(float(v) for v in values))

    @property
    def R(self) -> float:
        return self.breakpoints[-1] if self.breakpoints else 0.0

    def violations(self) -> list[str]:
        out = []
        if not self.breakpoints:
            return ["step has no breakpoints (need at least the origin)"]
        if self.breakpoints[0] != 0.0:
            out.append("first breakpoint must be 0")
        if any(b >= a for b, a in zip(self.breakpoints, self.breakpoints[1:])):
            out.append("breakpoints not strictly increasing")
        if len(self.values) != len(self.breakpoints) - 1:
            out.append("value count must be breakpoint count minus one")
        if not _finite(self.breakpoints) or not _finite(self.values):
            out.append("non-finite step data")
        return out


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finite sum of point masses; positions strictly increasing."""

    positions: tuple[float, ...] = ()
    masses: tuple[float, ...] = ()

    def __init__(self, positions: Sequence[float] = (), masses: Sequence[float] = ()) -> None:
        object.__setattr__(self, "positions", tuple(float(x) for x in positions))
        object.__setattr__(self, "masses", tuple(float(m) for m in masses))

    @property
    def total(self) -> float:
        return float(sum(self.masses))

    def violations(self, R: float) -> list[str]:
        out = []
        if len(self.positions) != len(self.masses):
            out.append("position/mass count mismatch")
            return out
        if not _finite(self.positions) or not _finite(self.masses):
            out.append("non-finite measure data")
            return out
        if any(m <= 0 for m in self.masses):
            out.append("non-positive mass")
        if any(b >= a for b, a in zip(self.positions, self.positions[1:])):
            out.append("atom positions not strictly increasing")
        for p in self.positions:
            if p < 0:
                out.append("atom position < 0")
            # An atom exactly at the origin is always admitted: it encodes the
            # pure-tail-plus-point-mass limit (R = 0) that a strict `p < R`
            # reading would exclude.
            elif p >= R and p != 0.0:
                out.append("atom position >= R")
        return out


@dataclass(frozen=True)
class TailModel:
    """Explicit coefficient beyond R: W(x) = x, or W(x) = x/(1+2*sqrt(alpha)*x)."""

    kind: str
    alpha: float | None = None

    def __init__(self, kind: str, alpha: float | None = None) -> None:
        object.__setattr__(self, "kind", str(kind))
        object.__setattr__(self, "alpha", None if alpha is None else float(alpha))

    @classmethod
    def linear(cls) -> "TailModel":
        return cls(LINEAR)

    @classmethod
    def moebius(cls, alpha: float) -> "TailModel":
        return cls(MOEBIUS, alpha)

    @property
    def is_moebius(self) -> bool:
        return self.kind == MOEBIUS

    @property
    def edge(self) -> float:
        """Left endpoint of the essential-spectrum interval (normalized string)."""
        return self.alpha if self.is_moebius else 0.0

    def w(self, x):
        """Tail anti-derivative at ``x`` (scalar or array)."""
        if self.is_moebius:
            return x / (1.0 + 2.0 * math.sqrt(self.alpha) * x)
        return x

    def violations(self) -> list[str]:
        if self.kind == LINEAR:
            return [] if self.alpha is None else ["linear tail must not carry alpha"]
        if self.kind == MOEBIUS:
            if self.alpha is None or not math.isfinite(self.alpha) or self.alpha <= 0:
                return ["moebius tail needs alpha > 0"]
            return []
        return [f"unknown tail kind {self.kind!r}"]


@dataclass(frozen=True)
class ScalingParams:
    """Affine normalization W = c + eta * W_normalized; m(z) = eta*m~(eta z) + c.

    Negative eta (spectrum reflected across the imaginary axis) is rejected;
    only eta > 0 is supported.
    """

    c: float = 0.0
    eta: float = 1.0

    def violations(self) -> list[str]:
        out = []
        if not math.isfinite(self.c) or not math.isfinite(self.eta):
            out.append("non-finite scaling")
        elif self.eta <= 0:
            out.append("eta must be > 0 (reflection via negative eta unsupported)")
        return out

    @property
    def is_identity(self) -> bool:
        return self.c == 0.0 and self.eta == 1.0


@dataclass(frozen=True)
class StringModel:
    """Normalized exactly-solvable string plus the stored (c, eta) scaling."""

    step: StepFunction
    upsilon: DiscreteMeasure = field(default_factory=DiscreteMeasure)
    tail: TailModel = field(default_factory=TailModel.linear)
    scaling: ScalingParams = field(default_factory=ScalingParams)

    @property
    def R(self) -> float:
        return self.step.R

    @property
    def alpha(self) -> float | None:
        return self.tail.alpha

    @classmethod
    def f0(cls, breakpoints=(0.0,), values=(), atoms=(), scaling: ScalingParams | None = None) -> "StringModel":
        """Linear-tail model from breakpoints/values and ``(position, mass)`` pairs."""
        pos = tuple(p for p, _ in atoms)
        mas = tuple(m for _, m in atoms)
        return cls(StepFunction(breakpoints, values), DiscreteMeasure(pos, mas),
                   TailModel.linear(), scaling or ScalingParams())

    @classmethod
    def falpha(cls, alpha: float, breakpoints=(0.0,), values=(), atoms=(),
               scaling: ScalingParams | None = None) -> "StringModel":
        """Moebius-tail model with parameter ``alpha``."""
        pos = tuple(p for p, _ in atoms)
        mas = tuple(m for _, m in atoms)
        return cls(StepFunction(breakpoints, values), DiscreteMeasure(pos, mas),
                   TailModel.moebius(alpha), scaling or ScalingParams())


@dataclass(frozen=True)
class StateVector:
    """Solution value pair ``(f, f^[1])`` at a position.

    ``f1`` is the left-continuous quasi-derivative ``f' + z W f``; it is
    continuous across jumps of W and jumps only at atoms of the measure.
    """

    position: float
    f: complex
    f1: complex


def validate_model(model: StringModel) -> list[str]:
    """Collect invariant violations; an empty list means the model is valid."""
    out = list(model.step.violations())
    R = model.step.R if model.step.breakpoints else 0.0
    out += model.upsilon.violations(R)
    out += model.tail.violations()
    out += model.scaling.violations()
    return out


def require_valid(model: StringModel) -> None:
    violations = validate_model(model)
    if violations:
        raise ModelError("invalid model: " + "; ".join(violations))


# --- JSON schema -----------------------------------------------------------
#
# { "tail": {"kind":"linear"} | {"kind":"moebius","alpha":a},
#   "R": r,
#   "step": {"breakpoints":[...], "values":[...]},
#   "upsilon": {"positions":[...], "masses":[...]},
#   "scaling": {"c":c, "eta":eta} }


def model_to_dict(model: StringModel) -> dict:
    tail = {"kind": model.tail.kind}
    if model.tail.is_moebius:
        tail["alpha"] = model.tail.alpha
    return {
        "tail": tail,
        "R": model.R,
        "step": {
            "breakpoints": list(model.step.breakpoints),
            "values": list(model.step.values),
        },
        "upsilon": {
            "positions": list(model.upsilon.positions),
            "masses": list(model.upsilon.masses),
        },
        "scaling": {"c": model.scaling.c, "eta": model.scaling.eta},
    }


def model_from_dict(data: dict) -> StringModel:
    try:
        tail_data = data["tail"]
        tail = TailModel(tail_data["kind"], tail_data.get("alpha"))
        step = StepFunction(data["step"]["breakpoints"], data["step"]["values"])
        ups_data = data.get("upsilon", {})
        ups = DiscreteMeasure(ups_data.get("positions", ()), ups_data.get("masses", ()))
        sc_data = data.get("scaling", {})
        scaling = ScalingParams(float(sc_data.get("c", 0.0)), float(sc_data.get("eta", 1.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed model data: {exc}") from exc
    model = StringModel(step, ups, tail, scaling)
    if "R" in data and not math.isclose(float(data["R"]), model.R, rel_tol=0, abs_tol=1e-12):
        raise ModelError("declared R does not match the last breakpoint")
    return model


def load_model(path) -> StringModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def save_model(model: StringModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")
