"""Finite-support laws and kernel-tree process specifications.

Everything here is exact bookkeeping: no simulation. The forward pushforward
:func:`unconditional_law` is the oracle the Monte Carlo layers are checked
against.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

MASS_TOL = 1e-9
MEAN_TOL = 1e-9
SUM_TOL = 1e-12

MARTINGALE = "martingale"
SUPERMARTINGALE = "supermartingale"
KINDS = (MARTINGALE, SUPERMARTINGALE)


def canonical(value: float) -> float:
    """Round to 12 significant digits so state keys agree across stages."""
    value = float(value)
    if value == 0.0:
        return 0.0
    return float(f"{value:.12g}")


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite-support probability law with strictly increasing atoms."""

    values: tuple[float, ...]
    masses: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.masses) or not self.values:
            raise ValueError("values and masses must be non-empty and aligned")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("atom values must be strictly increasing")
        if any(m <= 0 for m in self.masses):
            raise ValueError("atom masses must be positive")
        if abs(math.fsum(self.masses) - 1.0) > SUM_TOL:
            raise ValueError("masses must sum to 1")

    @property
    def mean(self) -> float:
        return math.fsum(v * m for v, m in zip(self.values, self.masses))

    @property
    def abs_mean(self) -> float:
        return math.fsum(abs(v) * m for v, m in zip(self.values, self.masses))

    def __len__(self):
        return len(self.values)

    def items(self):
        return zip(self.values, self.masses)

    def mass_of(self, value: float, tol: float = 1e-9) -> float:
        i = int(np.searchsorted(self.values, value - tol))
        if i < len(self.values) and abs(self.values[i] - value) <= tol:
            return self.masses[i]
        return 0.0

    def to_dict(self) -> dict[float, float]:
        return dict(zip(self.values, self.masses))

    def is_point_mass(self) -> bool:
        return len(self.values) == 1

    def __repr__(self):
        body = ", ".join(f"{v:g}: {m:.6g}" for v, m in self.items())
        return f"DiscreteDistribution({{{body}}})"


def make_distribution(atoms: Iterable[tuple[float, float]]) -> DiscreteDistribution:
    """Sort, merge duplicates, check masses and renormalize.

    Values are canonicalized first, so atoms that agree to 12 significant
    digits are merged.
    """
    merged: dict[float, list[float]] = {}
    for value, mass in atoms:
        mass = float(mass)
        if not mass > 0:
            raise ValueError(f"non-positive mass {mass} at value {value}")
        if not math.isfinite(float(value)):
            raise ValueError(f"non-finite atom value {value}")
        merged.setdefault(canonical(value), []).append(mass)
    if not merged:
        raise ValueError("empty atom list")
    values = sorted(merged)
    masses = [math.fsum(merged[v]) for v in values]
    total = math.fsum(masses)
    if abs(total - 1.0) > MASS_TOL:
        raise ValueError(f"masses sum to {total!r}, expected 1")
    masses = [m / total for m in masses]
    return DiscreteDistribution(tuple(values), tuple(masses))


def point_mass(value: float) -> DiscreteDistribution:
    return DiscreteDistribution((canonical(value),), (1.0,))


@dataclass(frozen=True)
class ProcessSpec:
    """Martingale or supermartingale given by conditional kernels.

    ``kernels[(n, x)]`` is the law of the state at stage ``n + 1`` given
    state ``x`` at stage ``n``, for ``n`` in ``0 .. n_max - 1``.
    """

    kind: str
    root_value: float
    n_max: int
    kernels: Mapping[tuple[int, float], DiscreteDistribution] = field(repr=False)
    preset: str | None = None
    params: Mapping[str, float] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if int(self.n_max) < 1:
            raise ValueError("n_max must be a positive integer")
        object.__setattr__(self, "root_value", canonical(self.root_value))
        kernels = {(int(n), canonical(x)): d for (n, x), d in self.kernels.items()}
        object.__setattr__(self, "kernels", kernels)
        missing = self._missing_kernels()
        if missing:
            n, x = missing[0]
            raise ValueError(
                f"state {x:g} is reachable at stage {n} but has no kernel "
                f"({len(missing)} missing in total)"
            )

    def _missing_kernels(self):
        missing = []
        frontier = {self.root_value}
        for n in range(self.n_max):
            nxt = set()
            for x in sorted(frontier):
                d = self.kernels.get((n, x))
                if d is None:
                    missing.append((n, x))
                    continue
                nxt.update(d.values)
            frontier = nxt
        return missing

    def kernel(self, stage: int, state: float) -> DiscreteDistribution:
        return self.kernels[(stage, canonical(state))]

    def states(self, stage: int) -> list[float]:
        """Reachable states at ``stage``, sorted."""
        return list(unconditional_law(self, stage).values)

    @property
    def n_kernels(self) -> int:
        return len(self.kernels)

    # serialization -------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "root_value": self.root_value,
            "n_max": self.n_max,
            "kernels": [
                {"stage": n, "state": x, "atoms": [[v, m] for v, m in d.items()]}
                for (n, x), d in sorted(self.kernels.items())
            ],
        }


@dataclass(frozen=True)
class Violation:
    stage: int
    state: float
    message: str

    def __str__(self):
        return f"stage {self.stage}, state {self.state:g}: {self.message}"


def validate_spec(spec: ProcessSpec) -> list[Violation]:
    """Kind-specific checks on every kernel; an empty list means valid."""
    report = []
    for (n, x), d in sorted(spec.kernels.items()):
        m = d.mean
        if spec.kind == MARTINGALE:
            if abs(m - x) > MEAN_TOL:
                report.append(Violation(n, x, f"kernel mean {m:.12g} != state {x:.12g}"))
        else:
            if m > x + MEAN_TOL:
                report.append(Violation(n, x, f"kernel mean {m:.12g} > state {x:.12g}"))
            if d.values[0] < 0:
                report.append(
                    Violation(n, x, f"negative atom {d.values[0]:.12g} < 0")
                )
    if spec.kind == SUPERMARTINGALE and spec.root_value < 0:
        report.append(Violation(0, spec.root_value, "negative root value"))
    return report


def check_valid(spec: ProcessSpec) -> None:
    report = validate_spec(spec)
    if report:
        lines = "\n  ".join(str(v) for v in report[:10])
        raise ValueError(f"invalid {spec.kind} spec ({len(report)} violations):\n  {lines}")


def unconditional_law(spec: ProcessSpec, n: int) -> DiscreteDistribution:
    """Exact law of the state at stage ``n`` by forward pushforward."""
    if not 0 <= n <= spec.n_max:
        raise ValueError(f"stage {n} outside 0..{spec.n_max}")
    law = {spec.root_value: 1.0}
    for k in range(n):
        nxt: dict[float, list[float]] = {}
        for x, p in law.items():
            for v, q in spec.kernels[(k, x)].items():
                nxt.setdefault(v, []).append(p * q)
        law = {v: math.fsum(ps) for v, ps in nxt.items()}
    return make_distribution(law.items())


def all_laws(spec: ProcessSpec) -> list[DiscreteDistribution]:
    """Laws at stages 0..n_max, computed in one forward sweep."""
    out = [point_mass(spec.root_value)]
    law = {spec.root_value: 1.0}
    for k in range(spec.n_max):
        nxt: dict[float, list[float]] = {}
        for x, p in law.items():
            for v, q in spec.kernels[(k, x)].items():
                nxt.setdefault(v, []).append(p * q)
        law = {v: math.fsum(ps) for v, ps in nxt.items()}
        out.append(make_distribution(law.items()))
    return out


@dataclass(frozen=True)
class L1Profile:
    per_stage: tuple[float, ...]

    @property
    def k_bound(self) -> float:
        return max(self.per_stage)


def l1_profile(spec: ProcessSpec) -> L1Profile:
    """``E|M_n|`` for every stage, and their maximum."""
    check_valid(spec)
    return L1Profile(tuple(d.abs_mean for d in all_laws(spec)))


# presets -----------------------------------------------------------------


def _expand(kind, root, n_max, step, preset, params) -> ProcessSpec:
    kernels = {}
    frontier = {canonical(root)}
    for n in range(n_max):
        nxt = set()
        for x in sorted(frontier):
            d = step(x)
            kernels[(n, x)] = d
            nxt.update(d.values)
        frontier = nxt
    return ProcessSpec(kind, root, n_max, kernels, preset=preset, params=params)


def random_walk(n_max: int = 10) -> ProcessSpec:
    """Simple symmetric +-1 walk from 0."""
    return _expand(
        MARTINGALE, 0.0, n_max,
        lambda x: make_distribution([(x - 1, 0.5), (x + 1, 0.5)]),
        "random_walk", {},
    )


def stopped_walk(n_max: int = 10, lower: float = -3, upper: float = 5) -> ProcessSpec:
    """+-1 walk from 0 frozen on first hitting ``lower`` or ``upper``."""
    if not lower < 0 < upper:
        raise ValueError("need lower < 0 < upper")

    def step(x):
        if x <= lower or x >= upper:
            return point_mass(x)
        return make_distribution([(x - 1, 0.5), (x + 1, 0.5)])

    return _expand(MARTINGALE, 0.0, n_max, step, "stopped_walk",
                   {"lower": float(lower), "upper": float(upper)})


def multiplicative(n_max: int = 5, down: float = 0.5, up: float = 1.25,
                   p_up: float = 0.5) -> ProcessSpec:
    """Non-negative supermartingale X_{n+1} = X_n * F with F in {down, up}."""

    def step(x):
        if x == 0:
            return point_mass(0.0)
        return make_distribution([(x * down, 1 - p_up), (x * up, p_up)])

    return _expand(SUPERMARTINGALE, 1.0, n_max, step, "multiplicative",
                   {"down": float(down), "up": float(up), "p_up": float(p_up)})


def constant(n_max: int = 5, value: float = 0.0, kind: str = MARTINGALE) -> ProcessSpec:
    return _expand(kind, value, n_max, point_mass, "constant", {"value": float(value)})


PRESETS = {
    "random_walk": random_walk,
    "stopped_walk": stopped_walk,
    "multiplicative": multiplicative,
    "constant": constant,
}


def from_preset(name: str, n_max: int, **params) -> ProcessSpec:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(n_max=n_max, **params)


_SPEC_KEYS = {"kind", "root_value", "n_max", "preset", "params", "kernels"}


def spec_from_json(doc: Mapping) -> ProcessSpec:
    """Build a spec from its JSON document; presets expand to explicit kernels."""
    unknown = set(doc) - _SPEC_KEYS
    if unknown:
        raise ValueError(f"unknown spec keys: {sorted(unknown)}")
    if "n_max" not in doc:
        raise ValueError("spec needs n_max")
    n_max = int(doc["n_max"])
    if doc.get("preset"):
        params = dict(doc.get("params") or {})
        if doc["preset"] == "constant":
            params.setdefault("kind", doc.get("kind", MARTINGALE))
            if "root_value" in doc:
                params.setdefault("value", doc["root_value"])
        spec = from_preset(doc["preset"], n_max, **params)
        if "kind" in doc and doc["kind"] != spec.kind:
            raise ValueError(f"preset {doc['preset']!r} is a {spec.kind}, not {doc['kind']}")
        return spec
    for key in ("kind", "root_value", "kernels"):
        if key not in doc:
            raise ValueError(f"explicit spec needs {key!r}")
    kernels = {}
    for entry in doc["kernels"]:
        key = (int(entry["stage"]), canonical(entry["state"]))
        if key in kernels:
            raise ValueError(f"duplicate kernel for stage {key[0]}, state {key[1]:g}")
        kernels[key] = make_distribution((v, m) for v, m in entry["atoms"])
    return ProcessSpec(doc["kind"], float(doc["root_value"]), n_max, kernels)


def load_spec(path) -> ProcessSpec:
    with open(path) as fh:
        return spec_from_json(json.load(fh))


def dump_spec(spec: ProcessSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_json_dict(), fh, indent=1)
