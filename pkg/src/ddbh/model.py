"""Lattice geometry, model parameters and drive/dissipation profiles.

Sites are labelled ``l = 1..N`` along x at every public interface; arrays are
stored 0-based, so ``drive[l - 1]`` is the amplitude on site ``l``.  The
lattice is always translationally invariant along y: every x-site stands for
a whole column and couples to two copies of itself along y.

Energies are plain numbers in a common unit.  The usual convention is
``J = 1`` so that energies read as multiples of J and time as multiples of
1/J (hbar = 1).  ``J = 0`` is allowed and describes decoupled cavities.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .errors import ScenarioError

Y_COORDINATION = 2
SCHEMA_VERSION = 1

OPEN = "open"
PERIODIC = "periodic"


@dataclass(frozen=True)
class LatticeSpec:
    n_x: int
    boundary_x: str = OPEN
    y_invariant: bool = True

    def __post_init__(self):
        if int(self.n_x) != self.n_x or self.n_x < 1:
            raise ScenarioError(f"lattice.n_x must be a positive integer, got {self.n_x!r}")
        if self.boundary_x not in (OPEN, PERIODIC):
            raise ScenarioError(f"lattice.boundary_x must be 'open' or 'periodic', got {self.boundary_x!r}")
        if self.boundary_x == PERIODIC and self.n_x < 3:
            raise ScenarioError("lattice.boundary_x='periodic' needs n_x >= 3")
        if not self.y_invariant:
            raise ScenarioError("only y-invariant lattices are supported")

    @property
    def periodic(self) -> bool:
        return self.boundary_x == PERIODIC

    @property
    def n_bonds(self) -> int:
        return self.n_x if self.periodic else self.n_x - 1


@dataclass(frozen=True)
class ModelParams:
    J: float
    U: float
    delta: float

    def __post_init__(self):
        for name in ("J", "U", "delta"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ScenarioError(f"params.{name} must be finite, got {v!r}")
        if self.J < 0:
            raise ScenarioError(f"params.J must be >= 0, got {self.J}")
        if self.U < 0:
            raise ScenarioError(f"params.U must be >= 0, got {self.U}")


@dataclass(frozen=True)
class PhaseImprint:
    """``F_l = F exp(i phase l)`` on every site with uniform loss ``gamma_b``."""

    F: float
    phase: float
    gamma_b: float
    kind = "phase_imprint"


@dataclass(frozen=True)
class SourceDrain:
    """Drive on the last site, extra loss ``gamma`` on the first."""

    F: float
    gamma: float
    gamma_b: float = 0.0
    kind = "source_drain"


@dataclass(frozen=True)
class Gradient:
    """Linearly growing real drive ``F_0 + dF (l - 1)`` with uniform loss."""

    F0: float
    dF: float
    gamma: float
    kind = "gradient"


DriveProfile = Union[PhaseImprint, SourceDrain, Gradient]
PROFILE_KINDS = {cls.kind: cls for cls in (PhaseImprint, SourceDrain, Gradient)}


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    lattice: LatticeSpec
    params: ModelParams
    drive: np.ndarray
    loss: np.ndarray
    profile: DriveProfile | None = None
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "drive", _readonly(np.asarray(self.drive, dtype=complex)))
        object.__setattr__(self, "loss", _readonly(np.asarray(self.loss, dtype=float)))

    @property
    def n_x(self) -> int:
        return self.lattice.n_x

    @property
    def J(self) -> float:
        return self.params.J

    @property
    def U(self) -> float:
        return self.params.U

    @property
    def delta(self) -> float:
        return self.params.delta

    @property
    def homogeneous(self) -> bool:
        """True when a plane-wave steady state is compatible with the geometry."""
        return "inhomogeneous_phase_imprint" not in self.flags

    def with_params(self, **changes) -> "ScenarioConfig":
        """Rebuild from the stored profile with some parameters replaced.

        Keys may name a ModelParams field (``J``, ``U``, ``delta``) or a field
        of the drive profile (``F``, ``gamma``, ``gamma_b``, ``phase``, ...).
        """
        pkeys = {k: v for k, v in changes.items() if k in ("J", "U", "delta")}
        rest = {k: v for k, v in changes.items() if k not in pkeys}
        if self.profile is None:
            if rest:
                raise ScenarioError("config has no profile to rebuild from")
            return ScenarioConfig(self.lattice, replace(self.params, **pkeys), self.drive,
                                  self.loss, None, self.flags)
        try:
            profile = replace(self.profile, **rest)
        except TypeError as exc:
            raise ScenarioError(str(exc)) from None
        return build_scenario(self.lattice, replace(self.params, **pkeys), profile)

    def to_dict(self) -> dict:
        d = {
            "version": SCHEMA_VERSION,
            "lattice": {"n_x": self.lattice.n_x, "boundary_x": self.lattice.boundary_x},
            "params": {"J": self.J, "U": self.U, "delta": self.delta},
        }
        if self.profile is not None:
            prof = {"kind": self.profile.kind}
            prof.update({k: getattr(self.profile, k) for k in self.profile.__dataclass_fields__})
            d["profile"] = prof
        else:
            d["drive"] = [[z.real, z.imag] for z in self.drive]
            d["loss"] = self.loss.tolist()
        return d

    def config_hash(self) -> str:
        """Stable short hash of the materialized configuration."""
        h = hashlib.sha256()
        h.update(json.dumps(self.to_dict(), sort_keys=True).encode())
        h.update(self.drive.tobytes())
        h.update(self.loss.tobytes())
        return h.hexdigest()[:16]


def build_scenario(lattice: LatticeSpec, params: ModelParams, profile: DriveProfile) -> ScenarioConfig:
    """Materialize per-site drive amplitudes and loss rates for a profile."""
    n = lattice.n_x
    sites = np.arange(1, n + 1)
    flags: list[str] = []
    if isinstance(profile, PhaseImprint):
        drive = profile.F * np.exp(1j * profile.phase * sites)
        loss = np.full(n, float(profile.gamma_b))
        winding = profile.phase * n / (2 * math.pi)
        if not lattice.periodic or abs(winding - round(winding)) > 1e-9:
            flags.append("inhomogeneous_phase_imprint")
    elif isinstance(profile, SourceDrain):
        drive = np.zeros(n, dtype=complex)
        drive[n - 1] = profile.F
        loss = np.full(n, float(profile.gamma_b))
        loss[0] += profile.gamma
    elif isinstance(profile, Gradient):
        drive = (profile.F0 + profile.dF * (sites - 1)).astype(complex)
        if np.any(drive.real < 0):
            bad = int(sites[np.argmax(drive.real < 0)])
            raise ScenarioError(f"gradient profile gives negative drive at site {bad}")
        loss = np.full(n, float(profile.gamma))
    else:
        raise ScenarioError(f"unknown drive profile {profile!r}")
    config = ScenarioConfig(lattice, params, drive, loss, profile, tuple(flags))
    problems = validate(config)
    if problems:
        raise ScenarioError("; ".join(problems))
    return config


def validate(config: ScenarioConfig) -> list[str]:
    """List every violated invariant of a config; empty means well formed."""
    report = []
    n = config.lattice.n_x
    if config.drive.shape != (n,):
        report.append(f"drive has length {config.drive.size}, expected n_x={n}")
    if config.loss.shape != (n,):
        report.append(f"loss has length {config.loss.size}, expected n_x={n}")
    if not np.all(np.isfinite(config.drive)):
        report.append("drive contains non-finite entries")
    loss = np.atleast_1d(config.loss)
    for i in np.flatnonzero(~(loss >= 0)):
        report.append(f"loss rate at site {i + 1} is {loss[i]} (must be >= 0)")
    return report


# --- scenario files -------------------------------------------------------

_PROFILE_FIELDS = {
    "phase_imprint": {"F", "phase", "gamma_b"},
    "source_drain": {"F", "gamma", "gamma_b"},
    "gradient": {"F0", "dF", "gamma"},
}
_OPTIONAL_PROFILE = {"source_drain": {"gamma_b"}}


def _check_keys(section: str, got: dict, allowed: set, required: set | None = None):
    if not isinstance(got, dict):
        raise ScenarioError(f"{section} must be an object")
    unknown = set(got) - allowed
    if unknown:
        raise ScenarioError(f"unknown key(s) in {section}: {', '.join(sorted(unknown))}")
    missing = (allowed if required is None else required) - set(got)
    if missing:
        raise ScenarioError(f"missing key(s) in {section}: {', '.join(sorted(missing))}")


def _number(section: str, key: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{section}.{key} must be a number, got {value!r}")
    return float(value)


def scenario_from_dict(d: dict, extra_keys: set = frozenset()) -> ScenarioConfig:
    """Parse the JSON scenario schema.  Unknown keys are rejected."""
    _check_keys("scenario", d, {"version", "lattice", "params", "profile"} | set(extra_keys),
                {"lattice", "params", "profile"})
    if d.get("version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported scenario version {d.get('version')!r}")
    lat = d["lattice"]
    _check_keys("lattice", lat, {"n_x", "boundary_x"}, {"n_x"})
    n_x = lat["n_x"]
    if isinstance(n_x, bool) or not isinstance(n_x, int):
        raise ScenarioError(f"lattice.n_x must be an integer, got {n_x!r}")
    lattice = LatticeSpec(n_x, lat.get("boundary_x", OPEN))
    par = d["params"]
    _check_keys("params", par, {"J", "U", "delta"})
    params = ModelParams(*(_number("params", k, par[k]) for k in ("J", "U", "delta")))
    prof = d["profile"]
    if not isinstance(prof, dict) or prof.get("kind") not in _PROFILE_FIELDS:
        raise ScenarioError(f"profile.kind must be one of {sorted(_PROFILE_FIELDS)}")
    kind = prof["kind"]
    fields = _PROFILE_FIELDS[kind]
    _check_keys("profile", prof, fields | {"kind"}, (fields - _OPTIONAL_PROFILE.get(kind, set())) | {"kind"})
    values = {k: _number("profile", k, v) for k, v in prof.items() if k != "kind"}
    for k in ("gamma", "gamma_b"):
        if values.get(k, 0.0) < 0:
            raise ScenarioError(f"profile.{k} must be >= 0, got {values[k]}")
    return build_scenario(lattice, params, PROFILE_KINDS[kind](**values))


def load_scenario(path, extra_keys: set = frozenset()) -> tuple[ScenarioConfig, dict]:
    """Read a scenario file; returns the config and the raw document."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: not valid JSON ({exc})") from None
    return scenario_from_dict(doc, extra_keys), doc
