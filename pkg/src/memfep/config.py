"""YAML run configuration.

Sections: ``domain``, ``mesh``, ``physics``, ``particles``, ``softwall``,
``langevin`` and ``fep``. Unknown keys anywhere are errors. Numbers may be
written in any YAML form, including ``1e4`` (which YAML reads as a string).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import yaml

from .geometry import BoundaryProfile, Domain, GeometryError, Particle, ParticleConfig, make_configuration
from .langevin import SamplerParams
from .membrane import Discretization, PhysicsParams
from .potentials import PotentialModel, SoftWallParams


class ConfigError(ValueError):
    pass


_KEYS = {
    "domain": {"lx", "ly"},
    "mesh": {"nx", "ny", "subsample", "quad_m", "penalty_alpha0", "penalty_alpha1"},
    "physics": {"kappa", "sigma", "beta"},
    "particle": {"x", "y", "alpha", "radius", "h_coeffs", "s_coeffs"},
    "softwall": {"eps", "sigma_pair", "sigma_wall"},
    "langevin": {"tau", "steps", "seed", "max_rejects", "gamma"},
    "fep": {"protocol", "omegas", "block_size"},
}
_SECTIONS = {"domain", "mesh", "physics", "particles", "softwall", "langevin", "fep"}


def _number(v, where: str, integer: bool = False):
    try:
        if isinstance(v, bool):
            raise TypeError
        x = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number, got {v!r}") from None
    if integer:
        if x != int(x):
            raise ConfigError(f"{where}: expected an integer, got {v!r}")
        return int(x)
    return x


def _numbers(v, where: str):
    if isinstance(v, (list, tuple)):
        return [_numbers(x, f"{where}[{i}]") for i, x in enumerate(v)]
    return _number(v, where)


def _section(raw: dict, name: str, required: bool) -> dict | None:
    sec = raw.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing section {name!r}")
        return None
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    unknown = set(sec) - _KEYS[name]
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    return sec


@dataclass(frozen=True)
class FepSettings:
    protocol: str
    omegas: tuple
    block_size: int | None = None


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration. Optional sections are ``None`` when absent."""

    domain: Domain | None
    disc: Discretization
    physics: PhysicsParams
    beta: float
    particles: tuple
    softwall: SoftWallParams | None
    sampler: SamplerParams | None
    fep: FepSettings | None

    def configuration(self) -> ParticleConfig:
        if self.domain is None:
            raise ConfigError("missing section 'domain'")
        if not self.particles:
            raise ConfigError("missing section 'particles'")
        try:
            return make_configuration(self.domain, self.particles)
        except GeometryError as e:
            raise ConfigError(f"infeasible particle configuration: {e}") from e

    def model(self, membrane: bool = True) -> PotentialModel:
        return PotentialModel(self.physics, self.disc, self.softwall, membrane)

    def require(self, *names: str) -> None:
        for name in names:
            if getattr(self, name) is None:
                raise ConfigError(f"missing section {name!r}")


def parse_config(raw) -> RunConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(raw) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")

    domain = None
    d = _section(raw, "domain", False)
    if d is not None:
        try:
            domain = Domain(_number(d.get("lx"), "domain.lx"), _number(d.get("ly"), "domain.ly"))
        except ValueError as e:
            raise ConfigError(str(e)) from e

    m = _section(raw, "mesh", False) or {}
    disc_kw = {}
    for key, attr, integer in (
        ("nx", "nx", True),
        ("ny", "ny", True),
        ("subsample", "subsample", True),
        ("quad_m", "quad_m", True),
        ("penalty_alpha0", "alpha0", False),
        ("penalty_alpha1", "alpha1", False),
    ):
        if m.get(key) is not None:
            disc_kw[attr] = _number(m[key], f"mesh.{key}", integer)

    p = _section(raw, "physics", False) or {}
    beta = _number(p.get("beta", 1.0), "physics.beta")
    try:
        disc = Discretization(**disc_kw)
        physics = PhysicsParams(
            _number(p.get("kappa", 1.0), "physics.kappa"),
            _number(p.get("sigma", 0.0), "physics.sigma"),
        )
        if not beta > 0:
            raise ValueError("physics.beta must be positive")
    except ValueError as e:
        raise ConfigError(str(e)) from e

    particles = []
    plist = raw.get("particles") or []
    if not isinstance(plist, list):
        raise ConfigError("'particles' must be a list")
    for i, item in enumerate(plist):
        where = f"particles[{i}]"
        if not isinstance(item, dict):
            raise ConfigError(f"{where} must be a mapping")
        unknown = set(item) - _KEYS["particle"]
        if unknown:
            raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
        try:
            h = _numbers(item.get("h_coeffs", [0.0]), f"{where}.h_coeffs")
            s = _numbers(item.get("s_coeffs", [0.0]), f"{where}.s_coeffs")
            particles.append(
                Particle(
                    (_number(item.get("x"), f"{where}.x"), _number(item.get("y"), f"{where}.y")),
                    _number(item.get("alpha", 0.0), f"{where}.alpha"),
                    _number(item.get("radius", 1.0), f"{where}.radius"),
                    BoundaryProfile(tuple(h if isinstance(h, list) else [h]), tuple(s if isinstance(s, list) else [s])),
                )
            )
        except ValueError as e:
            raise ConfigError(str(e)) from e

    softwall = None
    sw = _section(raw, "softwall", False)
    if sw is not None:
        try:
            softwall = SoftWallParams.build(
                len(particles),
                _numbers(sw.get("eps", 1.0), "softwall.eps"),
                _numbers(sw.get("sigma_pair", 0.2), "softwall.sigma_pair"),
                _numbers(sw.get("sigma_wall", 0.2), "softwall.sigma_wall"),
            )
        except ValueError as e:
            raise ConfigError(str(e)) from e

    sampler = None
    lv = _section(raw, "langevin", False)
    if lv is not None:
        try:
            kw = {"tau": _number(lv.get("tau"), "langevin.tau"), "beta": beta}
            for key in ("steps", "seed", "max_rejects"):
                if key in lv:
                    kw[key] = _number(lv[key], f"langevin.{key}", integer=True)
            if lv.get("gamma") is not None:
                kw["gamma"] = _number(lv["gamma"], "langevin.gamma")
            sampler = SamplerParams(**kw)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    fep = None
    f = _section(raw, "fep", False)
    if f is not None:
        if "protocol" not in f:
            raise ConfigError("fep.protocol is required")
        omegas = _numbers(f.get("omegas", [0.0]), "fep.omegas")
        if not isinstance(omegas, list) or not omegas:
            raise ConfigError("fep.omegas must be a nonempty list")
        if any(not -1.0 <= w <= 1.0 for w in omegas):
            raise ConfigError("fep.omegas must lie in [-1, 1]")
        bs = f.get("block_size")
        fep = FepSettings(str(f["protocol"]), tuple(omegas), None if bs is None else _number(bs, "fep.block_size", True))

    return RunConfig(domain, disc, physics, beta, tuple(particles), softwall, sampler, fep)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML: {e}") from e
    return parse_config(raw)
