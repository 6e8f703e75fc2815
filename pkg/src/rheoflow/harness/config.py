"""Flat `key = value` run configuration.

One assignment per line, `#` starts a comment, values never span lines.
Unknown keys, duplicates, missing required keys and out-of-range values are
all reported with their line numbers so a config diff review catches every
mistake. Example:

    kmax               = 1
    density_resolution = 16
    dt                 = 1e-3
    t_final            = 0.1
    alpha              = 1e-4
    gamma              = 2.0
    potential          = power_law
    nu                 = 0.2
    p                  = 2.0
    rho_min            = 0.5
    rho_max            = 2.0
    u0                 = single_mode
    u0_k               = 1,0,0
    u0_w               = 0,1,0
"""
from __future__ import annotations

import os

from ..errors import ConfigError
from ..galerkin import InitialDensity, InitialVelocity, SimConfig
from ..rheology import ConvexPotentialSpec

_REQUIRED = ("kmax", "density_resolution", "dt", "t_final", "alpha", "gamma",
             "potential", "rho_min", "rho_max")
_OPTIONAL = ("quad_resolution", "picard_tol", "picard_max_iter",
             "snapshot_every", "energy_excess_tol", "perturb_delta",
             "perturb_index", "u0", "rho0")


def _strip(line: str) -> str:
    cut = line.find("#")
    return (line if cut < 0 else line[:cut]).strip()


def _scan(text: str, source: str) -> dict[str, tuple[str, int]]:
    entries: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected `key = value`")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"{source}:{lineno}: empty key or value")
        if key in entries:
            raise ConfigError(
                f"{source}:{lineno}: duplicate key {key!r} "
                f"(first assigned on line {entries[key][1]})")
        entries[key] = (value, lineno)
    return entries


class _Entries:
    """Typed consumption of scanned entries; leftovers are unknown keys."""

    def __init__(self, entries: dict[str, tuple[str, int]], source: str):
        self.entries = entries
        self.source = source

    def _raw(self, key: str, default):
        if key not in self.entries:
            if default is _MISSING:
                raise ConfigError(f"{self.source}: missing required key {key!r}")
            return None
        return self.entries.pop(key)

    def _convert(self, key: str, conv, kind: str, default):
        item = self._raw(key, default)
        if item is None:
            return default
        value, lineno = item
        try:
            return conv(value)
        except ValueError:
            raise ConfigError(
                f"{self.source}:{lineno}: key {key!r}: "
                f"cannot parse {value!r} as {kind}") from None

    def take_int(self, key: str, default=None):
        return self._convert(key, int, "an integer", default)

    def take_float(self, key: str, default=None):
        return self._convert(key, float, "a number", default)

    def take_word(self, key: str, choices: tuple[str, ...], default=None):
        item = self._raw(key, default)
        if item is None:
            return default
        value, lineno = item
        if value not in choices:
            raise ConfigError(
                f"{self.source}:{lineno}: key {key!r}: {value!r} is not one "
                f"of {', '.join(choices)}")
        return value

    def take_triple(self, key: str, conv, kind: str, default=None):
        item = self._raw(key, default)
        if item is None:
            return default
        value, lineno = item
        parts = [p.strip() for p in value.split(",")]
        try:
            if len(parts) != 3:
                raise ValueError
            return tuple(conv(p) for p in parts)
        except ValueError:
            raise ConfigError(
                f"{self.source}:{lineno}: key {key!r}: expected three "
                f"comma-separated {kind}, got {value!r}") from None

    def reject_leftovers(self):
        if self.entries:
            key, (_, lineno) = next(iter(self.entries.items()))
            raise ConfigError(f"{self.source}:{lineno}: unknown key {key!r}")


class _Missing:
    pass


_MISSING = _Missing()


def parse_config_text(text: str, source: str = "<config>") -> SimConfig:
    """Parse config text; every error is a ConfigError naming its line."""
    e = _Entries(_scan(text, source), source)

    kind = e.take_word("potential", ("power_law", "bingham"), _MISSING)
    if kind == "power_law":
        potential = _build(source, ConvexPotentialSpec.power_law,
                           nu=e.take_float("nu", _MISSING),
                           p=e.take_float("p", _MISSING))
    else:
        potential = _build(source, ConvexPotentialSpec.bingham,
                           tau0=e.take_float("tau0", _MISSING),
                           mu=e.take_float("mu", _MISSING))

    u0_kind = e.take_word("u0", ("rest", "single_mode"), "rest")
    if u0_kind == "rest":
        u0 = InitialVelocity.rest()
    else:
        u0 = _build(source, InitialVelocity.single_mode,
                    k=e.take_triple("u0_k", int, "integers", _MISSING),
                    w=e.take_triple("u0_w", float, "numbers", _MISSING))

    rho0_kind = e.take_word("rho0", ("constant", "cosine"), None)
    if rho0_kind == "constant":
        rho0 = _build(source, InitialDensity.constant,
                      value=e.take_float("rho0_value", _MISSING))
    elif rho0_kind == "cosine":
        rho0 = _build(source, InitialDensity.cosine,
                      value=e.take_float("rho0_value", _MISSING),
                      amplitude=e.take_float("rho0_amplitude", _MISSING))
    else:
        rho0 = None  # SimConfig fills in the mid-bounds constant

    kwargs = dict(
        kmax=e.take_int("kmax", _MISSING),
        density_resolution=e.take_int("density_resolution", _MISSING),
        dt=e.take_float("dt", _MISSING),
        t_final=e.take_float("t_final", _MISSING),
        alpha=e.take_float("alpha", _MISSING),
        gamma=e.take_float("gamma", _MISSING),
        potential=potential,
        rho_min=e.take_float("rho_min", _MISSING),
        rho_max=e.take_float("rho_max", _MISSING),
        u0=u0,
        rho0=rho0,
    )
    for key, taker in (("quad_resolution", e.take_int),
                       ("picard_tol", e.take_float),
                       ("picard_max_iter", e.take_int),
                       ("snapshot_every", e.take_int),
                       ("energy_excess_tol", e.take_float),
                       ("perturb_delta", e.take_float),
                       ("perturb_index", e.take_int)):
        value = taker(key, None)
        if value is not None:
            kwargs[key] = value

    e.reject_leftovers()
    return _build(source, SimConfig, **kwargs)


def _build(source: str, ctor, **kwargs):
    # range/consistency violations surface as ValueError in the dataclasses
    try:
        return ctor(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str | os.PathLike) -> SimConfig:
    path = os.fspath(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config_text(text, source=path)
