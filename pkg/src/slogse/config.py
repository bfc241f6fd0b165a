"""Flat ``key = value`` run configuration with ``[section]`` headers.

Recognised keys (defaults in parentheses; keys without a default are required)::

    [grid]     d, n, ell
    [solver]   eps, lambda, dt, T, seed (0), samples (11), dispersion (true),
               ebal_k (10)
    [initial]  kind (gaussian), amp (1), width (1), k0 (1), file ()
    [noise]    kind (none) | atomic | radial_power, m (1),
               atoms (``z1,..,zm:weight; ...``), alpha (1), c (1),
               delta_cut (0), T ()
    [channels] families (photorefractive), rho (1), cval (0)
    [sweep]    paths (8), radius (ell/8), eps_list ()
    [output]   states (false), plots (true)

``#`` starts a comment.  Unknown sections or keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import Field, make_grid, read_field
from .noise import LevyMeasureSpec
from .nonlinearity import NoiseChannelSet, SaturatedNonlinearity
from .solver import SolverConfig, initial_field

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "load_noise", "KEYS"]

KEYS = {
    "grid": {"d", "n", "ell"},
    "solver": {"eps", "lambda", "dt", "T", "seed", "samples", "dispersion", "ebal_k"},
    "initial": {"kind", "amp", "width", "k0", "file"},
    "noise": {"kind", "m", "atoms", "alpha", "c", "delta_cut", "T"},
    "channels": {"families", "rho", "cval"},
    "sweep": {"paths", "radius", "eps_list"},
    "output": {"states", "plots"},
}


class ConfigError(ValueError):
    """Malformed configuration; the message names the line or key."""


@dataclass
class _Entry:
    value: str
    line: int


def parse_config(text: str, source: str = "<config>") -> dict[str, dict[str, _Entry]]:
    """Split the text into ``{section: {key: entry}}`` with line numbers."""
    sections: dict[str, dict[str, _Entry]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{source}:{lineno}: malformed section header {raw.strip()!r}")
            current = line[1:-1].strip()
            if current not in KEYS:
                raise ConfigError(f"{source}:{lineno}: unknown section [{current}]")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if current is None:
            raise ConfigError(f"{source}:{lineno}: key outside of any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS[current]:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}' in [{current}]")
        if key in sections[current]:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}' in [{current}]")
        sections[current][key] = _Entry(value, lineno)
    return sections


class _Reader:
    def __init__(self, sections, source):
        self.sections = sections
        self.source = source

    def has(self, section, key):
        return key in self.sections.get(section, {})

    def raw(self, section, key, default=None):
        entry = self.sections.get(section, {}).get(key)
        if entry is None:
            if default is None:
                raise ConfigError(f"{self.source}: missing required key '{key}' in [{section}]")
            return default, None
        return entry.value, entry.line

    def get(self, section, key, conv, default=None, check=None, why=""):
        value, line = self.raw(section, key, default)
        if line is None and not isinstance(value, str):
            return value
        where = f"{self.source}:{line}" if line else self.source
        try:
            out = conv(value)
        except ValueError:
            raise ConfigError(f"{where}: cannot parse {key} = {value!r}") from None
        if check is not None and not check(out):
            raise ConfigError(f"{where}: invalid {key} = {value!r}; {why}")
        return out


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(text)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _atoms(text: str, m: int):
    atoms = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        z, _, w = chunk.partition(":")
        if not w:
            raise ValueError(chunk)
        zs = tuple(_floats(z))
        if len(zs) != m:
            raise ValueError(chunk)
        atoms.append((zs, float(w)))
    return tuple(atoms)


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI command needs, resolved from one file."""

    solver: SolverConfig
    u0: Field
    n_paths: int
    radius: float
    eps_list: tuple[float, ...]
    write_states: bool
    plots: bool
    noise_T: float


def _grid(r: _Reader):
    d = r.get("grid", "d", int, check=lambda v: v in (1, 2, 3), why="must be between 1 and 3")
    n = r.get("grid", "n", int, check=lambda v: v >= 8 and not v & (v - 1),
              why="must be a power of two >= 8")
    ell = r.get("grid", "ell", float, check=lambda v: np.isfinite(v) and v > 0, why="must be > 0")
    return make_grid(d, n, ell)


def _channels(r: _Reader, m: int) -> NoiseChannelSet:
    fams = [f.strip() for f in r.get("channels", "families", str, "photorefractive").split(",")]
    rhos = r.get("channels", "rho", _floats, "1")
    cvals = r.get("channels", "cval", _floats, "0")

    def pick(vals, i):
        return vals[i] if len(vals) > 1 else vals[0]

    if len(fams) == 1 and m > 1:
        fams = fams * m
    if len(fams) != m:
        raise ConfigError(f"{r.source}: [channels] lists {len(fams)} families but noise m={m}")
    try:
        return NoiseChannelSet(tuple(
            SaturatedNonlinearity(f, rho=pick(rhos, i), cval=pick(cvals, i))
            for i, f in enumerate(fams)))
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{r.source}: [channels] {exc}") from None


def _spec(r: _Reader) -> LevyMeasureSpec:
    kind = r.get("noise", "kind", str, "none")
    m = r.get("noise", "m", int, "1", check=lambda v: v >= 1, why="must be >= 1")
    if kind == "none":
        return LevyMeasureSpec.empty(m)
    try:
        if kind == "atomic":
            atoms = r.get("noise", "atoms", lambda t: _atoms(t, m))
            delta = r.get("noise", "delta_cut", float, "0")
            return LevyMeasureSpec("atomic", m, atoms, delta_cut=delta)
        if kind == "radial_power":
            return LevyMeasureSpec(
                "radial_power", m,
                alpha=r.get("noise", "alpha", float, "1"),
                c=r.get("noise", "c", float, "1"),
                delta_cut=r.get("noise", "delta_cut", float),
            )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{r.source}: [noise] {exc}") from None
    _, line = r.raw("noise", "kind")
    raise ConfigError(f"{r.source}:{line}: unknown noise kind {kind!r}")


def _reader(path: Path) -> _Reader:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return _Reader(parse_config(text, str(path)), str(path))


def _noise_T(r: _Reader):
    if r.has("noise", "T"):
        return r.get("noise", "T", float, check=lambda v: v > 0, why="must be > 0")
    return None


def load_noise(path) -> tuple[LevyMeasureSpec, float]:
    """Levy measure and horizon (``[noise] T``, else ``[solver] T``)."""
    r = _reader(Path(path))
    spec = _spec(r)
    T = _noise_T(r)
    if T is None:
        T = r.get("solver", "T", float, check=lambda v: v > 0, why="must be > 0")
    return spec, T


def load_config(path) -> RunConfig:
    path = Path(path)
    r = _reader(path)
    grid = _grid(r)
    spec = _spec(r)
    channels = _channels(r, spec.m)
    noise_T = _noise_T(r)

    eps = r.get("solver", "eps", float, check=lambda v: 0 < v < 1, why="eps must lie in (0, 1)")
    lam = r.get("solver", "lambda", float, check=np.isfinite, why="must be finite")
    dt = r.get("solver", "dt", float, check=lambda v: v > 0, why="must be > 0")
    T = r.get("solver", "T", float, check=lambda v: v >= dt, why="must be >= dt")
    seed = r.get("solver", "seed", int, "0", check=lambda v: 0 <= v < 2**64, why="must be a u64")
    nsamp = r.get("solver", "samples", int, "11", check=lambda v: v >= 2, why="must be >= 2")
    dispersion = r.get("solver", "dispersion", _bool, "true")
    ebal_k = r.get("solver", "ebal_k", int, "10", check=lambda v: v >= 2, why="must be >= 2")

    try:
        solver = SolverConfig(eps=eps, lam=lam, dt=dt, T=T, grid=grid, channels=channels,
                              spec=spec, seed=seed,
                              sample_times=tuple(np.linspace(0.0, T, nsamp)),
                              dispersion=dispersion, ebal_k=ebal_k)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    if r.has("initial", "file"):
        file, _ = r.raw("initial", "file")
        target = (path.parent / file) if not Path(file).is_absolute() else Path(file)
        try:
            u0 = read_field(target)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{path}: initial field: {exc}") from None
        if u0.grid != grid:
            raise ConfigError(f"{path}: initial field grid {u0.grid} differs from [grid]")
    else:
        kind = r.get("initial", "kind", str, "gaussian")
        params = {k: r.get("initial", k, float) for k in ("amp", "width", "k0")
                  if r.has("initial", k)}
        try:
            u0 = initial_field(grid, kind, **params)
        except ValueError as exc:
            raise ConfigError(f"{path}: [initial] {exc}") from None

    n_paths = r.get("sweep", "paths", int, "8", check=lambda v: v >= 1, why="must be >= 1")
    radius = r.get("sweep", "radius", float, repr(grid.ell / 8), check=lambda v: v > 0,
                   why="must be > 0")
    eps_list = tuple(r.get("sweep", "eps_list", _floats, ""))
    return RunConfig(
        solver=solver,
        u0=u0,
        n_paths=n_paths,
        radius=radius,
        eps_list=eps_list,
        write_states=r.get("output", "states", _bool, "false"),
        plots=r.get("output", "plots", _bool, "true"),
        noise_T=noise_T if noise_T is not None else T,
    )
