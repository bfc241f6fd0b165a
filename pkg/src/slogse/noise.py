"""Compensated Poisson random measures on the unit ball of R^m.

Only jumps with ``|z| > delta_cut`` are simulated.  The discarded small
jumps are summarised by :attr:`LevyMeasureSpec.truncation_bound`.

Paths are drawn from ``numpy.random.Philox`` (a counter-based generator),
so a given ``(spec, T, seed)`` yields the same path on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "LevyMeasureSpec",
    "NoisePath",
    "NoiseFormatError",
    "moments",
    "sample_path",
    "empirical_moments",
    "write_path",
    "read_path",
    "rng_for",
]


class NoiseFormatError(ValueError):
    """Raised for malformed NPATH1 files."""


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def sphere_area(m: int) -> float:
    """Surface measure of the unit sphere in R^m (2 for m = 1)."""
    return 2.0 * math.pi ** (m / 2) / math.gamma(m / 2)


@dataclass(frozen=True)
class LevyMeasureSpec:
    """A Levy measure ``nu`` on ``B = {0 < |z| <= 1}``.

    ``atomic``: finitely many atoms ``(z, weight)``.
    ``radial_power``: isotropic density ``c r^(-1-alpha) dr dsigma`` in polar
    coordinates, with ``dsigma`` the surface measure of the unit sphere
    (counting measure on ``{-1, +1}`` when ``m = 1``), truncated to
    ``delta_cut < r <= 1``.
    """

    kind: str = "atomic"
    m: int = 1
    atoms: tuple[tuple[tuple[float, ...], float], ...] = ()
    alpha: float = 1.0
    c: float = 1.0
    delta_cut: float = 0.0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 0.0 <= self.delta_cut < 1.0:
            raise ValueError(f"delta_cut must lie in [0, 1), got {self.delta_cut}")
        if self.kind == "atomic":
            atoms = tuple((tuple(float(v) for v in z), float(w)) for z, w in self.atoms)
            for z, w in atoms:
                if len(z) != self.m:
                    raise ValueError(f"atom {z} has {len(z)} components, expected m={self.m}")
                norm = math.sqrt(sum(v * v for v in z))
                if not 0 < norm <= 1 + 1e-12:
                    raise ValueError(f"atom {z} lies outside 0 < |z| <= 1")
                if w < 0 or not math.isfinite(w):
                    raise ValueError(f"atom weight must be finite and >= 0, got {w}")
            object.__setattr__(self, "atoms", atoms)
        elif self.kind == "radial_power":
            if not 0.0 < self.alpha < 2.0:
                raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
            if self.c <= 0:
                raise ValueError(f"intensity c must be positive, got {self.c}")
            if self.delta_cut <= 0:
                raise ValueError("radial_power needs delta_cut > 0 for a finite jump rate")
        else:
            raise ValueError(f"unknown Levy measure kind {self.kind!r}")

    @classmethod
    def empty(cls, m: int = 1) -> "LevyMeasureSpec":
        return cls(kind="atomic", m=m, atoms=())

    def _kept_atoms(self):
        return [(np.array(z), w) for z, w in self.atoms
                if np.linalg.norm(z) > self.delta_cut and w > 0]

    @property
    def truncation_bound(self) -> float:
        """``int_{|z| <= delta_cut} |z|^2 nu(dz)``, the size of what is not simulated."""
        if self.kind == "atomic":
            return float(sum(w * float(np.dot(z, z)) for z, w in
                             ((np.array(z), w) for z, w in self.atoms)
                             if np.linalg.norm(z) <= self.delta_cut))
        a = self.alpha
        return sphere_area(self.m) * self.c * self.delta_cut ** (2 - a) / (2 - a)


def moments(spec: LevyMeasureSpec):
    """``(mu1, mu2, total_mass)`` of the truncated measure."""
    if spec.kind == "atomic":
        kept = spec._kept_atoms()
        mu1 = np.zeros(spec.m)
        mu2 = 0.0
        mass = 0.0
        for z, w in kept:
            mu1 += w * z
            mu2 += w * float(np.dot(z, z))
            mass += w
        return mu1, float(mu2), float(mass)
    a, dlt = spec.alpha, spec.delta_cut
    area = sphere_area(spec.m) * spec.c
    mass = area * (dlt ** (-a) - 1.0) / a
    mu2 = area * (1.0 - dlt ** (2.0 - a)) / (2.0 - a)
    return np.zeros(spec.m), float(mu2), float(mass)


@dataclass(frozen=True)
class NoisePath:
    """One realisation: sorted jump times in ``(0, T]`` and their marks."""

    T: float
    times: np.ndarray
    marks: np.ndarray
    mu1: np.ndarray
    mu2: float
    seed: int
    m: int = field(default=1)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        marks = np.asarray(self.marks, dtype=float).reshape(len(times), self.m)
        if len(times) and (times[0] <= 0 or times[-1] > self.T or np.any(np.diff(times) <= 0)):
            raise ValueError("event times must be strictly increasing inside (0, T]")
        for arr in (times, marks):
            arr.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "marks", marks)
        object.__setattr__(self, "mu1", np.asarray(self.mu1, dtype=float).reshape(self.m))

    def __len__(self):
        return len(self.times)

    def __eq__(self, other):
        if not isinstance(other, NoisePath):
            return NotImplemented
        return (self.T == other.T and self.seed == other.seed and self.m == other.m
                and self.mu2 == other.mu2 and np.array_equal(self.mu1, other.mu1)
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.marks, other.marks))

    __hash__ = None

    @classmethod
    def empty(cls, T: float, m: int = 1, seed: int = 0) -> "NoisePath":
        return cls(T, np.zeros(0), np.zeros((0, m)), np.zeros(m), 0.0, seed, m)

    def sum_sq_marks(self) -> float:
        return float(np.sum(self.marks**2))


def _sample_marks(spec: LevyMeasureSpec, rng: np.random.Generator, count: int):
    if count == 0:
        return np.zeros((0, spec.m))
    if spec.kind == "atomic":
        kept = spec._kept_atoms()
        weights = np.array([w for _, w in kept])
        idx = rng.choice(len(kept), size=count, p=weights / weights.sum())
        return np.array([kept[i][0] for i in idx]).reshape(count, spec.m)
    a, dlt = spec.alpha, spec.delta_cut
    u = rng.random(count)
    # inverse CDF of r^(-1-alpha) on (delta_cut, 1]
    top = dlt ** (-a)
    r = (top - u * (top - 1.0)) ** (-1.0 / a)
    r = np.minimum(r, 1.0)
    direction = rng.standard_normal((count, spec.m))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return r[:, None] * direction


def sample_path(spec: LevyMeasureSpec, T: float, seed: int) -> NoisePath:
    """Draw a path of the truncated Poisson random measure on ``(0, T]``."""
    if not T > 0:
        raise ValueError(f"horizon must be positive, got {T}")
    mu1, mu2, mass = moments(spec)
    rng = rng_for(seed)
    count = int(rng.poisson(mass * T)) if mass > 0 else 0
    # T * (1 - U) lies in (0, T]
    times = np.sort(T * (1.0 - rng.random(count)))
    marks = _sample_marks(spec, rng, count)
    return NoisePath(float(T), times, marks, mu1, mu2, int(seed), spec.m)


def empirical_moments(paths: Sequence[NoisePath]):
    """Monte Carlo mean event count and mean ``sum |z_k|^2`` with standard errors.

    Returns ``(mean_count, mean_sq, se_count, se_sq)``.
    """
    if len(paths) < 100:
        raise ValueError(f"need at least 100 paths, got {len(paths)}")
    counts = np.array([len(p) for p in paths], dtype=float)
    sq = np.array([p.sum_sq_marks() for p in paths])
    n = len(paths)
    return (float(counts.mean()), float(sq.mean()),
            float(counts.std(ddof=1) / math.sqrt(n)), float(sq.std(ddof=1) / math.sqrt(n)))


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_path(path, noise: NoisePath) -> None:
    """Write the NPATH1 text format."""
    header = (f"NPATH1 T={_fmt(noise.T)} seed={noise.seed} m={noise.m} "
              f"mu1={','.join(_fmt(v) for v in noise.mu1)} mu2={_fmt(noise.mu2)}")
    lines = [header]
    for tau, z in zip(noise.times, noise.marks):
        lines.append(",".join([_fmt(tau)] + [_fmt(v) for v in z]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_path(path) -> NoisePath:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("NPATH1 "):
        raise NoiseFormatError(f"{path}: missing NPATH1 header")
    try:
        fields = dict(tok.split("=", 1) for tok in text[0].split()[1:])
        T = float(fields["T"])
        seed = int(fields["seed"])
        m = int(fields["m"])
        mu1 = np.array([float(v) for v in fields["mu1"].split(",")])
        mu2 = float(fields["mu2"])
    except (KeyError, ValueError) as exc:
        raise NoiseFormatError(f"{path}: bad header: {exc}") from None
    rows = []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != m + 1:
            raise NoiseFormatError(f"{path}:{lineno}: expected {m + 1} values, got {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise NoiseFormatError(f"{path}:{lineno}: {exc}") from None
    data = np.array(rows, dtype=float).reshape(-1, m + 1)
    return NoisePath(T, data[:, 0], data[:, 1:], mu1, mu2, seed, m)
