"""Event-driven integrators for the regularised stochastic LogSE.

Between noise events the state follows

    du = i [Laplacian u + 2 lam u L_eps(|u|) + sum_j mu1_j g_j(u)] dt

and at each event time ``tau_k`` the Marcus map ``Phi(z_k, .)`` is applied.
Step boundaries, jump times and output times are merged into one ordered
list of breakpoints, so a jump always lands exactly on its own time.

Two steppers share that driver:

* :func:`run` uses Strang splitting. Every piece is either unitary or a
  pointwise phase, so the L2 norm is conserved to round-off.
* :func:`run_strong_oracle` is a first-order exponential Euler scheme on the
  strong form, written independently for cross-checking.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .grid import (
    Field,
    Grid,
    gradient_values,
    h1_norm,
    l2_norm,
    propagate_values,
    write_field,
)
from .marcus import phi_closed
from .noise import LevyMeasureSpec, NoisePath, moments, sample_path
from .nonlinearity import (
    NoiseChannelSet,
    SaturatedNonlinearity,
    energy,
    entropy_F,
    log_phase_rate,
    luxembourg_norm,
    validate_eps,
)

__all__ = [
    "SolverConfig",
    "Trajectory",
    "DiagnosticsSeries",
    "NumericalAbort",
    "run",
    "run_strong_oracle",
    "entropy_balance_residual",
    "entropy_Fk",
    "every_step",
    "initial_field",
    "CATALOG",
    "write_diagnostics_csv",
    "write_states",
]


class NumericalAbort(RuntimeError):
    """A non-finite value appeared; ``t`` is the time of the offending step."""

    def __init__(self, t: float, message: str = ""):
        self.t = float(t)
        super().__init__(message or f"non-finite state at t={t:.17g}")


def _default_channels() -> NoiseChannelSet:
    return NoiseChannelSet.of(SaturatedNonlinearity("photorefractive"))


@dataclass(frozen=True)
class SolverConfig:
    eps: float
    lam: float
    dt: float
    T: float
    grid: Grid
    channels: NoiseChannelSet = field(default_factory=_default_channels)
    spec: LevyMeasureSpec = field(default_factory=LevyMeasureSpec.empty)
    seed: int = 0
    sample_times: tuple[float, ...] = ()
    dispersion: bool = True
    ebal_k: int = 10

    def __post_init__(self):
        validate_eps(self.eps)
        if not math.isfinite(self.lam):
            raise ValueError("lam must be finite")
        if not (self.dt > 0 and self.T > 0):
            raise ValueError("dt and T must be positive")
        if self.dt > self.T * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} exceeds horizon T={self.T}")
        if self.spec.m != self.channels.m:
            raise ValueError(
                f"Levy measure has m={self.spec.m} but there are {self.channels.m} channels"
            )
        if self.ebal_k < 2:
            raise ValueError("ebal_k must be >= 2")
        times = tuple(float(t) for t in (self.sample_times or (0.0, self.T)))
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("sample_times must be sorted")
        if times[0] < 0 or times[-1] > self.T * (1 + 1e-12):
            raise ValueError("sample_times must lie inside [0, T]")
        object.__setattr__(self, "sample_times", times)

    @property
    def mu1(self) -> np.ndarray:
        return moments(self.spec)[0]

    def noise_path(self) -> NoisePath:
        return sample_path(self.spec, self.T, self.seed)

    def replace(self, **changes) -> "SolverConfig":
        return dataclasses.replace(self, **changes)


def every_step(T: float, dt: float) -> tuple[float, ...]:
    """Sample times on every step boundary."""
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    return tuple(float(t) for t in np.minimum(np.arange(n + 1) * dt, T))


@dataclass(frozen=True)
class DiagnosticsSeries:
    t: np.ndarray
    mass: np.ndarray
    h1: np.ndarray
    entropy_F: np.ndarray
    orlicz_V: np.ndarray
    energy: np.ndarray
    ebal: np.ndarray
    k: int

    COLUMNS = ("t", "mass", "h1", "entropyF", "orliczV", "energy")

    def header(self) -> list[str]:
        return list(self.COLUMNS) + [f"ebal_k{self.k}"]

    def rows(self):
        cols = (self.t, self.mass, self.h1, self.entropy_F, self.orlicz_V,
                self.energy, self.ebal)
        return list(zip(*cols))

    def mass_drift(self) -> float:
        """Largest relative deviation of the L2 norm from its initial value."""
        return float(np.max(np.abs(self.mass - self.mass[0])) / self.mass[0]) if self.mass[0] else 0.0


@dataclass(frozen=True)
class Trajectory:
    states: tuple[tuple[float, Field], ...]
    diagnostics: DiagnosticsSeries
    config: SolverConfig

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.states])

    @property
    def fields(self) -> list[Field]:
        return [u for _, u in self.states]

    def final(self) -> Field:
        return self.states[-1][1]


# ----------------------------------------------------------------- driver

def _breakpoints(config: SolverConfig, path: NoisePath):
    T, dt = config.T, config.dt
    tol = 1e-9 * dt
    raw = np.concatenate([
        every_step(T, dt),
        np.asarray(config.sample_times),
        path.times[path.times <= T + tol],
    ])
    raw = np.sort(np.clip(raw, 0.0, T))
    keep = [raw[0]]
    for p in raw[1:]:
        if p - keep[-1] > tol:
            keep.append(p)
    keep = np.array(keep)
    keep[-1] = T if abs(keep[-1] - T) <= tol else keep[-1]
    return keep, tol


def _integrate(config: SolverConfig, path: NoisePath, u0: Field,
               advance: Callable[[np.ndarray, float], np.ndarray]) -> Trajectory:
    if u0.grid != config.grid:
        raise ValueError(f"grid mismatch: initial field on {u0.grid}, config on {config.grid}")
    if path.T < config.T * (1 - 1e-12):
        raise ValueError(f"noise path horizon {path.T} is shorter than T={config.T}")
    if path.m != config.channels.m:
        raise ValueError(f"noise path has m={path.m}, config has {config.channels.m} channels")

    points, tol = _breakpoints(config, path)
    active = path.times <= config.T + tol
    jump_at = np.searchsorted(points, path.times[active] - tol)
    marks = path.marks[active]
    sample_at = np.searchsorted(points, np.asarray(config.sample_times) - tol)

    grid = config.grid
    values = np.array(u0.values, dtype=np.complex128)
    states: list[tuple[float, Field]] = []
    jump_ptr = 0
    sample_ptr = 0

    for i, t in enumerate(points):
        if i > 0:
            # non-finite values are caught below and reported as an abort
            with np.errstate(invalid="ignore", over="ignore"):
                values = advance(values, t - points[i - 1])
            while jump_ptr < len(jump_at) and jump_at[jump_ptr] == i:
                values = phi_closed(1.0, marks[jump_ptr], values, config.channels)
                jump_ptr += 1
            if not np.all(np.isfinite(values)):
                raise NumericalAbort(t)
        while sample_ptr < len(sample_at) and sample_at[sample_ptr] == i:
            states.append((config.sample_times[sample_ptr], Field(grid, values)))
            sample_ptr += 1

    diag = compute_diagnostics(states, config.lam, config.ebal_k)
    return Trajectory(tuple(states), diag, config)


def _drift_rate(config: SolverConfig, mu1):
    def rate(values):
        return log_phase_rate(np.abs(values), config.lam, config.eps, mu1, config.channels)
    return rate


def run(config: SolverConfig, path: NoisePath, u0: Field) -> Trajectory:
    """Strang split-step integration along a fixed noise path."""
    rate = _drift_rate(config, path.mu1)
    grid = config.grid

    if config.dispersion:
        def advance(v, h):
            v = propagate_values(grid, v, 0.5 * h)
            v = np.exp(1j * h * rate(v)) * v
            return propagate_values(grid, v, 0.5 * h)
    else:
        def advance(v, h):
            return np.exp(1j * h * rate(v)) * v

    return _integrate(config, path, u0, advance)


def run_strong_oracle(config: SolverConfig, path: NoisePath, u0: Field,
                      refine: int = 1) -> Trajectory:
    """First-order exponential Euler on the strong form with ``dt / refine`` substeps."""
    if refine < 1:
        raise ValueError("refine must be >= 1")
    rate = _drift_rate(config, path.mu1)
    grid = config.grid
    fine = config.dt / refine

    def euler(v, h):
        v = v + h * 1j * rate(v) * v
        return propagate_values(grid, v, h) if config.dispersion else v

    def advance(v, h):
        nsub = max(1, int(math.ceil(h / fine - 1e-9)))
        for _ in range(nsub):
            v = euler(v, h / nsub)
        return v

    return _integrate(config, path, u0, advance)


# ------------------------------------------------------------ diagnostics

def entropy_Fk(l, k: int):
    """Antiderivative ``int_0^l (L_{1/k}(v) + 1) dv`` in closed form."""
    a = 1.0 / k
    l = np.asarray(l, dtype=float)
    return ((l + a) * np.log(l + a) - a * math.log(a)
            - (1.0 + a * l) * np.log1p(a * l) / a + l)


def _fk(v, k: int):
    a = 1.0 / k
    return 2.0 * (1.0 - a * a) / ((a + v) * (1.0 + a * v))


def _ebal_flux(grid: Grid, values: np.ndarray, k: int) -> float:
    """``2 int f_k(|u|^2) Re(conj(u) grad u) . Im(conj(u) grad u) dx``."""
    intensity = np.abs(values) ** 2
    cu = np.conj(values)
    dot = sum(np.real(cu * g) * np.imag(cu * g) for g in gradient_values(grid, values))
    return float(2.0 * np.sum(_fk(intensity, k) * dot) * grid.cell_volume)


def _ebal_series(times, fields: Sequence[Field], k: int) -> np.ndarray:
    if not fields:
        return np.zeros(0)
    grid = fields[0].grid
    lhs = np.array([np.sum(entropy_Fk(np.abs(u.values) ** 2, k)) * grid.cell_volume
                    for u in fields])
    flux = np.array([_ebal_flux(grid, u.values, k) for u in fields])
    times = np.asarray(times, dtype=float)
    increments = 0.5 * np.diff(times) * (flux[1:] + flux[:-1])
    rhs = lhs[0] + np.concatenate([[0.0], np.cumsum(increments)])
    out = lhs - rhs
    out[0] = 0.0
    return out


def entropy_balance_residual(traj: Trajectory, k: int) -> np.ndarray:
    """Residual of the regularised entropy balance at every sample time.

    ``r(t) = int F_k(|u(t)|^2) - int F_k(|u0|^2) - int_0^t 2 int f_k Re(u* grad u) Im(u* grad u)``
    with the time integral taken by the trapezoid rule over the samples.
    Phase rotations and Marcus jumps leave ``|u|`` untouched, so only
    dispersion feeds the balance.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    return _ebal_series(traj.times, traj.fields, k)


def compute_diagnostics(states, lam: float, k: int) -> DiagnosticsSeries:
    times = np.array([t for t, _ in states])
    fields = [u for _, u in states]
    return DiagnosticsSeries(
        t=times,
        mass=np.array([l2_norm(u) for u in fields]),
        h1=np.array([h1_norm(u) for u in fields]),
        entropy_F=np.array([entropy_F(u) for u in fields]),
        orlicz_V=np.array([luxembourg_norm(u) for u in fields]),
        energy=np.array([energy(u, lam) for u in fields]),
        ebal=_ebal_series(times, fields, k),
        k=k,
    )


# --------------------------------------------------------- initial data

def _check_decay(grid: Grid, values: np.ndarray, name: str):
    peak = np.max(np.abs(values))
    edge = max(np.max(np.abs(np.take(values, [0], axis=ax))) for ax in range(grid.d))
    if peak > 0 and edge > 1e-3 * peak:
        raise ValueError(f"{name} profile has not decayed at the box edge ({edge:.3g} of {peak:.3g})")


def _gaussian(grid, amp=1.0, width=1.0, **_):
    return amp * np.exp(-grid.radius**2 / (2.0 * width**2))


def _sech(grid, amp=1.0, width=1.0, **_):
    return amp / np.cosh(grid.radius / width)


def _modulated(grid, amp=1.0, width=1.0, k0=1.0, **_):
    return _gaussian(grid, amp, width) * np.exp(1j * k0 * grid.coords[0])


CATALOG = {"gaussian": _gaussian, "sech": _sech, "modulated": _modulated}


def initial_field(grid: Grid, kind: str = "gaussian", **params) -> Field:
    """Built-in initial profile centred in the box.

    ``gaussian``: ``amp exp(-|x|^2 / (2 width^2))``; with ``width = lam^-1/2``
    this is the stationary Gaussian profile for ``lam > 0``.
    ``sech``: ``amp sech(|x| / width)``.
    ``modulated``: the Gaussian times ``exp(i k0 x_1)``.
    """
    if kind not in CATALOG:
        raise ValueError(f"unknown initial profile {kind!r}; choose from {sorted(CATALOG)}")
    unknown = set(params) - {"amp", "width", "k0"}
    if unknown:
        raise ValueError(f"unknown profile parameters {sorted(unknown)}")
    if params.get("width", 1.0) <= 0:
        raise ValueError("width must be positive")
    values = CATALOG[kind](grid, **params)
    _check_decay(grid, values, kind)
    return Field(grid, values)


# ---------------------------------------------------------------- output

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_diagnostics_csv(path, diag: DiagnosticsSeries) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(diag.header())
        for row in diag.rows():
            writer.writerow([_fmt(v) for v in row])


def write_states(outdir, traj: Trajectory) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for idx, (_, u) in enumerate(traj.states):
        target = outdir / f"state_t{idx}.cfld"
        write_field(target, u)
        written.append(target)
    return written
