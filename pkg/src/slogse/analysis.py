"""Convergence studies and the randomized inequality scanner.

Scans with explicit constants count violations directly.  Scans whose
bounds hide a constant split the sample 50/50 with a fixed sub-seed: the
constant is calibrated as the largest observed ratio on one half and the
other half must satisfy the bound with twice that constant.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import Field, l2_norm, localized_l2
from .marcus import compensator_H, jump_increment_G, phi_closed
from .noise import NoisePath, sample_path
from .nonlinearity import (
    NoiseChannelSet,
    SaturatedNonlinearity,
    _l_eps_raw,
    k_gtilde_estimate,
)
from .solver import SolverConfig, Trajectory, run, run_strong_oracle

__all__ = [
    "SweepReport",
    "ScanReport",
    "ConvergenceTable",
    "LEMMAS",
    "lip_phi_constant",
    "EXACT_LEMMAS",
    "cauchy_sweep",
    "pair_distance",
    "nonlinearity_convergence",
    "inequality_scan",
    "mild_strong_crosscheck",
    "fit_order",
    "worker_count",
    "write_sweep_csv",
    "write_scan_csv",
]

SHARD_SIZE = 65536
MODULUS_RANGE = (1e-8, 1e3)
EXPONENTS = (0.25, 0.5, 0.75)


def worker_count() -> int:
    """Thread cap from ``SLOGSE_THREADS`` (default: CPU count)."""
    raw = os.environ.get("SLOGSE_THREADS")
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"SLOGSE_THREADS must be an integer, got {raw!r}") from None
        if value < 1:
            raise ValueError("SLOGSE_THREADS must be >= 1")
        return value
    return os.cpu_count() or 1


def _map(func, items):
    items = list(items)
    workers = min(worker_count(), len(items)) or 1
    if workers == 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def fit_order(x, y):
    """Least-squares slope of ``log y`` against ``log x`` and its RMS residual."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return math.nan, math.nan
    lx, ly = np.log(x[ok]), np.log(y[ok])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = float(np.sqrt(np.mean((ly - (slope * lx + intercept)) ** 2)))
    return float(slope), resid


# ------------------------------------------------------------ eps sweep

@dataclass(frozen=True)
class SweepReport:
    eps_list: tuple[float, ...]
    distances: np.ndarray
    R: float
    order: float
    residual: float
    per_path: np.ndarray
    h1_max: np.ndarray
    entropy_sup: np.ndarray
    seeds: tuple[int, ...] = ()

    def __post_init__(self):
        if np.any(np.asarray(self.distances) < 0):
            raise ValueError("distances must be non-negative")

    @property
    def gaps(self) -> np.ndarray:
        e = np.asarray(self.eps_list)
        return e[:-1] - e[1:]

    def monotone(self, band: float = 0.10) -> bool:
        """Non-increasing up to a relative tolerance ``band``."""
        d = self.distances
        return bool(np.all(d[1:] <= (1.0 + band) * d[:-1]))

    @staticmethod
    def spread(values) -> float:
        """``(max - min) / max`` of a positive series."""
        values = np.abs(np.asarray(values, dtype=float))
        return float((values.max() - values.min()) / values.max()) if values.max() > 0 else 0.0


def pair_distance(a: Trajectory, b: Trajectory, R: float) -> float:
    """``max_t ||zeta_R (u_a(t) - u_b(t))||_L2`` over shared sample times."""
    if a.config.grid != b.config.grid:
        raise ValueError("trajectories live on different grids")
    if not np.array_equal(a.times, b.times):
        raise ValueError("trajectories have different sample times")
    return max(localized_l2(ua - ub, R) for ua, ub in zip(a.fields, b.fields))


def _ensemble_seeds(seed: int, n_paths: int) -> tuple[int, ...]:
    if n_paths == 1:
        return (int(seed),)
    children = np.random.SeedSequence(int(seed)).spawn(n_paths)
    return tuple(int(c.generate_state(1, np.uint64)[0]) for c in children)


def cauchy_sweep(base: SolverConfig, eps_list: Sequence[float], u0: Field,
                 R: float | None = None, n_paths: int = 1,
                 paths: Sequence[NoisePath] | None = None) -> SweepReport:
    """Run one trajectory per ``(eps, path)`` and compare consecutive eps.

    Every eps shares the same noise paths and ``u0``.  ``D`` for a pair is
    the ensemble mean of :func:`pair_distance`.
    """
    eps_list = tuple(float(e) for e in eps_list)
    if len(eps_list) < 4:
        raise ValueError("need at least four eps values")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    R = base.grid.ell / 8 if R is None else float(R)
    if paths is None:
        seeds = _ensemble_seeds(base.seed, n_paths)
        paths = [sample_path(base.spec, base.T, s) for s in seeds]
    else:
        seeds = tuple(p.seed for p in paths)
    if len({p.m for p in paths}) > 1:
        raise ValueError("paths disagree on mark dimension")

    jobs = [(e, p) for p in range(len(paths)) for e in range(len(eps_list))]

    def member(job):
        e, p = job
        return run(base.replace(eps=eps_list[e], seed=paths[p].seed), paths[p], u0)

    results = _map(member, jobs)
    trajs = {job: tr for job, tr in zip(jobs, results)}
    per_path = np.array([
        [pair_distance(trajs[(e, p)], trajs[(e + 1, p)], R) for e in range(len(eps_list) - 1)]
        for p in range(len(paths))
    ])
    distances = per_path.mean(axis=0)
    h1_max = np.array([np.mean([trajs[(e, p)].diagnostics.h1.max() for p in range(len(paths))])
                       for e in range(len(eps_list))])
    ent_sup = np.array([np.mean([np.abs(trajs[(e, p)].diagnostics.entropy_F).max()
                                 for p in range(len(paths))])
                        for e in range(len(eps_list))])
    gaps = np.asarray(eps_list[:-1]) - np.asarray(eps_list[1:])
    order, resid = fit_order(gaps, distances)
    return SweepReport(eps_list, distances, R, order, resid, per_path, h1_max, ent_sup,
                       tuple(seeds))


# ------------------------------------------------- nonlinearity limit

@dataclass(frozen=True)
class ConvergenceTable:
    eps: np.ndarray
    errors: np.ndarray
    order: float
    residual: float
    delta: float
    c_delta: float
    envelope_violations: int


def nonlinearity_convergence(u: Field, eps_list: Sequence[float], delta: float = 0.5,
                             c_delta: float | None = None) -> ConvergenceTable:
    """L2 error of ``u L_eps(|u|)`` against ``u log|u|`` for each eps.

    Also checks the pointwise envelope
    ``|u L_eps(u) - u log|u|| <= eps + C(delta) eps^delta |u|^(1+delta)``.
    Without an explicit ``c_delta`` the constant is the smallest one that
    makes the envelope hold on the grid at the largest eps; the remaining
    eps values are then checked against it.
    """
    eps = np.asarray(eps_list, dtype=float)
    amp = np.abs(u.values)
    logs = np.zeros_like(amp)
    pos = amp > 0
    logs[pos] = np.log(amp[pos])
    vol = u.grid.cell_volume

    diffs = [np.abs(u.values) * np.abs(_l_eps_raw(amp, e) - logs) for e in eps]
    errors = np.array([math.sqrt(np.sum(d**2) * vol) for d in diffs])

    weight = amp ** (1.0 + delta)
    if c_delta is None:
        mask = weight > 0
        excess = np.maximum(diffs[0][mask] - eps[0], 0.0) / (eps[0] ** delta * weight[mask])
        c_delta = float(excess.max()) if excess.size else 0.0
    violations = 0
    for e, d in zip(eps, diffs):
        bound = e + c_delta * e**delta * weight
        violations += int(np.sum(d > bound * (1 + 1e-12)))
    order, resid = fit_order(eps, errors)
    return ConvergenceTable(eps, errors, order, resid, delta, c_delta, violations)


# ------------------------------------------------------ mild vs strong

def mild_strong_crosscheck(config: SolverConfig, path: NoisePath, u0: Field,
                           refine: int = 8) -> float:
    """``max_t ||run - run_strong_oracle||_L2`` over the sample times."""
    a = run(config, path, u0)
    b = run_strong_oracle(config, path, u0, refine=refine)
    return max(l2_norm(ua - ub) for ua, ub in zip(a.fields, b.fields))


# ------------------------------------------------- inequality scanner

@dataclass
class _Terms:
    """Per-sample pieces of ``lhs <= exact + K * scaled``."""

    lhs: np.ndarray
    exact: np.ndarray
    scaled: np.ndarray | None
    bucket: np.ndarray | None
    params: dict


def _complex(rng, n):
    lo, hi = np.log(MODULUS_RANGE[0]), np.log(MODULUS_RANGE[1])
    r = np.exp(rng.uniform(lo, hi, n))
    return r * np.exp(1j * rng.uniform(0.0, 2 * np.pi, n))


def _eps(rng, n):
    return np.exp(rng.uniform(np.log(1e-6), 0.0, n))


def _ulog(u):
    a = np.abs(u)
    return u * np.log(a)


def _ule(u, eps):
    return u * _l_eps_raw(np.abs(u), eps)


def _logplus(x):
    out = np.zeros_like(x)
    big = x > 1
    out[big] = np.log(x[big])
    return out


def _scan_a(rng, n):
    u, e = _complex(rng, n), _eps(rng, n)
    r = np.abs(u)
    le = _l_eps_raw(r, e)
    # two claims folded into one ratio test
    lhs = np.maximum(np.abs(le) / np.abs(np.log(e)), np.abs(r * le) / np.abs(r * np.log(r)))
    return _Terms(lhs, np.ones(n), None, None, {"u": u, "eps": e})


def _scan_b(rng, n):
    u1, u2, e = _complex(rng, n), _complex(rng, n), _eps(rng, n)
    lhs = np.abs(_ule(u1, e) - _ule(u2, e))
    rhs = (1.0 + np.log(1.0 / e)) * np.abs(u1 - u2)
    return _Terms(lhs, rhs, None, None, {"u1": u1, "u2": u2, "eps": e})


def _scan_quasi(rng, n):
    u, v = _complex(rng, n), _complex(rng, n)
    lhs = np.abs(np.imag((_ulog(u) - _ulog(v)) * np.conj(u - v)))
    return _Terms(lhs, np.abs(u - v) ** 2, None, None, {"u": u, "v": v})


def _c_lhs(u1, u2, e, m):
    return np.abs(np.imag(np.conj(u1 - u2) * (_ule(u1, e) - _ule(u2, m))))


def _scan_c_diag(rng, n):
    u1, u2, e = _complex(rng, n), _complex(rng, n), _eps(rng, n)
    lhs = _c_lhs(u1, u2, e, e)
    return _Terms(lhs, (1.0 - e**2) * np.abs(u1 - u2) ** 2, None, None,
                  {"u1": u1, "u2": u2, "eps": e})


def _scan_c(rng, n):
    u1, u2, e, m = _complex(rng, n), _complex(rng, n), _eps(rng, n), _eps(rng, n)
    bucket = rng.integers(0, len(EXPONENTS), n)
    delta = np.asarray(EXPONENTS)[bucket]
    d = np.abs(u1 - u2)
    gap = np.abs(e - m)
    scaled = gap * d + gap**delta * np.abs(u2) ** (1.0 + delta) * d
    return _Terms(_c_lhs(u1, u2, e, m), (1.0 - e**2) * d**2, scaled, bucket,
                  {"u1": u1, "u2": u2, "eps": e, "mu": m, "delta": delta})


def _scan_d(rng, n):
    u1, u2, e = _complex(rng, n), _complex(rng, n), _eps(rng, n)
    ib = rng.integers(0, len(EXPONENTS), n)
    ia = rng.integers(0, len(EXPONENTS), n)
    delta = np.asarray(EXPONENTS)[ib]
    alpha = np.asarray(EXPONENTS)[ia]
    a1, a2 = np.abs(u1), np.abs(u2)
    d = np.abs(u2 - u1)
    lhs = np.abs(_ule(u1, e) - _ulog(u2))
    tail = 1.0 + a2 ** (1 - alpha) * _logplus(a2) + a1 ** (1 - alpha) * _logplus(a1)
    scaled = e**delta * a1 ** (1 + delta) + tail * d**alpha
    return _Terms(lhs, e + d, scaled, ib * len(EXPONENTS) + ia,
                  {"u1": u1, "u2": u2, "eps": e, "delta": delta, "alpha": alpha})


def _marks(rng, n, m):
    direction = rng.standard_normal((n, m))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    # uniform in the unit ball, radius kept away from 0
    radius = np.maximum(rng.random(n) ** (1.0 / m), 1e-12)
    return direction * radius[:, None]


def lip_phi_constant(channels: NoiseChannelSet) -> float:
    """Growth rate ``C = 3 K sqrt(m)`` in ``|Phi(y1) - Phi(y2)| <= e^(C|z|) |y1 - y2|``."""
    return 3.0 * k_gtilde_estimate(channels) * math.sqrt(channels.m)


def _marcus_scanner(kind: str, channels: NoiseChannelSet):
    m = channels.m
    growth = lip_phi_constant(channels) if kind == "lip_phi" else None

    def scan(rng, n):
        z = _marks(rng, n, m)
        y1, y2 = _complex(rng, n), _complex(rng, n)
        s = rng.random(n)
        zn = np.linalg.norm(z, axis=1)
        params = {"z": z, "y1": y1, "y2": y2, "s": s}
        if kind == "marcus_modulus":
            ratio = np.abs(phi_closed(s, z, y1, channels)) / np.abs(y1)
            # two-sided equality as max(ratio, 1/ratio) <= 1
            return _Terms(np.maximum(ratio, 1.0 / ratio), np.ones(n), None, None, params)
        if kind == "lip_phi":
            lhs = np.abs(phi_closed(s, z, y1, channels) - phi_closed(s, z, y2, channels))
            return _Terms(lhs, np.exp(growth * zn) * np.abs(y1 - y2), None, None, params)
        if kind == "G_bound":
            lhs = np.abs(jump_increment_G(z, y1, channels, s))
            scaled = zn * np.abs(y1)
        elif kind == "lip_G":
            lhs = np.abs(jump_increment_G(z, y1, channels, s) - jump_increment_G(z, y2, channels, s))
            scaled = zn * np.abs(y1 - y2)
        elif kind == "H_bound":
            lhs = np.abs(compensator_H(z, y1, channels))
            scaled = zn**2 * np.abs(y1)
        else:
            lhs = np.abs(compensator_H(z, y1, channels) - compensator_H(z, y2, channels))
            scaled = zn**2 * np.abs(y1 - y2)
        return _Terms(lhs, np.zeros(n), scaled, np.zeros(n, dtype=int), params)

    return scan


EXACT_LEMMAS = ("a", "b", "quasi", "c_diag", "marcus_modulus", "lip_phi")
CALIBRATED_LEMMAS = ("c", "d", "G_bound", "lip_G", "H_bound", "lip_H")
LEMMAS = EXACT_LEMMAS + CALIBRATED_LEMMAS

_SCALAR_SCANNERS: dict[str, Callable] = {
    "a": _scan_a,
    "b": _scan_b,
    "quasi": _scan_quasi,
    "c_diag": _scan_c_diag,
    "c": _scan_c,
    "d": _scan_d,
}


def default_scan_channels() -> NoiseChannelSet:
    return NoiseChannelSet.of(SaturatedNonlinearity("photorefractive"),
                              SaturatedNonlinearity("sqrt_gap"))


@dataclass(frozen=True)
class ScanReport:
    lemma: str
    samples: int
    violations: int
    worst_slack: float
    seed: int
    calibrated: bool
    constants: dict = field(default_factory=dict)
    witness: dict | None = None

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def rows(self):
        """``(key, value)`` pairs for the CSV serialisation."""
        out = [("lemma", self.lemma), ("samples", self.samples),
               ("violations", self.violations), ("worst_slack", f"{self.worst_slack:.17g}"),
               ("seed", self.seed), ("calibrated", int(self.calibrated))]
        for key in sorted(self.constants):
            val = self.constants[key]
            out.append((key, f"{val:.17g}" if isinstance(val, float) else val))
        if self.witness:
            for key in sorted(self.witness):
                out.append((f"witness_{key}", self.witness[key]))
        return out


def _scanner_for(lemma: str, channels: NoiseChannelSet):
    if lemma in _SCALAR_SCANNERS:
        return _SCALAR_SCANNERS[lemma]
    if lemma in ("marcus_modulus", "lip_phi", "G_bound", "lip_G", "H_bound", "lip_H"):
        return _marcus_scanner(lemma, channels)
    raise ValueError(f"unknown lemma {lemma!r}; expected one of {LEMMAS}")


def _gather(lemma, samples, seed, channels, shard_size):
    scan = _scanner_for(lemma, channels)
    n_shards = -(-samples // shard_size)
    children = np.random.SeedSequence(int(seed)).spawn(n_shards + 1)
    sizes = [min(shard_size, samples - i * shard_size) for i in range(n_shards)]

    def shard(i):
        rng = np.random.Generator(np.random.Philox(children[i]))
        return scan(rng, sizes[i])

    parts = _map(shard, range(n_shards))
    cat = lambda name: (None if getattr(parts[0], name) is None
                        else np.concatenate([getattr(p, name) for p in parts]))
    params = {k: np.concatenate([p.params[k] for p in parts]) for k in parts[0].params}
    terms = _Terms(cat("lhs"), cat("exact"), cat("scaled"), cat("bucket"), params)
    return terms, children[-1]


def _witness(terms: _Terms, idx: int) -> dict:
    out = {}
    for key, arr in terms.params.items():
        val = arr[idx]
        if np.iscomplexobj(val):
            out[key] = f"{val.real:.17g}{val.imag:+.17g}j"
        elif np.ndim(val):
            out[key] = ";".join(f"{v:.17g}" for v in val)
        else:
            out[key] = f"{float(val):.17g}"
    out["lhs"] = f"{terms.lhs[idx]:.17g}"
    return out


def inequality_scan(lemma: str, samples: int = 10**6, seed: int = 0,
                    slack: float = 1e-12, channels: NoiseChannelSet | None = None,
                    shard_size: int = SHARD_SIZE) -> ScanReport:
    """Randomized check of one inequality.

    A sample violates when ``lhs - rhs > slack * (|lhs| + |rhs|)``, i.e. the
    slack is relative to the size of the two sides.  ``worst_slack`` is the
    largest value of ``(lhs - rhs) / (|lhs| + |rhs|)``; non-positive means
    every sample held.  Results depend only on ``(lemma, samples, seed)``:
    shards use fixed sizes and spawned sub-seeds, whatever the thread count.
    """
    if samples < 10**5:
        raise ValueError(f"need at least 1e5 samples, got {samples}")
    channels = channels or default_scan_channels()
    terms, split_seed = _gather(lemma, samples, seed, channels, shard_size)
    constants: dict = {}

    if terms.scaled is None:
        rhs = terms.exact
        mask = np.ones(samples, dtype=bool)
        calibrated = False
    else:
        calibrated = True
        perm = np.random.Generator(np.random.Philox(split_seed)).permutation(samples)
        calib = np.zeros(samples, dtype=bool)
        calib[perm[: samples // 2]] = True
        mask = ~calib
        ratio = np.zeros(samples)
        pos = terms.scaled > 0
        ratio[pos] = (terms.lhs[pos] - terms.exact[pos]) / terms.scaled[pos]
        K = np.zeros(samples)
        for b in np.unique(terms.bucket):
            sel = calib & (terms.bucket == b)
            k_b = float(max(ratio[sel].max(initial=0.0), 0.0))
            constants[_bucket_name(lemma, int(b))] = k_b
            K[terms.bucket == b] = 2.0 * k_b
        rhs = terms.exact + K * terms.scaled
    if lemma == "lip_phi":
        constants["C"] = lip_phi_constant(channels)
    if lemma in ("lip_phi", "G_bound", "lip_G", "H_bound", "lip_H"):
        constants["K_gtilde"] = k_gtilde_estimate(channels)
        constants["m"] = channels.m

    lhs = terms.lhs[mask]
    rhs_m = rhs[mask]
    scale = np.abs(lhs) + np.abs(rhs_m)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(scale > 0, (lhs - rhs_m) / scale, 0.0)
    bad = (lhs - rhs_m) > slack * scale
    violations = int(bad.sum())
    witness = None
    if violations:
        idx = np.flatnonzero(mask)[int(np.argmax(np.where(bad, rel, -np.inf)))]
        witness = _witness(terms, idx)
    return ScanReport(lemma, samples, violations, float(rel.max()), int(seed),
                      calibrated, constants, witness)


def _bucket_name(lemma: str, b: int) -> str:
    if lemma == "c":
        return f"C_delta{EXPONENTS[b]:g}"
    if lemma == "d":
        nd = len(EXPONENTS)
        return f"C_delta{EXPONENTS[b // nd]:g}_alpha{EXPONENTS[b % nd]:g}"
    return "C"


# --------------------------------------------------------------- output

def write_sweep_csv(path, report: SweepReport) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# R={report.R:.17g} order={report.order:.17g} "
                 f"residual={report.residual:.17g} paths={len(report.seeds)} "
                 f"monotone={int(report.monotone())}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pair", "eps", "mu", "gap", "D", "ratio_to_prev",
                         "h1_max_eps", "entropy_sup_eps"])
        for i, dist in enumerate(report.distances):
            prev = report.distances[i - 1] if i else math.nan
            ratio = dist / prev if i and prev > 0 else math.nan
            writer.writerow([i, f"{report.eps_list[i]:.17g}", f"{report.eps_list[i + 1]:.17g}",
                             f"{report.gaps[i]:.17g}", f"{dist:.17g}", f"{ratio:.17g}",
                             f"{report.h1_max[i]:.17g}", f"{report.entropy_sup[i]:.17g}"])


def write_scan_csv(path, report: ScanReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["key", "value"])
        for key, val in report.rows():
            writer.writerow([key, val])
