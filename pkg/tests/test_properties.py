"""Hypothesis property tests for the structural invariants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slogse.grid import Field, l2_norm, localized_l2, make_grid
from slogse.marcus import phi_closed
from slogse.noise import LevyMeasureSpec, sample_path
from slogse.nonlinearity import (
    NoiseChannelSet,
    SaturatedNonlinearity,
    apply_log_phase,
    l_eps,
    luxembourg_norm,
    orlicz_N,
    orlicz_integral,
    xlogx,
)
from slogse.solver import SolverConfig, initial_field, run

CHANNELS = NoiseChannelSet.of(SaturatedNonlinearity("photorefractive"),
                              SaturatedNonlinearity("sqrt_gap", rho=2.0))
GRID = make_grid(1, 64, 20)

eps_st = st.floats(1e-8, 0.999)
mod_st = st.floats(0.0, 1e4)
seed_st = st.integers(0, 2**32 - 1)
cplx_st = st.builds(complex, st.floats(-50, 50), st.floats(-50, 50))


def random_field(seed, grid=GRID, scale=1.0):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    return Field(grid, scale * v * np.exp(-grid.radius**2 / 8))


@given(mod_st, eps_st)
def test_l_eps_bounded_by_log_eps(r, eps):
    assert abs(l_eps(r, eps)) <= abs(math.log(eps)) * (1 + 1e-12)


@given(mod_st, eps_st)
def test_l_eps_dominated_by_log(r, eps):
    lhs = abs(r * l_eps(r, eps))
    rhs = abs(float(xlogx(r)))
    assert lhs <= rhs * (1 + 1e-12) + 1e-300


@given(cplx_st, cplx_st)
def test_quasi_monotone(u, v):
    def ulog(w):
        return w * math.log(abs(w)) if w else 0j

    lhs = abs(((ulog(u) - ulog(v)) * (u - v).conjugate()).imag)
    assert lhs <= abs(u - v) ** 2 * (1 + 1e-12) + 1e-12


@given(st.floats(0, 10), st.floats(0, 10))
def test_orlicz_monotone_and_midpoint_convex(a, b):
    lo, hi = sorted((a, b))
    assert orlicz_N(lo) <= orlicz_N(hi)
    mid = orlicz_N(0.5 * (a + b))
    assert mid <= 0.5 * (orlicz_N(a) + orlicz_N(b)) * (1 + 1e-12) + 1e-300


@settings(max_examples=40, deadline=None)
@given(seed_st, st.floats(1e-3, 1e3))
def test_luxembourg_root_and_sandwich(seed, scale):
    u = random_field(seed, scale=scale)
    k = luxembourg_norm(u)
    assert abs(orlicz_integral(u, k) - 1) < 1e-8
    total = orlicz_integral(u)
    assert min(k, k * k) * (1 - 1e-8) <= total <= max(k, k * k) * (1 + 1e-8)


@given(seed_st, st.floats(0.1, 5))
def test_localized_below_full(seed, R):
    u = random_field(seed)
    assert localized_l2(u, R) <= l2_norm(u)


@settings(deadline=None)
@given(seed_st, st.floats(-5, 5), st.floats(1e-4, 1.0), eps_st)
def test_log_phase_keeps_modulus(seed, lam, dt, eps):
    u = random_field(seed)
    out = apply_log_phase(u, lam, dt, eps, np.array([0.3, -0.2]), CHANNELS)
    np.testing.assert_allclose(np.abs(out.values), np.abs(u.values), rtol=1e-15, atol=0)


mark_st = st.tuples(st.floats(-0.7, 0.7), st.floats(-0.7, 0.7)).filter(
    lambda z: math.hypot(*z) >= 1e-6)


@given(st.floats(0, 1), mark_st, cplx_st)
def test_marcus_flow_keeps_modulus(s, z, y):
    out = complex(phi_closed(s, np.array(z), y, CHANNELS))
    assert abs(abs(out) - abs(y)) <= 1e-15 * abs(y)


@given(st.floats(0, 1), st.floats(0, 1), mark_st, cplx_st)
def test_marcus_flow_composes(s, t, z, y):
    z = np.array(z)
    once = complex(phi_closed(s + t, z, y, CHANNELS))
    twice = complex(phi_closed(s, z, phi_closed(t, z, y, CHANNELS), CHANNELS))
    assert abs(once - twice) <= 1e-12 * max(abs(y), 1.0)


@settings(max_examples=30, deadline=None)
@given(seed_st, st.floats(0.05, 0.9), st.floats(0.5, 20))
def test_marks_in_shell(seed, cut, c):
    spec = LevyMeasureSpec("radial_power", 2, alpha=1.2, c=c, delta_cut=cut)
    path = sample_path(spec, 1.0, seed)
    radii = np.linalg.norm(path.marks, axis=1) if len(path) else np.zeros(0)
    assert np.all((radii > cut) & (radii <= 1))
    assert np.all((path.times >= 0) & (path.times <= 1)) and np.all(np.diff(path.times) >= 0)


@settings(max_examples=15, deadline=None)
@given(seed_st, st.sampled_from([-1.0, 0.0, 1.0]), st.floats(1e-3, 0.9))
def test_split_step_conserves_mass(seed, lam, eps):
    spec = LevyMeasureSpec("atomic", 2, (((0.5, -0.3), 4.0), ((-0.6, 0.2), 3.0)))
    cfg = SolverConfig(eps=eps, lam=lam, dt=5e-3, T=0.2, grid=GRID, channels=CHANNELS,
                       spec=spec, seed=seed, sample_times=tuple(np.linspace(0, 0.2, 9)))
    traj = run(cfg, cfg.noise_path(), initial_field(GRID, "modulated"))
    assert traj.diagnostics.mass_drift() < 1e-12


@settings(max_examples=15, deadline=None)
@given(seed_st, eps_st, eps_st)
def test_noise_path_ignores_eps(seed, e1, e2):
    spec = LevyMeasureSpec("atomic", 1, (((0.5,), 3.0),))
    base = SolverConfig(eps=e1, lam=1.0, dt=1e-2, T=1.0, grid=GRID, spec=spec, seed=seed)
    assert base.noise_path() == base.replace(eps=e2).noise_path()
