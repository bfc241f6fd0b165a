import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.integrate import quad

from slogse.noise import (
    LevyMeasureSpec,
    NoiseFormatError,
    NoisePath,
    empirical_moments,
    moments,
    read_path,
    sample_path,
    write_path,
)

ATOMIC = LevyMeasureSpec("atomic", 2, (((0.5, 0.0), 3.0), ((0.0, -0.8), 2.0), ((0.01, 0.0), 7.0)),
                         delta_cut=0.05)


class TestSpec:
    def test_atomic_moments(self):
        mu1, mu2, mass = moments(ATOMIC)
        np.testing.assert_allclose(mu1, [1.5, -1.6])
        assert mu2 == pytest.approx(3 * 0.25 + 2 * 0.64)
        assert mass == 5.0
        assert ATOMIC.truncation_bound == pytest.approx(7 * 1e-4)

    @pytest.mark.parametrize("m,alpha", [(1, 0.5), (1, 1.5), (2, 1.0), (3, 0.75)])
    def test_radial_moments_against_quadrature(self, m, alpha):
        spec = LevyMeasureSpec("radial_power", m, alpha=alpha, c=0.7, delta_cut=0.1)
        area = 2.0 if m == 1 else 2 * math.pi ** (m / 2) / math.gamma(m / 2)
        dens = lambda r: 0.7 * area * r ** (-1 - alpha)  # noqa: E731
        _, mu2, mass = moments(spec)
        assert mass == pytest.approx(quad(dens, 0.1, 1)[0], rel=1e-10)
        assert mu2 == pytest.approx(quad(lambda r: r * r * dens(r), 0.1, 1)[0], rel=1e-10)
        assert spec.truncation_bound == pytest.approx(quad(lambda r: r * r * dens(r), 0, 0.1)[0],
                                                      rel=1e-8)

    @pytest.mark.parametrize("kwargs", [
        dict(kind="radial_power", alpha=1.0, delta_cut=0.0),
        dict(kind="radial_power", alpha=2.0, delta_cut=0.1),
        dict(kind="radial_power", alpha=1.0, c=-1.0, delta_cut=0.1),
        dict(kind="atomic", atoms=(((1.5,), 1.0),)),
        dict(kind="atomic", atoms=(((0.5,), -1.0),)),
        dict(kind="atomic", atoms=(((0.5, 0.1), 1.0),)),
        dict(kind="gaussian"),
        dict(kind="atomic", delta_cut=1.0),
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            LevyMeasureSpec(**kwargs)


class TestSampling:
    def test_deterministic(self):
        a = sample_path(ATOMIC, 2.0, 99)
        b = sample_path(ATOMIC, 2.0, 99)
        c = sample_path(ATOMIC, 2.0, 100)
        assert a == b
        assert a != c

    def test_structure(self):
        p = sample_path(ATOMIC, 3.0, 1)
        assert p.marks.shape == (len(p), 2)
        assert np.all(np.diff(p.times) > 0)
        assert p.times[0] > 0 and p.times[-1] <= 3.0
        kept = {(0.5, 0.0), (0.0, -0.8)}
        assert {tuple(z) for z in p.marks} <= kept

    def test_empty_measure(self):
        p = sample_path(LevyMeasureSpec.empty(), 1.0, 5)
        assert len(p) == 0 and p.mu2 == 0.0

    def test_rejects_bad_horizon(self):
        with pytest.raises(ValueError):
            sample_path(ATOMIC, 0.0, 1)

    def test_empirical_moments_within_four_sigma(self):
        spec = LevyMeasureSpec("radial_power", 1, alpha=1.2, c=0.5, delta_cut=0.05)
        _, mu2, mass = moments(spec)
        paths = [sample_path(spec, 1.5, s) for s in range(400)]
        mean_n, mean_sq, se_n, se_sq = empirical_moments(paths)
        assert abs(mean_n - 1.5 * mass) < 4 * se_n
        assert abs(mean_sq - 1.5 * mu2) < 4 * se_sq

    def test_empirical_moments_needs_100(self):
        with pytest.raises(ValueError):
            empirical_moments([NoisePath.empty(1.0)] * 99)

    def test_radius_distribution(self):
        alpha, dlt = 0.8, 0.02
        spec = LevyMeasureSpec("radial_power", 2, alpha=alpha, c=1.0, delta_cut=dlt)
        radii = np.concatenate([np.linalg.norm(sample_path(spec, 1.0, s).marks, axis=1)
                                for s in range(20)])
        assert radii.min() > dlt and radii.max() <= 1.0
        cdf = lambda r: (dlt**-alpha - r**-alpha) / (dlt**-alpha - 1)  # noqa: E731
        assert stats.kstest(radii, cdf).pvalue > 1e-3

    def test_uniform_arrival_times(self):
        spec = LevyMeasureSpec("atomic", 1, (((0.5,), 200.0),))
        p = sample_path(spec, 2.0, 3)
        assert stats.kstest(p.times / 2.0, "uniform").pvalue > 1e-3


class TestNpath:
    def test_roundtrip(self, tmp_path):
        p = sample_path(ATOMIC, 1.25, 2**63 + 5)
        write_path(tmp_path / "p.npath", p)
        assert read_path(tmp_path / "p.npath") == p

    def test_header(self, tmp_path):
        p = sample_path(ATOMIC, 1.0, 4)
        write_path(tmp_path / "p.npath", p)
        head = (tmp_path / "p.npath").read_text().splitlines()[0]
        prefix = "NPATH1 T=1 seed=4 m=2 mu1=1.5,-1.6000000000000001 mu2="
        assert head.startswith(prefix)
        assert float(head[len(prefix):]) == pytest.approx(2.03, rel=1e-15)

    def test_empty_roundtrip(self, tmp_path):
        p = NoisePath.empty(2.0, m=3, seed=1)
        write_path(tmp_path / "e.npath", p)
        assert read_path(tmp_path / "e.npath") == p

    @pytest.mark.parametrize("text", [
        "",
        "NPATH0 T=1 seed=0 m=1 mu1=0 mu2=0\n",
        "NPATH1 T=1 seed=0 m=1 mu2=0\n",
        "NPATH1 T=1 seed=0 m=1 mu1=0 mu2=0\n0.5,0.1,0.2\n",
        "NPATH1 T=1 seed=0 m=1 mu1=0 mu2=0\n0.5,abc\n",
    ])
    def test_malformed(self, tmp_path, text):
        (tmp_path / "bad.npath").write_text(text)
        with pytest.raises(NoiseFormatError):
            read_path(tmp_path / "bad.npath")

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.floats(1e-6, 1.0), st.floats(-1, 1).filter(lambda v: v != 0)),
                    max_size=20, unique_by=lambda t: t[0]))
    def test_roundtrip_property(self, tmp_path_factory, events):
        events = sorted(events)
        times = np.array([t for t, _ in events])
        marks = np.array([[z] for _, z in events]).reshape(-1, 1)
        p = NoisePath(1.0, times, marks, [0.1], 0.3, 17, 1)
        path = tmp_path_factory.mktemp("np") / "p.npath"
        write_path(path, p)
        assert read_path(path) == p


def test_event_counts_poisson_goodness_of_fit():
    spec = LevyMeasureSpec("atomic", 1, (((0.5,), 3.0), ((-0.8,), 2.0)))
    counts = np.array([len(sample_path(spec, 1.0, seed)) for seed in range(10**4)])
    edges = np.arange(0, 13)
    observed = np.array([np.sum(counts == k) for k in edges[:-1]] + [np.sum(counts >= 12)])
    probs = np.append(stats.poisson.pmf(edges[:-1], 5.0), stats.poisson.sf(11, 5.0))
    pvalue = stats.chisquare(observed, probs * counts.size).pvalue
    assert pvalue > 0.01
