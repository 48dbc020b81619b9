import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noklab.energy import EnergyParams, integer_repulsion_table, total_energy
from noklab.errors import ConsistencyError, ParameterError
from noklab.kernels import KernelSpec
from noklab.optimal import (
    CapLimitedWarning,
    DeltaMode,
    _classify_signs,
    default_scan_cap,
    delta_effect_report,
    delta_sweep,
    gamma_sweep,
    kernel_bounded,
    n_star,
    n_tilde,
    resolve_jobs,
    upper_bound_check,
)

LOG_GRID = np.logspace(0, 8, 50)


def brute_force_n_star(params, cap):
    energies = [total_energy(n, params).total for n in range(1, cap + 1)]
    best = min(energies)
    return max(n for n, e in zip(range(1, cap + 1), energies) if e <= best + 1e-12 * abs(best))


class TestNStar:
    @pytest.mark.parametrize(
        "kernel", [KernelSpec.constant(0.3), KernelSpec.gauss(0.3), KernelSpec.power(2.5, 0.5), KernelSpec.local()]
    )
    def test_tiny_gamma_gives_one(self, kernel):
        assert n_star(EnergyParams(1e-6, 0.3, kernel)).n_star == 1

    @pytest.mark.parametrize("gamma", [3.0, 70.0, 900.0])
    def test_matches_brute_force(self, gamma):
        p = EnergyParams(gamma, 0.3, KernelSpec.power(2.5, 0.4))
        assert n_star(p, 60).n_star == brute_force_n_star(p, 60)

    def test_energy_at_star(self):
        p = EnergyParams(300.0, 0.2, KernelSpec.constant(0.3))
        res = n_star(p)
        assert res.energy_at_star == pytest.approx(total_energy(res.n_star, p).total, rel=1e-14)

    def test_ties_pick_largest(self, monkeypatch):
        import noklab.optimal as optimal

        # F chosen so that E(2) == E(3) exactly at gamma = pi/2
        fake = np.array([9.0, 4.0, 2.0, 1.9])
        monkeypatch.setattr(optimal, "integer_repulsion_table", lambda params, cap: (fake[:cap], fake[:cap] * 0))
        res = optimal.n_star(EnergyParams(math.pi / 2, 0.3, KernelSpec.gauss(0.3)), 4)
        assert res.n_star == 3

    def test_constant_kernel_never_exceeds_n_tilde(self):
        p = EnergyParams(0.0, 0.2, KernelSpec.constant(0.3))
        nt = n_tilde(p)
        for g in LOG_GRID:
            res = n_star(EnergyParams(g, 0.2, KernelSpec.constant(0.3)))
            assert res.n_star <= nt and res.bounded and res.scan_cap >= 2 * nt

    def test_cap_limited_warning(self):
        with pytest.warns(CapLimitedWarning):
            res = n_star(EnergyParams(1e9, 0.3, KernelSpec.local()), 10)
        assert res.cap_limited and res.n_star == 10

    def test_scan_cap_validation(self):
        with pytest.raises(ParameterError):
            n_star(EnergyParams(1.0, 0.3, KernelSpec.local()), 1)

    def test_default_cap(self):
        assert default_scan_cap(KernelSpec.local()) == 200
        assert default_scan_cap(KernelSpec.gauss(0.03)) == math.ceil(4 * math.pi / 0.03)


class TestNTilde:
    def test_constant_in_first_trough(self):
        delta = 0.3
        p = EnergyParams(0.0, 0.2, KernelSpec.constant(delta))
        nt = n_tilde(p)
        assert math.pi < nt * delta < 2 * math.pi
        # dense continuum scan: the integer minimiser is next to the continuum one
        grid = np.linspace(1, 4 * math.pi / delta, 20001)
        from noklab.energy import repulsion_table

        dense = repulsion_table(grid, p)[0]
        assert abs(grid[np.argmin(dense)] - nt) < 1.0

    @pytest.mark.parametrize("kernel", [KernelSpec.power(2.5, 0.3), KernelSpec.power(0.5, 0.3), KernelSpec.gauss(0.3)])
    def test_none_when_not_attained(self, kernel):
        assert n_tilde(EnergyParams(0.0, 0.2, kernel)) is None

    def test_case_two_with_mode_on_crest(self):
        assert n_tilde(EnergyParams(0.0, 0.2, KernelSpec.power(0.2, 2.0))) == 9


class TestSweep:
    @pytest.mark.parametrize(
        "kernel",
        [KernelSpec.constant(0.3), KernelSpec.power(0.5, 0.3), KernelSpec.power(2.5, 0.3), KernelSpec.gauss(0.3),
         KernelSpec.screened(0.5), KernelSpec.local()],
    )
    def test_staircase_is_monotone(self, kernel):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CapLimitedWarning)
            s = gamma_sweep(kernel, 0.2, LOG_GRID)
        assert np.all(np.diff(s.n_star_values) >= 0)
        assert len(s.n_star_values) == len(LOG_GRID)

    @pytest.mark.parametrize(
        "kernel",
        [KernelSpec.power(0.5, 0.3), KernelSpec.power(2.5, 0.3), KernelSpec.gauss(0.3), KernelSpec.screened(0.5),
         KernelSpec.local()],
    )
    def test_unbounded_growth(self, kernel):
        a = n_star(EnergyParams(1e2, 0.2, kernel)).n_star
        b = n_star(EnergyParams(1e6, 0.2, kernel)).n_star
        assert b > a

    def test_constant_saturates(self):
        s = gamma_sweep(KernelSpec.constant(0.3), 0.2, LOG_GRID)
        assert s.bounded
        assert s.n_star_values[-1] == n_tilde(EnergyParams(0.0, 0.2, KernelSpec.constant(0.3)))

    def test_doubled_grid_dominates(self):
        k = KernelSpec.gauss(0.4)
        base = gamma_sweep(k, 0.3, LOG_GRID[:30]).n_star_values
        doubled = gamma_sweep(k, 0.3, 2 * LOG_GRID[:30]).n_star_values
        assert np.all(doubled >= base)

    def test_local_and_screened_zero_identical(self):
        a = gamma_sweep(KernelSpec.local(), 0.3, LOG_GRID[:40]).n_star_values
        b = gamma_sweep(KernelSpec.screened(0.0), 0.3, LOG_GRID[:40]).n_star_values
        assert np.array_equal(a, b)

    def test_deterministic(self):
        a = gamma_sweep(KernelSpec.power(2.5, 0.7), 0.3, LOG_GRID[:40]).n_star_values
        integer_repulsion_table.cache_clear()
        b = gamma_sweep(KernelSpec.power(2.5, 0.7), 0.3, LOG_GRID[:40]).n_star_values
        assert np.array_equal(a, b)

    def test_grid_validation(self):
        for bad in ([], [1.0, 1.0], [2.0, 1.0], [0.0, 1.0]):
            with pytest.raises(ParameterError):
                gamma_sweep(KernelSpec.local(), 0.3, bad)

    def test_decrease_is_reported(self, monkeypatch):
        import noklab.optimal as optimal

        monkeypatch.setattr(optimal, "_star_from_table", lambda v, g: (np.array([3, 2])[: len(g)], np.zeros(len(g))))
        with pytest.raises(ConsistencyError):
            optimal.gamma_sweep(KernelSpec.local(), 0.3, [1.0, 2.0])

    def test_delta_sweep_parallel_matches_serial(self):
        grid = np.logspace(0, 5, 30)
        serial = delta_sweep(KernelSpec.gauss(0.5), 0.3, grid, [0.0, 0.5, 1.0], jobs=1)
        parallel = delta_sweep(KernelSpec.gauss(0.5), 0.3, grid, [0.0, 0.5, 1.0], jobs=3)
        for a, b in zip(serial, parallel):
            assert a.kernel == b.kernel and np.array_equal(a.n_star_values, b.n_star_values)
        assert serial[0].kernel == KernelSpec.local()


class TestDeltaEffect:
    @given(st.sampled_from([-1.0, 0.0, 1.0]), st.sampled_from([-1.0, 0.0, 1.0]))
    def test_sign_table(self, prev, at):
        mode = _classify_signs(prev, at, DeltaMode.INSTANT_PROMOTE, DeltaMode.INSTANT_DEMOTE)
        if prev == at == 0:
            assert mode is DeltaMode.UNCHANGED
        elif prev <= 0 and at <= 0:
            assert mode is DeltaMode.INSTANT_PROMOTE
        elif prev >= 0 and at >= 0:
            assert mode is DeltaMode.INSTANT_DEMOTE
        elif prev < 0 < at:
            assert mode is DeltaMode.UNCHANGED
        else:
            assert mode is DeltaMode.UNDETERMINED

    def test_single_point_when_n_star_is_one(self):
        assert _classify_signs(None, -2.0, DeltaMode.INSTANT_PROMOTE, DeltaMode.INSTANT_DEMOTE) is DeltaMode.INSTANT_PROMOTE
        assert _classify_signs(None, 2.0, DeltaMode.INSTANT_PROMOTE, DeltaMode.INSTANT_DEMOTE) is DeltaMode.INSTANT_DEMOTE
        rep = delta_effect_report(KernelSpec.gauss(0.5), 0.3, 1e-3, [0.5])
        assert rep.points[0].n_star == 1 and rep.points[0].instant_prev is None

    def test_power_promotes(self):
        rep = delta_effect_report(KernelSpec.power(2.5, 1.0), 0.3, 1e5, [0.5, 1.0, 2.0])
        assert rep.mode is DeltaMode.INSTANT_PROMOTE
        assert all(p.n_star >= p.n_star_local for p in rep.points)
        assert all(p.cumulative_mode is DeltaMode.CUMULATIVE_PROMOTE for p in rep.points)

    @pytest.mark.parametrize("kernel", [KernelSpec.gauss(1.0), KernelSpec.screened(1.0)])
    def test_demotion(self, kernel):
        rep = delta_effect_report(kernel, 0.3, 1e4, [0.5, 1.0])
        assert rep.mode is DeltaMode.INSTANT_DEMOTE
        assert all(p.n_star <= p.n_star_local for p in rep.points)
        assert all(p.cumulative_mode is DeltaMode.CUMULATIVE_DEMOTE for p in rep.points)

    def test_grid_validation(self):
        with pytest.raises(ParameterError):
            delta_effect_report(KernelSpec.gauss(1.0), 0.3, 10.0, [1.0, 0.5])
        with pytest.raises(ParameterError):
            delta_effect_report(KernelSpec.gauss(1.0), 0.3, 10.0, [])


class TestUpperBound:
    def test_constant(self):
        r = upper_bound_check(KernelSpec.constant(0.3), 0.2)
        assert r.bounded and r.agree and r.bound == n_tilde(EnergyParams(0.0, 0.2, KernelSpec.constant(0.3)))

    @pytest.mark.parametrize("delta", [0.3, 2.0])
    def test_case_two_with_integer_on_crest(self, delta):
        r = upper_bound_check(KernelSpec.power(0.2, delta), 0.2)
        assert r.bounded and r.predicted_bounded and r.agree

    def test_near_critical_generic_delta(self):
        r = upper_bound_check(KernelSpec.power(0.3, 2.0), 0.2)
        assert not r.bounded and r.agree

    def test_crest_without_attained_minimum_is_reported(self):
        r = upper_bound_check(KernelSpec.power(0.3, 0.3), 0.2)
        assert r.predicted_bounded and not r.bounded and not r.agree
        assert "F keeps decreasing" in r.diagnostic

    @pytest.mark.parametrize("kernel", [KernelSpec.gauss(0.3), KernelSpec.power(2.5, 0.3), KernelSpec.local()])
    def test_unbounded(self, kernel):
        r = upper_bound_check(kernel, 0.2)
        assert not r.bounded and not r.predicted_bounded and r.agree

    def test_kernel_bounded(self):
        assert kernel_bounded(KernelSpec.constant(0.3))
        assert not kernel_bounded(KernelSpec.gauss(0.3))


def test_resolve_jobs(monkeypatch):
    monkeypatch.setenv("NOKLAB_JOBS", "3")
    assert resolve_jobs(None) == 3
    assert resolve_jobs(2) == 2
    with pytest.raises(ParameterError):
        resolve_jobs(0)
