"""Oracle tests: every derived closed-form constant, kernel, or count in the
package is checked here against an independent reference computation
(quadrature, brute-force enumeration, dense linear algebra, or a hand
formula).  These tests were written before the implementations and pin the
numerical contracts the library must satisfy.
"""

import math

import numpy as np
import pytest
from scipy import integrate

import roughwave as rw


# ----------------------------------------------------------------------------
# helpers (independent reference implementations)
# ----------------------------------------------------------------------------


def bracket(v):
    v = np.asarray(v, dtype=float)
    return np.sqrt(1.0 + (v * v).sum(axis=-1))


def brute_ball(N):
    """All integer modes with |n| <= N, lexicographic order, via a double loop."""
    out = []
    for n1 in range(-N, N + 1):
        for n2 in range(-N, N + 1):
            if n1 * n1 + n2 * n2 <= N * N:
                out.append((n1, n2))
    return out


def brute_annulus(N):
    """Integer modes with N/2 <= |n| <= 2N (dyadic-equivalence shell)."""
    lo2, hi2 = (N / 2.0) ** 2, (2.0 * N) ** 2
    out = []
    for n1 in range(-2 * N, 2 * N + 1):
        for n2 in range(-2 * N, 2 * N + 1):
            r2 = n1 * n1 + n2 * n2
            if lo2 <= r2 <= hi2:
                out.append((n1, n2))
    return np.array(out, dtype=np.int64)


def window_hits(values, m):
    """How many entries of `values` lie within the closed unit window of m."""
    return int(np.count_nonzero(np.abs(values - m) <= 1.0))


def m_grid(scales):
    mmax = 4 * int(max(scales)) + 4
    return range(-mmax, mmax + 1)


# ----------------------------------------------------------------------------
# lattice
# ----------------------------------------------------------------------------


class TestLatticeOracles:
    def test_ball_enumeration_matches_double_loop(self):
        for N in (1, 2, 5):
            got = rw.enumerate_ball(N)
            want = brute_ball(N)
            assert [tuple(p) for p in got] == want

    def test_ball_of_radius_two_has_thirteen_modes(self):
        assert len(rw.enumerate_ball(2)) == 13

    def test_bracket_values(self):
        assert rw.jbracket((0, 0)) == 1.0
        assert rw.jbracket((3, 4)) == pytest.approx(math.sqrt(26.0), rel=1e-15)
        arr = rw.jbracket(np.array([[1, 0], [2, 2]]))
        assert arr == pytest.approx([math.sqrt(2.0), 3.0], rel=1e-15)

    def test_smooth_family_sums_to_one_inside_ball(self):
        lat = rw.TruncatedLattice(32)
        jm = rw.j_max(32)
        total = np.zeros(lat.size)
        for j in range(jm + 2):
            total += rw.lp_weights(lat, j, kind="smooth")
        inside = np.abs(lat.modes).max(axis=1) ** 0  # all modes
        assert np.allclose(total[inside.astype(bool)], 1.0, atol=1e-12)

    def test_disjoint_shells_partition_the_ball(self):
        lat = rw.TruncatedLattice(16)
        jm = rw.j_max(16)
        total = np.zeros(lat.size)
        for j in range(jm + 2):
            total += rw.lp_weights(lat, j, kind="shell")
        assert np.allclose(total, 1.0, atol=0)

    def test_sharp_annuli_overlap(self):
        lat = rw.TruncatedLattice(16)
        total = np.zeros(lat.size)
        for j in range(rw.j_max(16) + 2):
            total += rw.lp_weights(lat, j, kind="sharp")
        r = lat.radial()
        assert np.all(total[(r >= 1.0) & (r <= 8.0)] >= 2.0)
        assert total[lat.index_of((0, 0))] == 0.0

    def test_sharp_annulus_membership_examples(self):
        lat = rw.TruncatedLattice(16)
        i = lat.index_of((1, 0))
        assert rw.lp_weights(lat, 1, kind="sharp")[i] == 1.0
        assert rw.lp_weights(lat, 3, kind="sharp")[i] == 0.0

    def test_smooth_cutoff_plateau(self):
        r = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
        chi = rw.smooth_cutoff(r)
        assert np.all(chi[r <= 1.0] == 1.0)
        assert np.all(chi[r >= 2.0] == 0.0)
        assert 0.0 < chi[3] < 1.0


# ----------------------------------------------------------------------------
# noise: exact one-step convolution increments
# ----------------------------------------------------------------------------


class TestStepCovarianceOracles:
    def test_matches_direct_quadrature(self):
        dt, alpha = 0.05, 0.3
        w = bracket((3, 1))
        cpp, cpv, cvv = rw.convolution_covariance(np.array([w]), dt, alpha)
        ipp = integrate.quad(lambda u: np.sin(u * w) ** 2, 0, dt, epsabs=1e-15)[0]
        ivv = integrate.quad(lambda u: np.cos(u * w) ** 2, 0, dt, epsabs=1e-15)[0]
        ipv = integrate.quad(lambda u: np.sin(u * w) * np.cos(u * w), 0, dt, epsabs=1e-15)[0]
        assert cpp[0] == pytest.approx(w ** (2 * alpha - 2) * ipp, rel=1e-12)
        assert cvv[0] == pytest.approx(w ** (2 * alpha) * ivv, rel=1e-12)
        assert cpv[0] == pytest.approx(w ** (2 * alpha - 1) * ipv, rel=1e-12)

    def test_zero_mode_position_variance_over_pi(self):
        # bracket 1, step length pi: variance of the position kick is pi/2.
        cpp, _, _ = rw.convolution_covariance(np.array([1.0]), math.pi, 0.25)
        assert cpp[0] == pytest.approx(math.pi / 2, rel=1e-14)

    def test_cholesky_reproduces_covariance(self):
        dt, alpha = 0.07, 0.2
        ws = bracket(np.array([[0, 0], [1, 0], [3, 1], [12, 5]]))
        cpp, cpv, cvv = rw.convolution_covariance(ws, dt, alpha)
        l11, l21, l22 = rw.convolution_cholesky(ws, dt, alpha)
        assert np.allclose(l11 * l11, cpp, rtol=1e-13)
        assert np.allclose(l21 * l11, cpv, rtol=1e-13)
        assert np.allclose(l21 * l21 + l22 * l22, cvv, rtol=1e-13)

    def test_increment_sampler_covariance_mc(self):
        # Monte Carlo check of the sampled (P, V) law for a single mode.
        rng = np.random.default_rng(7)
        dt, alpha = 0.3, 0.25
        w = np.array([bracket((2, 1))])
        M = 20000
        z1 = (rng.standard_normal(M) + 1j * rng.standard_normal(M)) / math.sqrt(2)
        z2 = (rng.standard_normal(M) + 1j * rng.standard_normal(M)) / math.sqrt(2)
        P, V = rw.exact_convolution_increment(w, dt, alpha, (z1, z2))
        cpp, cpv, cvv = rw.convolution_covariance(w, dt, alpha)
        se = cpp[0] / math.sqrt(M)
        assert np.mean(np.abs(P) ** 2) == pytest.approx(cpp[0], abs=4 * se)
        sev = cvv[0] / math.sqrt(M)
        assert np.mean(np.abs(V) ** 2) == pytest.approx(cvv[0], abs=4 * sev)
        cross = np.mean(P * np.conj(V)).real
        secx = math.sqrt(cpp[0] * cvv[0] / M)
        assert cross == pytest.approx(cpv[0], abs=4 * secx)


class TestNoisePathOracles:
    def test_brownian_increment_isometry_mc(self):
        lat = rw.TruncatedLattice(4)
        grid = rw.TimeGrid(dt=0.25, nsteps=4)
        M = 1500
        acc = 0.0
        idx = lat.index_of((1, 2))
        for r in range(M):
            path = rw.sample_noise_path(lat, grid, seed=11, realization=r)
            db = path.increment(0)
            acc += abs(db[idx]) ** 2
        mean = acc / M
        se = 0.25 / math.sqrt(M)
        assert mean == pytest.approx(0.25, abs=4 * se)

    def test_conjugate_symmetry_and_real_zero_mode(self):
        lat = rw.TruncatedLattice(3)
        grid = rw.TimeGrid(dt=0.1, nsteps=3)
        path = rw.sample_noise_path(lat, grid, seed=5, realization=2)
        db = path.increment(1)
        z1, z2 = path.pv_draws(1)
        for n in [(1, 0), (2, -1), (0, 3)]:
            i, j = lat.index_of(n), lat.index_of((-n[0], -n[1]))
            assert db[i] == np.conj(db[j])
            assert z1[i] == np.conj(z1[j])
            assert z2[i] == np.conj(z2[j])
        k = lat.index_of((0, 0))
        assert db[k].imag == 0.0
        assert z1[k].imag == 0.0

    def test_reproducible_and_independent_across_realizations(self):
        lat = rw.TruncatedLattice(2)
        grid = rw.TimeGrid(dt=0.5, nsteps=2)
        a = rw.sample_noise_path(lat, grid, seed=9, realization=0).increment(0)
        b = rw.sample_noise_path(lat, grid, seed=9, realization=0).increment(0)
        c = rw.sample_noise_path(lat, grid, seed=9, realization=1).increment(0)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


# ----------------------------------------------------------------------------
# variance curve and linear field
# ----------------------------------------------------------------------------


class TestVarianceCurveOracles:
    def test_single_mode_curve_at_pi(self):
        # cutoff 0 keeps only the zero mode; at t = pi the curve equals pi/2.
        val = rw.sigma_curve(0, np.array([math.pi]), alpha=0.25)
        assert val[0] == pytest.approx(math.pi / 2, rel=1e-14)

    def test_matches_per_mode_quadrature(self):
        alpha, t = 0.25, 0.7
        total = 0.0
        for n in brute_ball(2):
            w = bracket(n)
            total += w ** (2 * alpha - 2) * integrate.quad(
                lambda s: np.sin((t - s) * w) ** 2, 0, t, epsabs=1e-14
            )[0]
        val = rw.sigma_curve(2, np.array([t]), alpha=alpha)
        assert val[0] == pytest.approx(total, rel=1e-10)

    def test_linear_field_mode_variance_mc(self):
        lat = rw.TruncatedLattice(4)
        grid = rw.TimeGrid(dt=0.25, nsteps=4)
        alpha, t = 0.25, 1.0
        M = 1200
        targets = [(1, 0), (3, 1)]
        acc = {n: 0.0 for n in targets}
        for r in range(M):
            path = rw.sample_noise_path(lat, grid, seed=21, realization=r)
            series = rw.linear_evolution(path, alpha=alpha, store="final")
            f = series[-1]
            for n in targets:
                acc[n] += abs(f.coeffs[lat.index_of(n)]) ** 2
        for n in targets:
            w = bracket(n)
            want = rw.linear_variance(np.array([w]), t, alpha)[0]
            got = acc[n] / M
            se = want * math.sqrt(2.0 / M)
            assert got == pytest.approx(want, abs=4 * se)


# ----------------------------------------------------------------------------
# Duhamel integration
# ----------------------------------------------------------------------------


def _one_mode_series(lat, grid, n, values):
    frames = np.zeros((len(grid.times), lat.size), dtype=complex)
    frames[:, lat.index_of(n)] = values
    return rw.FieldSeries(lat, grid.times, frames)


class TestDuhamelOracles:
    def test_exact_for_linear_in_time_forcing(self):
        lat = rw.TruncatedLattice(2)
        grid = rw.TimeGrid(dt=0.05, nsteps=20)
        n = (2, 0)
        w = bracket(n)
        a, b = 0.7, -1.3
        series = _one_mode_series(lat, grid, n, a + b * grid.times)
        out = rw.duhamel(series)
        t = grid.times
        want = (
            (a + b * t) / w**2
            - (a / w**2) * np.cos(w * t)
            - (b / w**3) * np.sin(w * t)
        )
        got = np.array([f.coeffs[lat.index_of(n)] for f in out])
        assert np.allclose(got, want, atol=1e-10)

    def test_closed_form_for_off_resonant_tone(self):
        lat = rw.TruncatedLattice(2)
        n = (1, 1)
        w = bracket(n)
        wf = 2.3
        exact = lambda t: (w * np.sin(wf * t) - wf * np.sin(w * t)) / (
            w * (w**2 - wf**2)
        )
        errs = []
        for nsteps in (64, 128):
            grid = rw.TimeGrid(dt=1.0 / nsteps, nsteps=nsteps)
            series = _one_mode_series(lat, grid, n, np.sin(wf * grid.times))
            out = rw.duhamel(series)
            got = out[-1].coeffs[lat.index_of(n)].real
            errs.append(abs(got - exact(1.0)))
        ratio = errs[0] / errs[1]
        assert 3.5 <= ratio <= 4.5  # second-order convergence

    def test_linearity(self):
        lat = rw.TruncatedLattice(2)
        grid = rw.TimeGrid(dt=0.1, nsteps=10)
        rng = np.random.default_rng(3)
        fa = rng.standard_normal((11, lat.size)) + 1j * rng.standard_normal((11, lat.size))
        fb = rng.standard_normal((11, lat.size)) + 1j * rng.standard_normal((11, lat.size))
        A = rw.FieldSeries(lat, grid.times, fa)
        B = rw.FieldSeries(lat, grid.times, fb)
        AB = rw.FieldSeries(lat, grid.times, 2.0 * fa - 0.5 * fb)
        lhs = rw.duhamel(AB).frames
        rhs = 2.0 * rw.duhamel(A).frames - 0.5 * rw.duhamel(B).frames
        assert np.allclose(lhs, rhs, atol=1e-12)


# ----------------------------------------------------------------------------
# norms
# ----------------------------------------------------------------------------


class TestNormOracles:
    def _cosine_field(self, N=4):
        lat = rw.TruncatedLattice(N)
        coeffs = np.zeros(lat.size, dtype=complex)
        coeffs[lat.index_of((1, 0))] = 0.5
        coeffs[lat.index_of((-1, 0))] = 0.5
        return rw.SpectralField(lat, 0.0, coeffs)

    def test_sobolev_norm_of_cosine(self):
        f = self._cosine_field()
        assert rw.hs_norm(f, 0.0) == pytest.approx(1 / math.sqrt(2), rel=1e-14)
        s = 0.7
        want = math.sqrt(2 * (0.5**2) * math.sqrt(2.0) ** (2 * s))
        assert rw.hs_norm(f, s) == pytest.approx(want, rel=1e-13)

    def test_plancherel_against_grid_quadrature(self):
        lat = rw.TruncatedLattice(3)
        rng = np.random.default_rng(5)
        coeffs = rng.standard_normal(lat.size) + 1j * rng.standard_normal(lat.size)
        coeffs = 0.5 * (coeffs + np.conj(coeffs[lat.conjugate_perm]))
        f = rw.SpectralField(lat, 0.0, coeffs)
        g = f.to_grid()
        assert np.mean(g * g) == pytest.approx(rw.hs_norm(f, 0.0) ** 2, rel=1e-12)

    def test_besov_sup_norm_of_cosine_is_one(self):
        f = self._cosine_field()
        assert rw.besov_inf_norm(f, 0.0) == pytest.approx(1.0, abs=1e-9)

    def test_synthetic_power_field_slope(self):
        lat = rw.TruncatedLattice(64)
        coeffs = lat.brackets ** (-2.0) + 0j
        f = rw.SpectralField(lat, 0.0, coeffs)
        profile, fit = rw.regularity_slope([f])
        assert fit.slope == pytest.approx(-1.0, abs=0.05)
        assert profile.values.shape[0] >= 4

    def test_exact_line_recovered_with_unit_r2(self):
        # a field whose block magnitudes are an exact power of the level
        lat = rw.TruncatedLattice(64)
        base = np.zeros(lat.size, dtype=complex)
        f = rw.SpectralField(lat, 0.0, base)
        profile, _ = rw.regularity_slope([f.with_coeffs(lat.brackets ** (-1.5) + 0j)])
        line = 2.0 ** (-0.7 * profile.levels)
        prof2 = profile.with_values(line)
        fit2 = rw.fit_profile(prof2)
        assert fit2.slope == pytest.approx(-0.7, abs=1e-12)
        assert fit2.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_admissible_pairs(self):
        assert rw.is_wave_admissible(8, 16, 0.75)
        assert rw.is_wave_admissible(math.inf, 2, 0.0)
        assert not rw.is_wave_admissible(2, 2, 0.0)

    def test_target_exponents(self):
        assert rw.target_regularity(0.2) == pytest.approx(0.6)
        assert rw.target_regularity(0.3) == pytest.approx(0.35)
        assert rw.target_regularity(0.25) == pytest.approx(0.5)
        assert rw.tilde_target_regularity(0.2) == pytest.approx(1.0)
        assert rw.tilde_target_regularity(0.3) == pytest.approx(0.9)
        for bad in (-0.01, 0.45, 0.5):
            with pytest.raises(ValueError):
                rw.target_regularity(bad)
        with pytest.raises(ValueError):
            rw.tilde_target_regularity(0.55)

    def test_space_time_norm_scales_linearly(self):
        lat = rw.TruncatedLattice(2)
        grid = rw.TimeGrid(dt=0.1, nsteps=10)
        rng = np.random.default_rng(12)
        fr = rng.standard_normal((11, lat.size)) + 1j * rng.standard_normal((11, lat.size))
        u = rw.FieldSeries(lat, grid.times, fr)
        u3 = rw.FieldSeries(lat, grid.times, 3.0 * fr)
        params = rw.XsbParams(s=0.3, b=0.55)
        a = rw.xsb_norm(u, params)
        b = rw.xsb_norm(u3, params)
        assert b == pytest.approx(3.0 * a, rel=1e-10)

    def test_space_time_norm_monotone_in_exponents(self):
        lat = rw.TruncatedLattice(4)
        grid = rw.TimeGrid(dt=0.1, nsteps=10)
        rng = np.random.default_rng(13)
        fr = rng.standard_normal((11, lat.size)) + 1j * rng.standard_normal((11, lat.size))
        u = rw.FieldSeries(lat, grid.times, fr)
        lo = rw.xsb_norm(u, rw.XsbParams(s=0.1, b=0.4))
        hi = rw.xsb_norm(u, rw.XsbParams(s=0.4, b=0.6))
        assert lo <= hi


# ----------------------------------------------------------------------------
# counting: brute-force cross checks at tiny scales
# ----------------------------------------------------------------------------


class TestTwoFactorCountOracles:
    def brute_basic(self, A, N, kind):
        a = np.array([A, 0])
        ann = brute_annulus(N)
        shifted = bracket(ann + a)
        base = bracket(ann)
        phi = shifted - base if kind == "hyperbolic" else shifted + base
        return phi

    @pytest.mark.parametrize("kind,lemma", [("hyperbolic", "basic-hyp"), ("elliptic", "basic-ell")])
    def test_basic_counts(self, kind, lemma):
        A, N = 2, 4
        phi = self.brute_basic(A, N, kind)
        want = {m: window_hits(phi, m) for m in m_grid((A, N))}
        rep = rw.exact_count(rw.CaseSpec(lemma=lemma, scales=(A, N)))
        assert rep.lhs == max(want.values())
        for m, c in rep.per_m.items():
            assert c == want[m]

    def test_two_ball_count(self):
        A, B, N = 2, 2, 4
        a = np.array([A, 0])
        ann = brute_annulus(N)
        sh = ann + a
        keep = (np.abs(bracket(sh) ** 2 - 1) >= (B / 2.0) ** 2 - 1e-9) & 0 == 0
        r2 = (sh * sh).sum(axis=1)
        inb = (r2 >= (B / 2.0) ** 2) & (r2 <= (2.0 * B) ** 2)
        phi_h = (bracket(sh) - bracket(ann))[inb]
        want = {m: window_hits(phi_h, m) for m in m_grid((A, B, N))}
        rep = rw.exact_count(
            rw.CaseSpec(lemma="two-ball", scales=(A, B, N), signs=(1, -1))
        )
        assert rep.lhs == max(want.values())


class TestCubicCountOracles:
    def brute_cubic_phase(self, scales, signs):
        s0, s1, s2, s3 = signs
        a1, a2, a3 = (brute_annulus(s) for s in scales)
        phis = []
        for n1 in a1:
            s12 = n1 + a2  # (len(a2), 2)
            for i2 in range(len(a2)):
                tot = s12[i2] + a3
                phi = (
                    s0 * bracket(tot)
                    + s1 * bracket(n1)
                    + s2 * bracket(a2[i2])
                    + s3 * bracket(a3)
                )
                phis.append(phi)
        return np.concatenate(phis)

    def test_cubic_triple_count(self):
        scales, signs = (2, 2, 2), (1, -1, 1, -1)
        phi = self.brute_cubic_phase(scales, signs)
        want = {m: window_hits(phi, m) for m in m_grid(scales)}
        rep = rw.exact_count(rw.CaseSpec(lemma="cubic-i", scales=scales, signs=signs))
        assert rep.lhs == max(want.values())
        for m, c in rep.per_m.items():
            assert c == want[m]

    def test_cubic_free_sum_variant(self):
        # free variables: first two factors and the total; third is the
        # difference and carries no size constraint.
        scales, signs = (2, 2, 2), (1, 1, -1, 1)
        aN1, aN2, aT = (brute_annulus(s) for s in scales)
        phis = []
        for n1 in aN1:
            for n2 in aN2:
                n3 = aT - n1 - n2
                phi = (
                    signs[0] * bracket(aT)
                    + signs[1] * bracket(n1)
                    + signs[2] * bracket(n2)
                    + signs[3] * bracket(n3)
                )
                phis.append(phi)
        phi = np.concatenate(phis)
        want = {m: window_hits(phi, m) for m in m_grid(scales)}
        rep = rw.exact_count(rw.CaseSpec(lemma="cubic-ii", scales=scales, signs=signs))
        assert rep.lhs == max(want.values())

    def test_cubic_pointwise_sup_count(self):
        scales, signs = (2, 2, 2), (1, -1, -1, 1)
        a1, a2, a3 = (brute_annulus(s) for s in scales)
        best = 0
        per_n = {}
        for n1 in a1:
            for n2 in a2:
                tot = n1 + n2 + a3
                phi = (
                    signs[0] * bracket(tot)
                    + signs[1] * bracket(n1)
                    + signs[2] * bracket(n2)
                    + signs[3] * bracket(a3)
                )
                for i3 in range(len(a3)):
                    key = (int(tot[i3, 0]), int(tot[i3, 1]))
                    per_n.setdefault(key, []).append(phi[i3])
        for key, vals in per_n.items():
            vals = np.array(vals)
            for m in m_grid(scales):
                best = max(best, window_hits(vals, m))
        rep = rw.exact_count(rw.CaseSpec(lemma="cubic-sup-1", scales=scales, signs=signs))
        assert rep.lhs == best


class TestWeightedSumOracles:
    def test_cubic_weighted_sum(self):
        alpha, s = 0.3, 0.5
        scales, signs = (2, 2, 2), (1, -1, 1, 1)
        a1, a2, a3 = (brute_annulus(sc) for sc in scales)
        best = 0.0
        per_m = {}
        for m in m_grid(scales):
            tot_sum = 0.0
            for n1 in a1:
                for n2 in a2:
                    tot = n1 + n2 + a3
                    phi = (
                        signs[0] * bracket(tot)
                        + signs[1] * bracket(n1)
                        + signs[2] * bracket(n2)
                        + signs[3] * bracket(a3)
                    )
                    w = (
                        bracket(tot) ** (2 * (s - 1))
                        * bracket(n1) ** (-2 + 2 * alpha)
                        * bracket(n2) ** (-2 + 2 * alpha)
                        * bracket(a3) ** (-2 + 2 * alpha)
                    )
                    tot_sum += w[np.abs(phi - m) <= 1.0].sum()
            per_m[m] = tot_sum
            best = max(best, tot_sum)
        rep = rw.weighted_sum(
            rw.CaseSpec(lemma="cubic-sum", scales=scales, signs=signs, alpha=alpha, s=s)
        )
        assert rep.lhs == pytest.approx(best, rel=1e-10)
        m_best = max(per_m, key=per_m.get)
        assert per_m[rep.m_at] == pytest.approx(per_m[m_best], rel=1e-10)

    def test_resonant_weighted_sum(self):
        alpha, N3 = 0.3, 2
        n1, n2 = np.array([1, 0]), np.array([0, 1])
        a3 = brute_annulus(N3)
        signs = (1, 1, -1, 1)
        total = 0.0
        n12 = n1 + n2
        for i3 in range(len(a3)):
            n3 = a3[i3]
            tot = n12 + n3
            phi = (
                signs[0] * bracket(tot)
                + signs[1] * bracket(n1)
                + signs[2] * bracket(n2)
                + signs[3] * bracket(n3)
            )
            for m in range(-50, 51):
                if abs(phi - m) <= 1.0:
                    total += (
                        (1.0 / math.hypot(1, abs(m)))
                        * bracket(tot) ** (-1.0)
                        * bracket(n3) ** (-2 + 2 * alpha)
                    )
        rep = rw.weighted_sum(
            rw.CaseSpec(
                lemma="basic-resonant",
                scales=(N3,),
                signs=signs,
                alpha=alpha,
                params={"n1": (1, 0), "n2": (0, 1)},
            )
        )
        assert rep.lhs == pytest.approx(total, rel=1e-10)

    def test_quartic_weighted_sum(self):
        alpha, s = 0.3, -0.5
        scales, signs = (1, 1, 1, 1), (1, -1, 1, 1)
        anns = [brute_annulus(sc) for sc in scales]
        per_m = {}
        for m in m_grid(scales):
            acc = 0.0
            for n1 in anns[0]:
                for n2 in anns[1]:
                    for n3 in anns[2]:
                        n123 = n1 + n2 + n3
                        phi = (
                            signs[0] * bracket(n123)
                            + signs[1] * bracket(n1)
                            + signs[2] * bracket(n2)
                            + signs[3] * bracket(n3)
                        )
                        if abs(phi - m) > 1.0:
                            continue
                        tot = n123 + anns[3]
                        acc += (
                            bracket(n1) ** (-2 + 2 * alpha)
                            * bracket(n2) ** (-2 + 2 * alpha)
                            * bracket(n3) ** (-2 + 2 * alpha)
                            * bracket(n123) ** (-2.0)
                            * (
                                bracket(tot) ** (2 * s)
                                * bracket(anns[3]) ** (-2 + 2 * alpha)
                            ).sum()
                        )
            per_m[m] = acc
        rep = rw.weighted_sum(
            rw.CaseSpec(lemma="quartic", scales=scales, signs=signs, alpha=alpha, s=s)
        )
        assert rep.lhs == pytest.approx(max(per_m.values()), rel=1e-10)


class TestQuinticSepticOracles:
    def test_quintic_weighted_sum_naive(self):
        alpha, s = 0.3, 0.6
        scales = (1, 1, 1, 1, 1)
        sg = {"inner": 1, "outer": 1, "s1": -1, "s5": 1}
        anns = [brute_annulus(sc) for sc in scales]
        best = {}
        phase2_variant = "mixed"  # second window uses the single-sign variant
        for m in range(-12, 13):
            for mp in range(-12, 13):
                acc = 0.0
                for n2 in anns[1]:
                    for n3 in anns[2]:
                        for n4 in anns[3]:
                            v = n2 + n3 + n4
                            phi = (
                                sg["inner"] * bracket(v)
                                + bracket(n2)
                                + bracket(n3)
                                + bracket(n4)
                            )
                            if abs(phi - m) > 1.0:
                                continue
                            w234 = (
                                bracket(n2) ** (-2 + 2 * alpha)
                                * bracket(n3) ** (-2 + 2 * alpha)
                                * bracket(n4) ** (-2 + 2 * alpha)
                                * bracket(v) ** (-2.0)
                            )
                            for n1 in anns[0]:
                                tot15 = v + n1 + anns[4]
                                phi2 = (
                                    sg["outer"] * bracket(tot15)
                                    + sg["inner"] * bracket(v)
                                    + sg["s1"] * bracket(n1)
                                    + sg["s5"] * bracket(anns[4])
                                )
                                sel = np.abs(phi2 - mp) <= 1.0
                                acc += w234 * (
                                    bracket(n1) ** (-2 + 2 * alpha)
                                    * bracket(tot15[sel]) ** (2 * (s - 1))
                                    * bracket(anns[4][sel]) ** (-2 + 2 * alpha)
                                ).sum()
                best[(m, mp)] = acc
        rep = rw.weighted_sum(
            rw.CaseSpec(
                lemma="quintic",
                scales=scales,
                signs=(sg["inner"], sg["outer"], sg["s1"], sg["s5"]),
                alpha=alpha,
                s=s,
                params={"second_window": phase2_variant},
            )
        )
        assert rep.lhs == pytest.approx(max(best.values()), rel=1e-10)

    def _psi_naive(self, ni, nj, nk, alpha):
        tot = ni + nj + nk
        btot, bi, bj, bk = bracket(tot), bracket(ni), bracket(nj), bracket(nk)
        acc = 0.0
        for s0 in (1, -1):
            for si in (1, -1):
                for sj in (1, -1):
                    for sk in (1, -1):
                        phi = s0 * btot + si * bi + sj * bj + sk * bk
                        lo, hi = math.ceil(phi - 1.0), math.floor(phi + 1.0)
                        for m in range(lo, hi + 1):
                            acc += 1.0 / math.hypot(1, abs(m))
        return acc / btot * (bi * bj * bk) ** (-1 + alpha)

    def test_septic_master_sum_empty_pairing(self):
        alpha, s, kappa = 0.3, 0.55, 0.05
        scales = tuple([1] * 7)
        nsum_scale = 1
        anns = [brute_annulus(1)] * 7
        A = anns[0]
        # block tables built the slow way
        psiA = {}
        for i1 in range(len(A)):
            for i2 in range(len(A)):
                for i3 in range(len(A)):
                    psiA[(i1, i2, i3)] = self._psi_naive(A[i1], A[i2], A[i3], alpha)
        acc = 0.0
        nA = len(A)
        for i1 in range(nA):
            for i2 in range(nA):
                for i3 in range(nA):
                    w123 = A[i1] + A[i2] + A[i3]
                    p1 = psiA[(i1, i2, i3)]
                    for i4 in range(nA):
                        w4 = w123 + A[i4]
                        wgt4 = bracket(A[i4]) ** (-(1 - alpha))
                        for i5 in range(nA):
                            for i6 in range(nA):
                                for i7 in range(nA):
                                    tot = w4 + A[i5] + A[i6] + A[i7]
                                    r = float((tot * tot).sum())
                                    if not (nsum_scale / 2.0) ** 2 <= r <= (2.0 * nsum_scale) ** 2:
                                        continue
                                    term = p1 * wgt4 * psiA[(i5, i6, i7)]
                                    acc += bracket(tot) ** (2 * (s - 1)) * term * term
        rep = rw.weighted_sum(
            rw.CaseSpec(
                lemma="septic",
                scales=scales,
                alpha=alpha,
                s=s,
                params={"pairing": (), "nsum": nsum_scale, "kappa": kappa},
            )
        )
        assert rep.lhs == pytest.approx(acc, rel=1e-8)

    def test_septic_master_sum_one_pair(self):
        alpha, s = 0.3, 0.55
        A = brute_annulus(1)
        nA = len(A)
        psiA = np.zeros((nA, nA, nA))
        for i1 in range(nA):
            for i2 in range(nA):
                for i3 in range(nA):
                    psiA[i1, i2, i3] = self._psi_naive(A[i1], A[i2], A[i3], alpha)
        neg_index = {}
        for i, v in enumerate(A):
            neg_index[(int(v[0]), int(v[1]))] = i
        neg = [neg_index[(-int(v[0]), -int(v[1]))] for v in A]
        acc = 0.0
        nsum_scale = 1
        # pairing identifies indices 1 and 7 (n7 = -n1); free: 2,3,4,5,6
        for i2 in range(nA):
            for i3 in range(nA):
                for i4 in range(nA):
                    for i5 in range(nA):
                        for i6 in range(nA):
                            tot = A[i2] + A[i3] + A[i4] + A[i5] + A[i6]
                            r = float((tot * tot).sum())
                            if not (nsum_scale / 2.0) ** 2 <= r <= (2.0 * nsum_scale) ** 2:
                                continue
                            inner = 0.0
                            for i1 in range(nA):
                                inner += (
                                    psiA[i1, i2, i3]
                                    * bracket(A[i4]) ** (-(1 - alpha))
                                    * psiA[i5, i6, neg[i1]]
                                )
                            acc += bracket(tot) ** (2 * (s - 1)) * inner * inner
        rep = rw.weighted_sum(
            rw.CaseSpec(
                lemma="septic",
                scales=tuple([1] * 7),
                alpha=alpha,
                s=s,
                params={"pairing": ((1, 7),), "nsum": nsum_scale},
            )
        )
        assert rep.lhs == pytest.approx(acc, rel=1e-8)


class TestPairingOracles:
    def brute_pairings(self, J, blocks):
        """Enumerate pairings by brute force over all pair subsets."""
        import itertools

        block_of = {}
        for bi, blk in enumerate(blocks):
            for idx in blk:
                block_of[idx] = bi
        pairs = [
            (i, j)
            for i in range(1, J + 1)
            for j in range(i + 1, J + 1)
            if block_of[i] != block_of[j]
        ]
        out = set()
        for r in range(0, J // 2 + 1):
            for combo in itertools.combinations(pairs, r):
                used = [x for p in combo for x in p]
                if len(set(used)) == len(used):
                    out.add(frozenset(combo))
        return out

    def test_two_element_case(self):
        got = rw.enumerate_pairings(2, blocks=[{1}, {2}])
        assert len(got) == 2  # empty pairing and the single pair

    def test_seven_element_blocked_case(self):
        blocks = [{1, 2, 3}, {4}, {5, 6, 7}]
        want = self.brute_pairings(7, blocks)
        got = rw.enumerate_pairings(7, blocks=blocks)
        got_sets = {frozenset(tuple(sorted(p)) for p in pairing.pairs) for pairing in got}
        want_sets = {frozenset(tuple(sorted(p)) for p in pr) for pr in want}
        assert got_sets == want_sets

    def test_nine_element_blocked_count_matches_brute(self):
        blocks = [{1, 2, 3}, {4, 5, 6}, {7, 8, 9}]
        want = self.brute_pairings(9, blocks)
        got = rw.enumerate_pairings(9, blocks=blocks)
        assert len(got) == len(want)


# ----------------------------------------------------------------------------
# oscillatory sums and tensor norms
# ----------------------------------------------------------------------------


class TestSineCancellationOracles:
    def test_closed_form_matches_dense_quadrature(self):
        rep = rw.sine_cancellation_sum(
            N=8,
            T=1.0,
            instance="modulated-pair",
            params={"s3": 0.3, "n3": (2, 1), "n4": (1, -2)},
            t_samples=5,
        )
        # reference: very fine composite Simpson integration at the same
        # evaluation times
        a = np.array([2, 1]) + np.array([1, -2])
        ann = brute_annulus(8)
        b3, b4 = bracket((2, 1)), bracket((1, -2))
        for t, want in zip(rep.times, rep.values):
            tp = np.linspace(0.0, t, 4001)
            total = 0.0
            for n in ann:
                bn, bna = bracket(n), bracket(n + a)
                f = (
                    (1.0 / bna)
                    * bn**-2.0
                    * np.sin((tp - 0.3) * b3)
                    * np.cos((t - tp) * b4)
                )
                integ = np.sin((t - tp) * bna) * np.cos((t - tp) * bn) * f
                total += integrate.simpson(integ, x=tp)
            assert want == pytest.approx(total, abs=1e-8 + 1e-8 * abs(total))


class TestTensorOracles:
    def test_unfolding_norms_match_dense_svd(self):
        alpha, s = 0.3, 0.36
        scales = (2, 2, 2, 2)
        signs = (1, -1, 1, -1)
        got = rw.tensor_unfold_norms(alpha=alpha, s=s, scales=scales, signs=signs, m=0)
        a1, a2, a3 = brute_annulus(2), brute_annulus(2), brute_annulus(2)
        rows = {k: {} for k in range(4)}
        entries = []
        for i1 in range(len(a1)):
            for i2 in range(len(a2)):
                part = a1[i1] + a2[i2]
                tot = part + a3
                r2 = (tot * tot).sum(axis=1)
                okt = (r2 >= 1.0) & (r2 <= 16.0)
                phi = (
                    signs[0] * bracket(tot)
                    + signs[1] * bracket(a1[i1])
                    + signs[2] * bracket(a2[i2])
                    + signs[3] * bracket(a3)
                )
                ok = okt & (np.abs(phi - 0) <= 1.0)
                for i3 in np.nonzero(ok)[0]:
                    n = tot[i3]
                    val = (
                        bracket(n) ** (s - 1.0)
                        / (
                            bracket(a1[i1]) ** (1 - alpha)
                            * bracket(a2[i2]) ** (1 - alpha)
                            * bracket(a3[i3]) ** s
                        )
                    )
                    entries.append((i1, i2, int(i3), (int(n[0]), int(n[1])), val))
        import numpy.linalg as la

        def dense_norm(rowkey, colkey):
            ridx, cidx, vals = {}, {}, []
            trip = []
            for i1, i2, i3, n, val in entries:
                r = rowkey(i1, i2, i3, n)
                c = colkey(i1, i2, i3, n)
                ridx.setdefault(r, len(ridx))
                cidx.setdefault(c, len(cidx))
                trip.append((ridx[r], cidx[c], val))
            M = np.zeros((len(ridx), len(cidx)))
            for r, c, v in trip:
                M[r, c] += v
            return la.svd(M, compute_uv=False)[0] if M.size else 0.0

        want = {
            "n1n2n3->n": dense_norm(
                lambda i1, i2, i3, n: (i1, i2, i3), lambda i1, i2, i3, n: n
            ),
            "n1n3->nn2": dense_norm(
                lambda i1, i2, i3, n: (i1, i3), lambda i1, i2, i3, n: (n, i2)
            ),
            "n2n3->nn1": dense_norm(
                lambda i1, i2, i3, n: (i2, i3), lambda i1, i2, i3, n: (n, i1)
            ),
            "n3->nn1n2": dense_norm(
                lambda i1, i2, i3, n: (i3,), lambda i1, i2, i3, n: (n, i1, i2)
            ),
        }
        for key, val in want.items():
            assert got[key] == pytest.approx(val, rel=1e-8), key


# ----------------------------------------------------------------------------
# binary field-series round trip
# ----------------------------------------------------------------------------


class TestStorageOracles:
    def test_round_trip_is_exact(self, tmp_path):
        from roughwave.cli import save_field_series, load_field_series

        lat = rw.TruncatedLattice(3)
        times = np.linspace(0.0, 0.5, 6)
        rng = np.random.default_rng(2)
        frames = rng.standard_normal((6, lat.size)) + 1j * rng.standard_normal(
            (6, lat.size)
        )
        series = rw.FieldSeries(lat, times, frames)
        p = tmp_path / "series.rwv"
        save_field_series(series, p)
        back = load_field_series(p)
        assert back.lattice.cutoff == 3
        assert np.array_equal(back.times, times)
        assert np.array_equal(back.frames, frames)

    def test_header_layout(self, tmp_path):
        from roughwave.cli import save_field_series

        lat = rw.TruncatedLattice(1)
        times = np.array([0.0, 0.25])
        frames = np.zeros((2, lat.size), dtype=complex)
        series = rw.FieldSeries(lat, times, frames)
        p = tmp_path / "series.rwv"
        save_field_series(series, p)
        raw = p.read_bytes()
        assert raw[:4] == b"RWV1"
        import struct

        ver, N, frames_n = struct.unpack_from("<HII", raw, 4)
        dt, T = struct.unpack_from("<dd", raw, 14)
        assert (ver, N, frames_n) == (1, 1, 2)
        assert dt == pytest.approx(0.25)
        assert T == pytest.approx(0.25)
