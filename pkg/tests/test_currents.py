import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from retrobohm.currents import (BoundaryPair, CompletenessWarning, ConditionalField, FinalFamily,
                                OverlapFloorError, StandardField, UniformField, average_over_finals,
                                bilinear_from_jets, conditional_current, continuity_residual, epsilon_gaussian,
                                family_overlaps, gaussian_overlap, measurement_limit_profile,
                                measurement_slice_oracle, momentum_family, position_family, rest_density,
                                standard_current, j0_slice)
from retrobohm.states import (GAMMA, DIRAC, KLEIN_GORDON, GaussianPacket, Jet, MomentumPacket,
                              PlaneWave, QuadSpec, Superposition, WaveModel, overlap)


def gaussian_oracle(t, x, x0, sigma, t0=0.0, m=1.0):
    """psi and d_x psi for a Gaussian at rest, written out independently."""
    s = 1 + 1j * (t - t0) / (2 * m * sigma ** 2)
    psi = (2 * np.pi * sigma ** 2) ** -0.25 / np.sqrt(s) * np.exp(-(x - x0) ** 2 / (4 * sigma ** 2 * s))
    return psi, -(x - x0) / (2 * sigma ** 2 * s) * psi


def box(p_list):
    """One common period of the plane-wave momenta in p_list (all multiples of the first nonzero gap)."""
    return QuadSpec(0.0, 2 * np.pi / p_list, 4001)


class TestPlaneWaveCurrents:
    @pytest.mark.parametrize("p", [-1.3, 0.0, 0.6, 2.0])
    def test_kg_and_dirac_give_p_over_m(self, p):
        for kind in (KLEIN_GORDON, DIRAC):
            model = WaveModel(kind, 1.5)
            pw = PlaneWave(model, p)
            j = standard_current(pw, np.array([0.0, 1.3]), np.array([0.4, -2.0]))
            expected = pw.four_momentum / model.mass
            assert np.allclose(j, expected[:, None], atol=1e-14)

    def test_schrodinger(self, schrodinger):
        pw = PlaneWave(schrodinger, 0.7)
        assert np.allclose(standard_current(pw, 0.2, 0.1), [1.0, 0.7], atol=1e-15)

    def test_kg_pair_alternates_sign(self, klein_gordon):
        psi_i = Superposition([(1.0, PlaneWave(klein_gordon, 0.0)), (1.5, PlaneWave(klein_gordon, 2.0))])
        pair = BoundaryPair(psi_i, PlaneWave(klein_gordon, 0.0), quad=box(2.0))
        t, x = np.meshgrid(np.linspace(0, 3, 13), np.linspace(0, np.pi, 13), indexing="ij")
        j0 = conditional_current(pair, t, x)[0]
        assert j0.min() < 0 < j0.max()

    def test_dirac_representation_independence(self, dirac):
        u = np.array([[1, 1j], [1j, 1]]) / np.sqrt(2)
        gamma = np.einsum("ab,mbc,dc->mad", u, GAMMA, np.conj(u))
        a = MomentumPacket(dirac, 0.4, 0.3)
        b = MomentumPacket(dirac, -0.2, 0.3, x0=0.6)
        t, x = np.meshgrid([0.0, 0.8], np.linspace(-1, 1, 5), indexing="ij")

        def rotate(jet):
            return Jet(*(np.einsum("ab,b...->a...", u, p) for p in jet._parts()))

        ja, jb = a.jet(t, x), b.jet(t, x)
        ref = bilinear_from_jets(dirac, jb, ja)
        rot = bilinear_from_jets(dirac, rotate(jb), rotate(ja), gamma)
        assert np.max(np.abs(rot - ref)) < 1e-14


class TestConditionalCurrent:
    def test_f_equals_i_gives_standard(self, klein_gordon, probe_grid):
        psi = MomentumPacket(klein_gordon, 0.5, 0.3)
        t, x = probe_grid
        pair = BoundaryPair(psi, psi)
        assert np.max(np.abs(conditional_current(pair, t, x) - standard_current(psi, t, x))) < 1e-12

    def test_gaussian_pair_against_quadrature_oracle(self, schrodinger):
        psi_i = GaussianPacket(schrodinger, 0.0, 1.0)
        psi_f = GaussianPacket(schrodinger, 2.0, 1.0, t0=1.0)
        t, x = 0.5, 1.0

        def part(y, re):
            z = np.conj(gaussian_oracle(t, y, 2.0, 1.0, 1.0)[0]) * gaussian_oracle(t, y, 0.0, 1.0)[0]
            return z.real if re else z.imag

        ov = sum(c * integrate.quad(part, -30, 30, args=(flag,), epsabs=1e-14)[0]
                 for c, flag in ((1, True), (1j, False)))
        fi, dfi = gaussian_oracle(t, x, 0.0, 1.0)
        ff, dff = gaussian_oracle(t, x, 2.0, 1.0, 1.0)
        j0 = np.real(np.conj(ff) * fi / ov)
        j1 = np.real(-1j / 2 * (np.conj(ff) * dfi - np.conj(dff) * fi) / ov)
        got = conditional_current(BoundaryPair(psi_i, psi_f), t, x)
        assert got == pytest.approx([j0, j1], abs=1e-10)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi), st.floats(0.1, 10))
    def test_phase_and_scale_invariance(self, a, b, lam):
        model = WaveModel(KLEIN_GORDON, 1.0)
        psi_i = MomentumPacket(model, 0.5, 0.3)
        psi_f = MomentumPacket(model, 0.2, 0.35, x0=0.5)
        t, x = np.meshgrid([0.2, 0.9], np.linspace(-1, 1, 4), indexing="ij")
        ref = conditional_current(BoundaryPair(psi_i, psi_f), t, x)
        moved = BoundaryPair(lam * np.exp(1j * a) * psi_i, np.exp(1j * b) * psi_f)
        assert np.max(np.abs(conditional_current(moved, t, x) - ref)) < 1e-11

    def test_overlap_floor(self, schrodinger):
        a = GaussianPacket(schrodinger, -10.0, 0.3)
        b = GaussianPacket(schrodinger, 10.0, 0.3)
        with pytest.raises(OverlapFloorError):
            BoundaryPair(a, b, quad=QuadSpec(-15, 15, 3001))

    def test_model_mismatch(self, klein_gordon):
        other = WaveModel(KLEIN_GORDON, 2.0)
        with pytest.raises(ValueError):
            BoundaryPair(MomentumPacket(klein_gordon, 0, 0.3), MomentumPacket(other, 0, 0.3))


class TestStandardCurrent:
    def test_density_and_odd_flux(self, schrodinger):
        g = GaussianPacket(schrodinger, 0.5, 0.8)
        x = 0.5 + np.linspace(-2, 2, 9)
        j = standard_current(g, 0.7, x)
        assert np.allclose(j[0], np.abs(g(0.7, x)[0]) ** 2, atol=1e-15)
        assert np.allclose(j[1], -j[1][::-1], atol=1e-15)
        assert abs(j[1][4]) < 1e-15
        # spreading flow: j1 / j0 = (x - x0) * d/dt log sigma(t)
        sig = lambda t: 0.8 * np.hypot(1, t / (2 * 0.8 ** 2))
        rate = (sig(0.7 + 1e-6) - sig(0.7 - 1e-6)) / 2e-6 / sig(0.7)
        assert np.allclose(j[1] / j[0], (x - 0.5) * rate, atol=1e-8)


@pytest.mark.parametrize("j, rho", [((1, 0), 1.0), ((0, 1), 1.0), ((3, 5), 4.0), ((1, 1), 0.0)])
def test_rest_density_examples(j, rho):
    assert rest_density(j) == pytest.approx(rho, abs=1e-15)


class TestContinuity:
    @staticmethod
    def ratio(field, t, x):
        r1 = np.max(np.abs(continuity_residual(field, t, x, 1e-2)))
        r2 = np.max(np.abs(continuity_residual(field, t, x, 5e-3)))
        return r1, r2

    def test_standard_gaussian(self, schrodinger, probe_grid):
        r1, r2 = self.ratio(StandardField(GaussianPacket(schrodinger, 0.0, 0.7, 0.4)), *probe_grid)
        assert r1 / r2 == pytest.approx(4.0, rel=0.2)

    def test_conditional_kg_two_plane_waves(self, klein_gordon, probe_grid):
        psi_i = Superposition([(1.0, PlaneWave(klein_gordon, 0.0)), (0.6, PlaneWave(klein_gordon, 2.0))])
        pair = BoundaryPair(psi_i, PlaneWave(klein_gordon, 0.0), quad=box(2.0))
        r1, r2 = self.ratio(ConditionalField(pair), *probe_grid)
        assert r1 / r2 == pytest.approx(4.0, rel=0.2)

    def test_conditional_dirac_plane_waves(self, dirac, probe_grid):
        psi_i = Superposition([(1.0, PlaneWave(dirac, 0.5)), (0.5, PlaneWave(dirac, 1.5))])
        pair = BoundaryPair(psi_i, PlaneWave(dirac, 0.5), quad=QuadSpec(0, 2 * np.pi, 4001))
        r1, r2 = self.ratio(ConditionalField(pair), *probe_grid)
        assert r1 / r2 == pytest.approx(4.0, rel=0.2)

    def test_mass_mismatch_does_not_converge(self, klein_gordon, probe_grid):
        heavy = WaveModel(KLEIN_GORDON, 1.3)
        pair = BoundaryPair(MomentumPacket(klein_gordon, 0.5, 0.3), MomentumPacket(heavy, 0.3, 0.3),
                            allow_mismatch=True)
        r1, r2 = self.ratio(ConditionalField(pair), *probe_grid)
        assert r2 > 1e-2
        assert r1 / r2 == pytest.approx(1.0, rel=0.05)

    def test_uniform_field_exact(self):
        assert np.all(continuity_residual(UniformField(1.0, 0.3), 0.0, np.zeros(3), 1e-2) == 0)

    def test_bad_step(self):
        with pytest.raises(ValueError):
            continuity_residual(UniformField(1, 0), 0, 0, 0)


class TestAveraging:
    @pytest.fixture
    def probes(self):
        return np.meshgrid(np.linspace(0, 0.5, 9), np.linspace(-3, 3, 9), indexing="ij")

    def test_orthonormal_family_containing_psi(self, schrodinger, probes):
        psi = GaussianPacket(schrodinger, 0.0, 1.0)
        odd = Superposition([(1.0, GaussianPacket(schrodinger, 0.5, 0.8)),
                             (-1.0, GaussianPacket(schrodinger, -0.5, 0.8))])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            odd = (1 / np.sqrt(overlap(odd, odd).real)) * odd
            fam = FinalFamily([psi, odd], np.ones(2), 0.0)
            avg = average_over_finals(psi, fam, *probes)
        assert np.max(np.abs(avg.j - standard_current(psi, *probes))) < 1e-14
        assert abs(avg.completeness_defect) < 1e-12

    def test_momentum_family(self, schrodinger, probes):
        psi = GaussianPacket(schrodinger, 0.0, 1.25)
        fam = momentum_family(schrodinger, np.linspace(-4, 4, 161), 1.0)
        avg = average_over_finals(psi, fam, *probes)
        std = standard_current(psi, *probes)
        assert np.max(np.abs(avg.j - std)) / np.max(np.abs(std)) < 1e-4

    def test_relativistic_momentum_family(self, klein_gordon, probes):
        psi = MomentumPacket(klein_gordon, 0.3, 0.3)
        fam = momentum_family(klein_gordon, np.linspace(-2.5, 3.1, 141), 0.5)
        avg = average_over_finals(psi, fam, *probes)
        std = standard_current(psi, *probes)
        assert np.max(np.abs(avg.j - std)) / np.max(np.abs(std)) < 1e-4

    @pytest.mark.parametrize("sigma, p0", [(1.25, 0.0), (1.0, 0.4)])
    def test_position_family_completeness_defect(self, schrodinger, sigma, p0):
        """eps-Gaussian outcomes resolve the identity only up to a smoothing of width 2 eps.

        For a Gaussian the missing weight is 1 - exp(-2 eps^2 <p^2>) to leading order.
        """
        eps = 0.02
        psi = GaussianPacket(schrodinger, 0.0, sigma, p0)
        fam = position_family(schrodinger, np.linspace(-8, 8, 161), 1.0, eps)
        ov = family_overlaps(psi, fam)
        defect = float(np.sum(fam.weights * np.abs(ov) ** 2) - 1)
        p2 = 1 / (4 * sigma ** 2) + p0 ** 2
        assert defect == pytest.approx(-2 * eps ** 2 * p2, rel=0.02)

    def test_incomplete_family_warns(self, schrodinger):
        psi = GaussianPacket(schrodinger, 0.0, 1.0)
        fam = position_family(schrodinger, np.linspace(-1, 1, 21), 0.0)
        with pytest.warns(CompletenessWarning):
            average_over_finals(psi, fam, 0.0, 0.0)

    def test_position_family_is_schrodinger_only(self, klein_gordon):
        with pytest.raises(ValueError):
            position_family(klein_gordon, np.linspace(-1, 1, 5), 0.0)

    def test_non_uniform_grid_rejected(self, schrodinger):
        with pytest.raises(ValueError):
            position_family(schrodinger, np.array([0.0, 0.1, 0.3]), 0.0)


class TestMeasurementLimit:
    @pytest.fixture
    def scenario(self, schrodinger):
        psi = GaussianPacket(schrodinger, 0.0, 2.0, 0.5)
        final = epsilon_gaussian(schrodinger, 0.3, 1.0, 0.02)
        return psi, final, BoundaryPair(psi, final, t_slice=1.0)

    def test_closed_form_overlap(self, scenario):
        psi, final, pair = scenario
        assert gaussian_overlap(final, psi, 1.0) == pytest.approx(pair.overlap_fi, abs=1e-13)
        assert gaussian_overlap(final, psi, 1.0) == pytest.approx(overlap(final, psi, 0.3), abs=1e-12)

    def test_slice_at_final_time(self, scenario):
        psi, final, pair = scenario
        x, w, j0 = j0_slice(pair, 1.0)
        assert np.max(np.abs(j0 - measurement_slice_oracle(psi, final, x))) < 1e-8
        assert j0.min() > -1e-12
        assert np.sum(w * j0) == pytest.approx(1.0, abs=1e-10)

    def test_sign_alternation_earlier(self, scenario):
        _, _, pair = scenario
        _, _, j0 = j0_slice(pair, 0.0)
        assert j0.min() < 0

    def test_mean_approaches_outcome(self, scenario):
        _, _, pair = scenario
        prof = measurement_limit_profile(pair, [0.5, 0.75, 0.9, 0.999])
        dist = [abs(p.mean - 0.3) for p in prof]
        assert dist == sorted(dist, reverse=True)
        assert dist[-1] < 1e-3
        assert all(p.integral == pytest.approx(1.0, abs=1e-9) for p in prof)
        # the slice tends to the normalised amplitude exp(-(x - x_f)^2 / (4 eps^2)), variance 2 eps^2
        assert prof[-1].variance == pytest.approx(2 * 0.02 ** 2, rel=0.05)
