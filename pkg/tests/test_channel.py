import numpy as np
import pytest

from mbnsim.arrays import ArrayGeometry, UserPose, effective_array_response
from mbnsim.channel import (
    SPEED_OF_LIGHT,
    BandParams,
    ChannelRealization,
    absorption_coeff_at,
    build_thz_channels,
    build_thz_channels_with_responses,
    build_umb_channel,
    db_to_linear,
    molecular_noise_variance,
    perturb_csi,
    sample_blockage,
    sample_blockage_matrix,
    thz_absorption_pathloss,
    thz_pathloss,
    umb_pathloss,
)

THZ = BandParams(
    carrier_hz=0.4e12,
    bandwidth_hz=0.8e9,
    tx_gain_db=15.0,
    rx_gain_db=8.0,
    absorption_coeff_per_m=0.01,
)
UMB = BandParams(
    carrier_hz=8e9,
    bandwidth_hz=100e6,
    tx_gain_db=10.0,
    rx_gain_db=8.0,
    pathloss_exponent=2.5,
    rician_k=10.0,
)


class TestTHzPathloss:
    def test_no_absorption_reduces_to_free_space(self):
        band = BandParams(carrier_hz=0.4e12, bandwidth_hz=0.8e9, tx_gain_db=15.0, rx_gain_db=8.0)
        d = 73.0
        expected = (
            SPEED_OF_LIGHT
            * np.sqrt(db_to_linear(15.0) * db_to_linear(8.0))
            / (4 * np.pi * 0.4e12 * d)
        )
        assert thz_pathloss(d, band) == pytest.approx(expected, rel=1e-12)

    def test_monotone_decreasing(self):
        ds = np.linspace(5.0, 400.0, 50)
        vals = [thz_pathloss(d, THZ) for d in ds]
        assert all(a > b > 0 for a, b in zip(vals, vals[1:]))

    def test_doubling_ratio(self):
        # algebraic oracle: PL(2d)/PL(d) = 1/2 * exp(-K d / 2)
        for d in (10.0, 50.0, 220.0):
            ratio = thz_pathloss(2 * d, THZ) / thz_pathloss(d, THZ)
            assert ratio == pytest.approx(0.5 * np.exp(-0.5 * THZ.absorption_coeff_per_m * d), rel=1e-12)

    def test_rejects_nonpositive_distance(self):
        with pytest.raises(ValueError):
            thz_pathloss(0.0, THZ)


class TestAbsorptionPathloss:
    def test_zero_coefficient_gives_zero(self):
        band = BandParams(carrier_hz=0.4e12, bandwidth_hz=0.8e9, absorption_coeff_per_m=0.0)
        assert thz_absorption_pathloss(50.0, band) == 0.0

    def test_saturates_to_spreading_term(self):
        band = BandParams(carrier_hz=0.4e12, bandwidth_hz=0.8e9, tx_gain_db=15.0, rx_gain_db=8.0,
                          absorption_coeff_per_m=10.0)
        free = BandParams(carrier_hz=0.4e12, bandwidth_hz=0.8e9, tx_gain_db=15.0, rx_gain_db=8.0)
        assert thz_absorption_pathloss(100.0, band) == pytest.approx(thz_pathloss(100.0, free), rel=1e-9)

    def test_independent_evaluation(self):
        # written out from first principles at d=50, K=0.01
        d, coeff = 50.0, 0.01
        gain = np.sqrt(db_to_linear(15.0) * db_to_linear(8.0))
        expected = SPEED_OF_LIGHT * gain / (4 * np.pi * 0.4e12 * d) * np.sqrt(1 - np.exp(-coeff * d))
        assert thz_absorption_pathloss(d, THZ) == pytest.approx(expected, rel=1e-12)


class TestBlockage:
    def test_zero_density_always_clear(self):
        rng = np.random.default_rng(0)
        assert all(sample_blockage(100.0, 0.0, rng) == 1 for _ in range(100))

    def test_heavy_blockage(self):
        # exponent 20 leaves essentially no clear links
        rng = np.random.default_rng(1)
        draws = [sample_blockage(1000.0, 0.02, rng) for _ in range(1000)]
        assert sum(draws) == 0

    def test_monte_carlo_mean(self):
        rng = np.random.default_rng(2)
        d, xi, n = 80.0, 0.01, 100_000
        p = np.exp(-xi * d)
        draws = sample_blockage_matrix(np.full((n, 1), d), xi, rng)
        sigma = np.sqrt(p * (1 - p) / n)
        assert abs(draws.mean() - p) < 3 * sigma


class TestTHzChannels:
    def geom(self):
        lam = SPEED_OF_LIGHT / 0.4e12
        return ArrayGeometry(8, lam / 2, lam)

    def poses(self):
        return [
            [UserPose(30.0, 1.0), UserPose(60.0, 2.0)],
            [UserPose(45.0, 0.5), UserPose(25.0, 2.5)],
        ]

    def test_blocked_pairs_are_zero(self):
        blockage = np.array([[1, 0], [0, 1]], dtype=np.int8)
        h, h_abs = build_thz_channels(self.poses(), self.geom(), THZ, blockage)
        assert np.all(h[0, 1] == 0) and np.all(h_abs[1, 0] == 0)
        assert np.all(np.abs(h[0, 0]) > 0)

    def test_static_no_absorption_is_pathloss_times_response(self):
        band = BandParams(carrier_hz=0.4e12, bandwidth_hz=0.8e9, tx_gain_db=15.0, rx_gain_db=8.0)
        blockage = np.ones((2, 2), dtype=np.int8)
        h, _ = build_thz_channels(self.poses(), self.geom(), band, blockage)
        pose = self.poses()[0][0]
        expected = thz_pathloss(pose.distance, band) * effective_array_response(pose, self.geom())
        np.testing.assert_allclose(h[0, 0], expected, rtol=1e-12)

    def test_norm_squared(self):
        blockage = np.ones((2, 2), dtype=np.int8)
        h, _ = build_thz_channels(self.poses(), self.geom(), THZ, blockage)
        pose = self.poses()[1][1]
        assert np.linalg.norm(h[1, 1]) ** 2 == pytest.approx(
            8 * thz_pathloss(pose.distance, THZ) ** 2, rel=1e-12
        )

    def test_responses_returned_unmasked(self):
        blockage = np.array([[1, 0], [0, 1]], dtype=np.int8)
        _, _, resp = build_thz_channels_with_responses(self.poses(), self.geom(), THZ, blockage)
        np.testing.assert_allclose(np.abs(resp), 1.0, atol=1e-12)


class TestUMBChannel:
    def geom(self):
        lam = SPEED_OF_LIGHT / 8e9
        return ArrayGeometry(16, lam / 2, lam)

    def test_pure_los_limit(self):
        band = BandParams(carrier_hz=8e9, bandwidth_hz=100e6, tx_gain_db=10.0, rx_gain_db=8.0,
                          rician_k=1e12, pathloss_exponent=2.5)
        pose = UserPose(80.0, 1.2)
        g = build_umb_channel(pose, self.geom(), band, np.random.default_rng(0))
        expected = umb_pathloss(80.0, band) * effective_array_response(pose, self.geom())
        np.testing.assert_allclose(g, expected, rtol=1e-5)

    def test_rayleigh_mean_energy(self):
        band = BandParams(carrier_hz=8e9, bandwidth_hz=100e6, tx_gain_db=10.0, rx_gain_db=8.0,
                          rician_k=0.0, pathloss_exponent=2.5)
        pose = UserPose(80.0, 1.2)
        rng = np.random.default_rng(3)
        energies = [
            np.linalg.norm(build_umb_channel(pose, self.geom(), band, rng)) ** 2 for _ in range(10_000)
        ]
        expected = 16 * umb_pathloss(80.0, band) ** 2
        assert np.mean(energies) == pytest.approx(expected, rel=0.03)

    def test_exponent_two_matches_free_space_form(self):
        band = BandParams(carrier_hz=8e9, bandwidth_hz=100e6, pathloss_exponent=2.0)
        d = 37.0
        assert umb_pathloss(d, band) == pytest.approx(SPEED_OF_LIGHT / (4 * np.pi * 8e9 * d), rel=1e-12)


class TestMolecularNoise:
    def test_zero_beams(self):
        h_abs = np.ones((2, 3, 4), complex)
        beams = np.zeros((2, 4, 3), complex)
        np.testing.assert_allclose(molecular_noise_variance(h_abs, beams), 0.0)

    def test_single_pair_collapse(self):
        rng = np.random.default_rng(4)
        h_abs = rng.standard_normal((1, 1, 4)) + 1j * rng.standard_normal((1, 1, 4))
        beams = rng.standard_normal((1, 4, 1)) + 1j * rng.standard_normal((1, 4, 1))
        got = molecular_noise_variance(h_abs, beams)
        expected = abs(h_abs[0, 0].conj() @ beams[0, :, 0]) ** 2
        assert got[0] == pytest.approx(expected, rel=1e-12)

    def test_matches_naive_triple_loop(self):
        rng = np.random.default_rng(5)
        b, k, m = 3, 4, 5
        h_abs = rng.standard_normal((b, k, m)) + 1j * rng.standard_normal((b, k, m))
        beams = rng.standard_normal((b, m, k)) + 1j * rng.standard_normal((b, m, k))
        got = molecular_noise_variance(h_abs, beams)
        for kk in range(k):
            acc = 0.0
            for i in range(k):
                inner = 0j
                for j in range(b):
                    inner += h_abs[j, kk].conj() @ beams[j, :, i]
                acc += abs(inner) ** 2
            assert got[kk] == pytest.approx(acc, rel=1e-12)

    def test_invariant_under_common_phase(self):
        rng = np.random.default_rng(6)
        h_abs = rng.standard_normal((2, 3, 4)) + 1j * rng.standard_normal((2, 3, 4))
        beams = rng.standard_normal((2, 4, 3)) + 1j * rng.standard_normal((2, 4, 3))
        rotated = beams * np.exp(1j * 0.73)
        np.testing.assert_allclose(
            molecular_noise_variance(h_abs, beams),
            molecular_noise_variance(h_abs, rotated),
            rtol=1e-10,
        )


class TestCSIPerturbation:
    def test_zero_uncertainty_is_identity(self):
        rng = np.random.default_rng(7)
        h = rng.standard_normal((3, 2, 4)) + 1j * rng.standard_normal((3, 2, 4))
        np.testing.assert_array_equal(perturb_csi(h, 0.0, rng), h)

    def test_rejects_out_of_range(self):
        rng = np.random.default_rng(0)
        h = np.ones((1, 1, 4), complex)
        for chi in (-0.1, 1.0, 1.5):
            with pytest.raises(ValueError):
                perturb_csi(h, chi, rng)

    def test_error_energy(self):
        rng = np.random.default_rng(8)
        h = (rng.standard_normal(6) + 1j * rng.standard_normal(6))[None, :]
        chi = 0.2
        errs = [np.linalg.norm(perturb_csi(h, chi, rng) - h) ** 2 for _ in range(10_000)]
        assert np.mean(errs) == pytest.approx(chi * np.linalg.norm(h) ** 2, rel=0.03)

    def test_independent_across_links(self):
        rng = np.random.default_rng(9)
        h = np.ones((2, 1, 8), complex)
        deltas = np.array([perturb_csi(h, 0.3, rng) - h for _ in range(4000)])
        corr = np.mean(deltas[:, 0, 0, :] * np.conj(deltas[:, 1, 0, :]))
        assert abs(corr) < 0.02


class TestAbsorptionTable:
    def test_roundtrip_and_interp(self, tmp_path):
        path = tmp_path / "table.txt"
        path.write_text("0.3e12 0.004\n0.5e12 0.02\n0.4e12 0.01\n")
        from mbnsim.channel import load_absorption_table

        table = load_absorption_table(str(path))
        assert absorption_coeff_at(table, 0.4e12) == pytest.approx(0.01)
        assert absorption_coeff_at(table, 0.35e12) == pytest.approx(0.007)


class TestChannelRealizationInvariants:
    def test_blocked_pairs_must_be_zero(self):
        h = np.ones((1, 1, 2), complex)
        with pytest.raises(ValueError):
            ChannelRealization(
                thz_direct=h,
                thz_absorption=h.copy(),
                umb=np.zeros((0, 1, 0), complex),
                blockage=np.zeros((1, 1), np.int8),
            )
