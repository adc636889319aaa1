import numpy as np
import pytest

from cshdr import masks


class TestBinary:
    def test_determinism(self):
        a = masks.gen_binary(64, 64, 0.5, seed=7)
        b = masks.gen_binary(64, 64, 0.5, seed=7)
        assert np.array_equal(a.values, b.values)

    def test_values_binary(self):
        m = masks.gen_binary(32, 32, 0.3, seed=1)
        assert set(np.unique(m.values)) <= {0.0, 1.0}

    def test_fraction_concentration(self):
        m = masks.gen_binary(1000, 1000, 0.5, seed=0)
        frac = m.values.mean()
        assert 0.49 <= frac <= 0.51

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_degenerate_p_rejected(self, p):
        with pytest.raises(ValueError):
            masks.gen_binary(8, 8, p, seed=0)


class TestGaussian:
    def test_moments_at_defaults(self):
        m = masks.gen_gaussian(1000, 1000, seed=2)
        assert abs(m.values.mean() - 0.6) < 0.01
        assert abs(m.values.std() - 0.1) < 0.01

    def test_clamped(self):
        m = masks.gen_gaussian(200, 200, mean=0.5, stddev=0.8, seed=3)
        assert m.values.min() >= 0.0 and m.values.max() <= 1.0

    def test_param_validation(self):
        with pytest.raises(ValueError):
            masks.gen_gaussian(8, 8, mean=1.2)
        with pytest.raises(ValueError):
            masks.gen_gaussian(8, 8, stddev=0.0)


class TestUniform:
    def test_bounds(self):
        m = masks.gen_uniform(500, 500, seed=4)
        assert m.values.min() >= 0.0 and m.values.max() <= 1.0

    def test_determinism(self):
        assert np.array_equal(masks.gen_uniform(32, 32, seed=5).values,
                              masks.gen_uniform(32, 32, seed=5).values)

    def test_kolmogorov_distance(self):
        m = masks.gen_uniform(1000, 1000, seed=6)
        v = np.sort(m.values.ravel().astype(np.float64))
        n = v.size
        ecdf_hi = np.arange(1, n + 1) / n
        ks = max(np.abs(ecdf_hi - v).max(), np.abs(v - np.arange(n) / n).max())
        assert ks < 0.01


class TestFourExposure:
    def test_default_levels_span_six_stops(self):
        m = masks.gen_four_exposure(16, 16, seed=0)
        levels = sorted(set(m.values.ravel().tolist()))
        assert levels == [0.015625, 0.0625, 0.25, 1.0]
        assert levels[-1] / levels[0] == 64.0

    def test_level_frequencies(self):
        m = masks.gen_four_exposure(1000, 1000, seed=1)
        for lv in masks.DEFAULT_LEVELS:
            frac = np.mean(m.values == np.float32(lv))
            assert abs(frac - 0.25) < 0.005

    def test_exactly_four_distinct(self):
        m = masks.gen_four_exposure(64, 64, seed=2)
        assert len(np.unique(m.values)) == 4

    def test_level_validation(self):
        with pytest.raises(ValueError):
            masks.gen_four_exposure(8, 8, levels=(0.1, 0.2, 0.3))
        with pytest.raises(ValueError):
            masks.gen_four_exposure(8, 8, levels=(0.5, 0.25, 0.75, 1.0))
        with pytest.raises(ValueError):
            masks.gen_four_exposure(8, 8, levels=(0.0, 0.25, 0.5, 1.0))


class TestFixedPattern:
    def test_tiling_rule(self):
        levels = masks.DEFAULT_LEVELS
        m = masks.gen_fixed_pattern(9, 7, levels)
        for r in range(7):
            for c in range(9):
                assert m.values[r, c] == np.float32(levels[2 * (r % 2) + (c % 2)])

    def test_period_two(self):
        m = masks.gen_fixed_pattern(8, 8)
        assert m.values[0, 0] == m.values[2, 2]
        assert m.values[1, 0] == m.values[3, 2]

    def test_four_distinct(self):
        assert len(np.unique(masks.gen_fixed_pattern(8, 8).values)) == 4


class TestInterleaved:
    def test_default_ratio_eight(self):
        m = masks.gen_interleaved(8, 8)
        vals = np.unique(m.values)
        assert len(vals) == 2
        assert np.isclose(vals.max() / vals.min(), 8.0)

    def test_rows_constant(self):
        m = masks.gen_interleaved(16, 9)
        assert np.all(m.values == m.values[:, :1])

    def test_even_rows_high(self):
        m = masks.gen_interleaved(4, 4, e_low=0.2, e_high=0.9)
        assert np.all(m.values[0] == np.float32(0.9))
        assert np.all(m.values[1] == np.float32(0.2))

    def test_validation(self):
        with pytest.raises(ValueError):
            masks.gen_interleaved(8, 8, e_low=0.5, e_high=0.5)


class TestInvariantsAndIo:
    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_all_generators_in_unit_interval(self, seed):
        gens = [masks.gen_binary(20, 20, 0.4, seed),
                masks.gen_gaussian(20, 20, seed=seed),
                masks.gen_uniform(20, 20, seed),
                masks.gen_four_exposure(20, 20, seed=seed),
                masks.gen_fixed_pattern(20, 20),
                masks.gen_interleaved(20, 20)]
        for m in gens:
            assert m.values.min() >= 0.0 and m.values.max() <= 1.0

    def test_serialization_roundtrip(self, tmp_path):
        m = masks.gen_four_exposure(17, 13, seed=9)
        masks.save_mask(m, tmp_path / "m")
        back = masks.load_mask(tmp_path / "m")
        assert np.array_equal(back.values, m.values)
        assert back.kind == m.kind and back.seed == m.seed
        assert back.params["levels"] == list(masks.DEFAULT_LEVELS)

    def test_sidecar_records_prng(self, tmp_path):
        import json
        masks.save_mask(masks.gen_uniform(4, 4, seed=1), tmp_path / "u")
        meta = json.loads((tmp_path / "u.json").read_text())
        assert meta["prng"] == "philox4x64"
        assert meta["seed"] == 1
