import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rclstm.dsp import ComplexSpectrogram, StftConfig, Waveform, istft
from rclstm.errors import ContractError, InputError
from rclstm.masking import (
    ComplexMask,
    RealMask,
    apply_mask,
    bound_mask,
    crm,
    ibm,
    irm,
    smm,
    unbound_mask,
)

CFG = StftConfig(8, 4)  # 5 bins keeps hand-made spectrograms small


def spec(values):
    v = np.zeros((1, 5), dtype=complex)
    v[0, :len(np.atleast_1d(values))] = values
    return ComplexSpectrogram(v, CFG)


def random_spec(rng, frames=20, cfg=StftConfig(64, 32)):
    k = cfg.num_bins
    return ComplexSpectrogram(rng.normal(size=(frames, k)) + 1j * rng.normal(size=(frames, k)), cfg)


class TestCrm:
    def test_self_division(self, rng):
        s = random_spec(rng)
        np.testing.assert_allclose(crm(s, s).values, 1.0 + 0j, atol=1e-14)

    def test_one_over_j(self):
        m = crm(spec(1 + 0j), spec(0 + 1j)).values[0, 0]
        assert m == pytest.approx(0 - 1j)

    def test_zero_clean(self, rng):
        x = random_spec(rng)
        s = ComplexSpectrogram(np.zeros_like(x.values), x.config)
        assert not np.any(crm(s, x).values)

    def test_floor_caps_magnitude(self):
        m = crm(spec(1.0), spec(1e-6), floor=1e-3).values[0, 0]
        assert m == pytest.approx(1e-6 / 1e-6)  # S X* / floor^2

    def test_zero_noisy_without_floor(self):
        m = crm(spec(1.0), spec(0.0), floor=0.0)
        assert np.all(np.isfinite(m.values))

    def test_not_bounded(self, rng):
        assert crm(random_spec(rng), random_spec(rng)).bounded is False

    def test_shape_mismatch(self, rng):
        with pytest.raises(InputError):
            crm(random_spec(rng, 10), random_spec(rng, 11))


class TestBounding:
    def test_zero(self):
        assert bound_mask(ComplexMask(np.zeros((2, 3)))).values.sum() == 0

    def test_one_plus_j(self):
        b = bound_mask(ComplexMask(np.array([[1 + 1j]]))).values[0, 0]
        assert b.real == pytest.approx(0.7615941559557649, abs=1e-12)
        assert b.imag == pytest.approx(0.7615941559557649, abs=1e-12)

    def test_saturation(self):
        b = bound_mask(ComplexMask(np.array([[50 + 0j]]))).values[0, 0]
        assert abs(b.real - 1.0) < 1e-12

    def test_double_bound_rejected(self):
        with pytest.raises(ContractError):
            bound_mask(ComplexMask(np.zeros((1, 1)), bounded=True))

    def test_unbound_zero(self):
        assert unbound_mask(ComplexMask(np.zeros((1, 1)), bounded=True)).values[0, 0] == 0

    def test_unbound_tanh2(self):
        m = unbound_mask(ComplexMask(np.array([[np.tanh(2.0)]]), bounded=True), clip=0.999)
        assert abs(m.values[0, 0].real - 2.0) < 1e-9

    def test_unbound_clip(self):
        m = unbound_mask(ComplexMask(np.array([[1.0 + 0j]]), bounded=True))
        assert m.values[0, 0].real == pytest.approx(3.800201167250200, abs=1e-9)
        assert m.bounded is False

    def test_unbound_requires_bounded(self):
        with pytest.raises(ContractError):
            unbound_mask(ComplexMask(np.zeros((1, 1))))

    @settings(max_examples=200)
    @given(st.floats(-4, 4), st.floats(-4, 4))
    def test_round_trip(self, re, im):
        m = ComplexMask(np.array([[complex(re, im)]]))
        back = unbound_mask(bound_mask(m), clip=1 - 1e-9).values[0, 0]
        assert abs(back.real - re) < 1e-9 and abs(back.imag - im) < 1e-9

    @settings(max_examples=100)
    @given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
    def test_bounded_range(self, re, im):
        b = bound_mask(ComplexMask(np.array([[complex(re, im)]]))).values[0, 0]
        assert -1 <= b.real <= 1 and -1 <= b.imag <= 1


class TestApply:
    def test_identity(self, rng):
        x = random_spec(rng)
        out = apply_mask(ComplexMask(np.ones(x.shape, dtype=complex)), x)
        np.testing.assert_array_equal(out.values, x.values)

    def test_rotation_single(self):
        out = apply_mask(ComplexMask(np.full((1, 5), 1j)), spec(1.0))
        assert out.values[0, 0] == pytest.approx(1j)

    def test_rotation_preserves_magnitude(self, rng):
        x = random_spec(rng)
        out = apply_mask(ComplexMask(np.full(x.shape, 1j)), x).values
        np.testing.assert_allclose(np.abs(out), np.abs(x.values), rtol=1e-12)
        np.testing.assert_allclose(out, x.values * np.exp(1j * np.pi / 2), rtol=1e-12)

    def test_crm_inverse(self, rng):
        s, x = random_spec(rng), random_spec(rng)
        assert np.min(np.abs(x.values)) > 0
        out = apply_mask(crm(s, x, floor=0.0), x).values
        np.testing.assert_allclose(out, s.values, rtol=1e-12)

    def test_bounded_rejected(self, rng):
        x = random_spec(rng)
        with pytest.raises(ContractError):
            apply_mask(ComplexMask(np.zeros(x.shape), bounded=True), x)

    def test_real_mask_keeps_phase(self, rng):
        x = random_spec(rng)
        g = rng.uniform(0.1, 2.0, x.shape)
        out = apply_mask(RealMask(g), x).values
        np.testing.assert_allclose(np.angle(out), np.angle(x.values), atol=1e-12)

    def test_shape_mismatch(self, rng):
        with pytest.raises(InputError):
            apply_mask(ComplexMask(np.ones((3, 5))), random_spec(rng))

    def test_oracle_recovery_time_domain(self, rng):
        cfg = StftConfig(64, 32)
        s, v = random_spec(rng, 40, cfg), random_spec(rng, 40, cfg)
        x = ComplexSpectrogram(s.values + v.values, cfg)
        assert np.min(np.abs(x.values)) > 1e-6
        est = istft(apply_mask(crm(s, x), x)).samples
        ref = istft(s).samples
        np.testing.assert_allclose(est[64:-64], ref[64:-64], atol=1e-8)


class TestRealMasks:
    def test_ibm(self):
        assert ibm(spec(2.0), spec(1.0)).values[0, 0] == 1
        assert ibm(spec(1.0), spec(2.0)).values[0, 0] == 0
        assert ibm(spec(1.0), spec(1j)).values[0, 0] == 0

    def test_irm(self):
        assert irm(spec(1.0), spec(1j)).values[0, 0] == pytest.approx(1 / np.sqrt(2))
        assert irm(spec(3.0), spec(0.0)).values[0, 0] == 1.0
        assert irm(spec(0.0), spec(1.0)).values[0, 0] == 0.0
        assert irm(spec(0.0), spec(0.0)).values[0, 0] == 0.0

    def test_smm(self):
        assert smm(spec(1j), spec(-1.0)).values[0, 0] == pytest.approx(1.0)
        assert smm(spec(0.0), spec(1.0)).values[0, 0] == 0.0
        assert smm(spec(1.0), spec(0.5)).values[0, 0] == pytest.approx(2.0)

    def test_shape_mismatch(self, rng):
        for f in (ibm, irm, smm):
            with pytest.raises(InputError):
                f(random_spec(rng, 3), random_spec(rng, 4))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_ranges(self, seed):
        r = np.random.default_rng(seed)
        s, v = random_spec(r, 5), random_spec(r, 5)
        x = ComplexSpectrogram(s.values + v.values, s.config)
        assert set(np.unique(ibm(s, v).values)) <= {0.0, 1.0}
        m = irm(s, v).values
        assert np.all((m >= 0) & (m <= 1))
        assert np.all(smm(s, x).values >= 0)
