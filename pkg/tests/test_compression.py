import numpy as np
import pytest

from kdopt import compression, core


def test_identity_exact():
    comp = compression.IdentityCompressor()
    x = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(comp.compress(x, core.make_rng(0)), x)
    assert comp.omega == 0.0


def test_rand_k_full_support_is_identity():
    comp = compression.RandK(4, 4)
    x = np.array([1.0, -2.0, 3.0, 0.5])
    assert np.allclose(comp.compress(x, core.make_rng(1)), x, atol=1e-15)
    assert comp.omega == 0.0


def test_rand_k_k_out_of_range():
    with pytest.raises(ValueError):
        compression.RandK(0, 4)
    with pytest.raises(ValueError):
        compression.RandK(5, 4)


def test_rand_k_hand_enumerated_case():
    # d=4, k=2, x = ones: 6 subsets, mean = x, E||C(x)-x||^2 = (d/k-1)||x||^2 = 4
    comp = compression.RandK(2, 4)
    mean, var = comp.enumerate_moments(np.ones(4))
    assert np.allclose(mean, np.ones(4), atol=1e-14)
    assert var == pytest.approx(4.0, abs=1e-12)


@pytest.mark.parametrize("d", [4, 6, 8])
def test_rand_k_exhaustive_identities(d):
    for k in range(1, d + 1):
        comp = compression.RandK(k, d)
        x = np.linspace(-2.0, 1.5, d)
        mean, var = comp.enumerate_moments(x)
        assert np.max(np.abs(mean - x)) <= 1e-12
        assert abs(var - comp.omega * float(x @ x)) <= 1e-12


def test_rand_k_support_and_scaling():
    comp = compression.RandK(2, 6)
    x = np.arange(1.0, 7.0)
    out = comp.compress(x, core.make_rng(2))
    nonzero = np.nonzero(out)[0]
    assert len(nonzero) == 2
    assert np.allclose(out[nonzero], x[nonzero] * 3.0, atol=1e-15)


def test_quantize_zero_vector():
    comp = compression.StochasticQuantize(4, 3)
    out = comp.compress(np.zeros(3), core.make_rng(3))
    assert np.array_equal(out, np.zeros(3))


def test_quantize_unbiased_monte_carlo():
    comp = compression.StochasticQuantize(4, 8)
    rng = core.make_rng(4)
    x = rng.standard_normal(8)
    samples = np.stack([comp.compress(x, rng) for _ in range(20_000)])
    se = samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])
    assert np.all(np.abs(samples.mean(axis=0) - x) <= 4.0 * np.maximum(se, 1e-12))


def test_quantize_outputs_on_grid():
    comp = compression.StochasticQuantize(4, 5)
    rng = core.make_rng(5)
    x = rng.standard_normal(5)
    out = comp.compress(x, rng)
    scale = np.max(np.abs(x))
    levels = np.abs(out) / (scale / comp.levels)
    assert np.allclose(levels, np.round(levels), atol=1e-9)


def test_fixed_mask_deterministic_and_biased():
    mask = compression.FixedMask(np.array([1.0, 0.0, 1.0, 0.0]))
    x = np.ones(4)
    out = mask.compress(x, core.make_rng(6))
    assert np.array_equal(out, [1.0, 0.0, 1.0, 0.0])
    assert mask.biased
    stats = compression.verify_compressor(mask, [x], trials=50, rng=core.make_rng(7))
    assert stats.biased_flag
    assert not stats.unbiased_ok
    # mean error is exactly -1 on each masked coordinate of the all-ones vector
    assert stats.max_abs_mean_error == pytest.approx(1.0, abs=1e-15)


def test_fixed_mask_rejects_non_binary():
    with pytest.raises(ValueError):
        compression.FixedMask(np.array([0.5, 1.0]))


def test_fixed_mask_random_sparsity():
    mask = compression.FixedMask.random(8, 0.25, core.make_rng(8))
    assert int(np.sum(mask.mask == 0.0)) == 2


def test_verify_compressor_contracts():
    rng = core.make_rng(9)
    points = [rng.standard_normal(12) for _ in range(3)]
    for comp in (compression.IdentityCompressor(),
                 compression.RandK(3, 12),
                 compression.StochasticQuantize(4, 12)):
        stats = compression.verify_compressor(comp, points, trials=4000, rng=rng)
        assert stats.unbiased_ok, comp.kind
        assert stats.variance_ok, comp.kind
        assert stats.declared_omega == comp.omega


def test_verify_compressor_rejects_zero_trials():
    with pytest.raises(ValueError):
        compression.verify_compressor(compression.IdentityCompressor(), [np.ones(2)],
                                      trials=0, rng=core.make_rng(10))
