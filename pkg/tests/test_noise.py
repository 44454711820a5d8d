"""
Unit tests for the PerturbKit RNG and noise engine.

Tests cover:
- Population standard deviation
- Substream determinism and independence
- Exact replay of the frozen generator
- Uniform noise statistics (KS test, mean, bounds, variance scaling)
- Localization on fixture stores and both toy models
- λ = 0 / σ = 0 identities, order and thread invariance
- Reports, NoiseSpec validation, two-zone noise, non-finite results
"""

import json
import math

import numpy as np
import pytest
from scipy import stats

from noise.engine import (
    Distribution,
    NoiseSpec,
    NonFiniteResult,
    apply_noise,
    apply_noise_plan,
    apply_zone_noise,
    perturb_tensor,
    tensor_std,
)
from noise.presets import preset
from noise.rng import derive_seed, derive_substream
from noise.selector import All, Nothing, select
from params.store import ParamStore, TensorKind, TensorRecord, ZoneComponent, ZoneTag, store_equal
from tests.conftest import MIXED_LAYOUT, build_mixed_store


# ============================================================================
# ORACLE
# ============================================================================

M64 = (1 << 64) - 1


def oracle_mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return z ^ (z >> 31)


def oracle_uniforms(seed: int, name: str, n: int):
    h = 0xCBF29CE484222325
    for byte in name.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & M64
    key = oracle_mix(oracle_mix(seed) ^ h)
    out = []
    for k in range(n):
        x = oracle_mix((key + (k + 1) * 0x9E3779B97F4A7C15) & M64)
        out.append((x >> 11) * 2.0 ** -53)
    return out


# ============================================================================
# HELPERS
# ============================================================================


def rec(name, values, kind=TensorKind.WEIGHT, zone=None):
    return TensorRecord.from_array(name, np.asarray(values, dtype=np.float64), kind, zone or ZoneTag())


def changed_names(before: ParamStore, after: ParamStore):
    return {
        r.name for r in before
        if r.data.tobytes() != after.get(r.name).data.tobytes()
    }


def randomized(store: ParamStore, seed: int = 0) -> ParamStore:
    """Same layout, standard-normal values (so every tensor has σ > 0)."""
    rng = np.random.default_rng(seed)
    return store.replace({r.name: r.with_data(rng.standard_normal(r.size)) for r in store})


# ============================================================================
# TENSOR STD TESTS
# ============================================================================


class TestTensorStd:
    """Test σ(W)."""

    def test_constant_tensor(self):
        assert tensor_std(rec("c", [3.5, 3.5, 3.5, 3.5])) == 0.0

    def test_population_formula(self):
        assert tensor_std(rec("x", [0, 0, 0, 0, 0, 0, 0, 2])) == pytest.approx(math.sqrt(7) / 4, abs=1e-15)

    def test_symmetric_pair(self):
        assert tensor_std(rec("x", [-1, 1])) == 1.0

    def test_single_element(self):
        assert tensor_std(rec("x", [7.0])) == 0.0


# ============================================================================
# RNG TESTS
# ============================================================================


class TestSubstreams:
    """Test per-tensor stream derivation."""

    def test_same_inputs_same_draws(self):
        a = derive_substream(7, "a").uniform(100)
        b = derive_substream(7, "a").uniform(100)
        assert np.array_equal(a, b)

    def test_different_names_differ(self):
        a = derive_substream(7, "a").uniform(100)
        b = derive_substream(7, "b").uniform(100)
        assert np.any(a != b)

    def test_different_seeds_differ(self):
        a = derive_substream(7, "a").uniform(100)
        b = derive_substream(8, "a").uniform(100)
        assert np.any(a != b)

    def test_draws_in_unit_interval(self):
        u = derive_substream(123, "enc.0.q.weight").uniform(100_000)
        assert u.min() >= 0.0 and u.max() < 1.0

    def test_chunked_draws_continue_the_stream(self):
        whole = derive_substream(5, "x").uniform(10)
        stream = derive_substream(5, "x")
        parts = np.concatenate([stream.uniform(3), stream.uniform(7)])
        assert np.array_equal(whole, parts)

    def test_matches_oracle_replay(self):
        for seed, name in [(0, "a"), (7, "enc.0.q.weight"), (2**64 - 1, "head.tag.bias")]:
            assert derive_substream(seed, name).uniform(16).tolist() == oracle_uniforms(seed, name, 16)

    def test_seed_out_of_range(self):
        with pytest.raises(ValueError):
            derive_substream(-1, "a")
        with pytest.raises(ValueError):
            derive_substream(2**64, "a")

    def test_derive_seed_deterministic_and_sensitive(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
        assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)
        assert 0 <= derive_seed(2**64 - 1, 5) < 2**64


# ============================================================================
# PERTURB TENSOR TESTS
# ============================================================================


class TestPerturbTensor:
    """Test the per-tensor noise operation."""

    def test_lambda_zero_is_identity(self):
        r = rec("x", [1, 2, 3, 4])
        out = perturb_tensor(r, 0.0, derive_substream(1, "x"))
        assert out.data.tobytes() == r.data.tobytes()

    def test_constant_tensor_unchanged(self):
        r = rec("c", [2, 2, 2, 2])
        out = perturb_tensor(r, 5.0, derive_substream(1, "c"))
        assert out.data.tobytes() == r.data.tobytes()

    def test_golden_replay(self):
        """[1, 2, 3, 4] with λ = 0.8, replayed step by step."""
        r = rec("w", [1, 2, 3, 4])
        seed, lam = 2023, 0.8
        out = perturb_tensor(r, lam, derive_substream(seed, "w"))

        sigma = math.sqrt(1.25)
        expected = [
            np.float32(x + (u - 0.5) * lam * sigma)
            for x, u in zip([1.0, 2.0, 3.0, 4.0], oracle_uniforms(seed, "w", 4))
        ]
        assert out.data.tolist() == [float(e) for e in expected]

    def test_metadata_preserved(self):
        r = rec("enc.1.q.bias", [1, -2, 3], TensorKind.BIAS, ZoneTag(ZoneComponent.ENCODER, 1))
        out = perturb_tensor(r, 0.5, derive_substream(3, r.name))
        assert (out.name, out.shape, out.kind, out.zone) == (r.name, r.shape, r.kind, r.zone)

    def test_non_finite_result(self):
        big = np.tile([3.3e38, -3.3e38], 32)
        r = rec("huge", big)
        with pytest.raises(NonFiniteResult) as exc:
            perturb_tensor(r, 2.0, derive_substream(0, "huge"))
        assert exc.value.tensor_name == "huge"

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            perturb_tensor(rec("x", [1, 2]), -0.1, derive_substream(0, "x"))


class TestNoiseStatistics:
    """Test the distribution of the added noise."""

    @pytest.fixture(scope="class")
    def normal_record(self):
        rng = np.random.default_rng(42)
        return rec("big.weight", rng.standard_normal(1_000_000))

    def test_uniform_ks_and_mean(self, normal_record):
        lam = 0.8
        out = perturb_tensor(normal_record, lam, derive_substream(9, normal_record.name))
        sigma = tensor_std(normal_record)
        scaled = (out.data.astype(np.float64) - normal_record.data.astype(np.float64)) / sigma

        statistic, _ = stats.kstest(scaled, "uniform", args=(-lam / 2, lam))
        assert statistic < 0.01
        assert abs(scaled.mean()) < 0.002 * lam

    def test_uniform_deltas_bounded(self, normal_record):
        lam = 0.8
        out = perturb_tensor(normal_record, lam, derive_substream(10, normal_record.name))
        sigma = tensor_std(normal_record)
        delta = np.abs(out.data.astype(np.float64) - normal_record.data.astype(np.float64))
        rounding = float(np.spacing(np.float32(np.abs(out.data).max())))
        assert delta.max() <= lam / 2 * sigma + rounding

    def test_variance_proportionality(self, normal_record):
        """Doubling σ doubles the spread of the noise."""
        lam = 0.6
        wide = rec("wide.weight", 2.0 * normal_record.data.astype(np.float64))
        out_b = perturb_tensor(normal_record, lam, derive_substream(4, normal_record.name))
        out_a = perturb_tensor(wide, lam, derive_substream(4, wide.name))
        std_b = np.std(out_b.data.astype(np.float64) - normal_record.data.astype(np.float64))
        std_a = np.std(out_a.data.astype(np.float64) - wide.data.astype(np.float64))
        assert std_a / std_b == pytest.approx(2.0, rel=0.05)

    def test_gaussian_std_is_half_lambda(self, normal_record):
        lam = 0.8
        out = perturb_tensor(normal_record, lam, derive_substream(11, normal_record.name), Distribution.GAUSSIAN)
        sigma = tensor_std(normal_record)
        scaled = (out.data.astype(np.float64) - normal_record.data.astype(np.float64)) / sigma
        assert np.std(scaled) == pytest.approx(lam / 2, rel=0.01)
        assert abs(np.mean(scaled)) < 0.002


# ============================================================================
# APPLY NOISE TESTS
# ============================================================================


class TestApplyNoise:
    """Test store-level perturbation."""

    def test_none_selector_is_identity(self, mixed_store):
        noisy, report = apply_noise(mixed_store, NoiseSpec(lam=0.5, selector="none", seed=1))
        assert store_equal(noisy, mixed_store)
        assert report.tensors_touched == 0

    def test_bias_preset_changes_exactly_biases(self, mixed_store):
        spec = NoiseSpec(lam=0.41, selector=preset("bias"), seed=3)
        noisy, report = apply_noise(mixed_store, spec)
        expected = set(select(mixed_store, preset("bias")))
        assert changed_names(mixed_store, noisy) == expected
        assert report.tensors_touched == 7

    def test_all_preset_changes_every_varying_tensor(self, mixed_store):
        noisy, _ = apply_noise(mixed_store, NoiseSpec(lam=0.3, selector=All(), seed=5))
        varying = {r.name for r in mixed_store if tensor_std(r) > 0}
        assert changed_names(mixed_store, noisy) == varying

    @pytest.mark.parametrize("selector", ["all", "kind:weight", "zone:decoder or kind:embedding", "none"])
    def test_lambda_zero_identity_for_any_selector(self, mixed_store, selector):
        noisy, _ = apply_noise(mixed_store, NoiseSpec(lam=0.0, selector=selector, seed=99))
        assert store_equal(noisy, mixed_store)

    def test_input_store_not_mutated(self, mixed_store):
        before = build_mixed_store()
        apply_noise(mixed_store, NoiseSpec(lam=1.0, selector="all", seed=2))
        assert store_equal(mixed_store, before)

    def test_deterministic(self, mixed_store):
        spec = NoiseSpec(lam=0.7, selector="all", seed=17)
        a, _ = apply_noise(mixed_store, spec)
        b, _ = apply_noise(build_mixed_store(), spec)
        assert store_equal(a, b)

    def test_insertion_order_does_not_change_noise(self, mixed_store):
        spec = NoiseSpec(lam=0.7, selector="all", seed=17)
        order = list(reversed(range(len(MIXED_LAYOUT))))
        a, _ = apply_noise(mixed_store, spec)
        b, _ = apply_noise(build_mixed_store(order), spec)
        assert b.names() == list(reversed(a.names()))
        for name in a.names():
            assert a.get(name).data.tobytes() == b.get(name).data.tobytes()

    def test_thread_count_does_not_change_noise(self, mixed_store):
        spec = NoiseSpec(lam=0.7, selector="all", seed=17)
        a, report_a = apply_noise(mixed_store, spec, max_workers=1)
        b, report_b = apply_noise(mixed_store, spec, max_workers=4)
        assert store_equal(a, b)
        assert report_a.to_json() == report_b.to_json()

    def test_report_matches_deltas(self, mixed_store):
        noisy, report = apply_noise(mixed_store, NoiseSpec(lam=0.5, selector="kind:weight", seed=8))
        assert report.tensors_touched == 9
        assert report.elements_perturbed == sum(mixed_store.get(t.name).size for t in report.tensors)
        for t in report.tensors:
            old = mixed_store.get(t.name).data.astype(np.float64)
            delta = noisy.get(t.name).data.astype(np.float64) - old
            assert t.sigma == tensor_std(mixed_store.get(t.name))
            assert t.max_abs_delta == pytest.approx(np.abs(delta).max(), abs=0)
            assert t.mean_delta == pytest.approx(delta.mean(), rel=1e-12, abs=1e-15)
            assert t.max_abs_delta <= 0.25 * t.sigma + 1e-6

    def test_report_json(self, mixed_store):
        _, report = apply_noise(mixed_store, NoiseSpec(lam=0.41, selector="kind:bias", seed=3))
        payload = json.loads(report.to_json())
        assert payload["selector"] == "kind:bias"
        assert payload["distribution"] == "uniform"
        assert payload["totals"] == {"tensors_touched": 7, "elements_perturbed": 3 * 6 + 2}
        assert payload["tensors"][0]["lambda"] == 0.41


class TestLocalizationOnModels:
    """Changed tensors equal the selector's match set on both model types."""

    PRESETS = ["bias", "weights", "add_norm", "encoder", "decoder", "layer_zone_low", "layer_zone_high"]

    @pytest.mark.parametrize("name", PRESETS)
    def test_tagger(self, tiny_tagger, name):
        store = randomized(tiny_tagger.to_store())
        selector = preset(name, tiny_tagger.config.layers)
        noisy, _ = apply_noise(store, NoiseSpec(lam=0.5, selector=selector, seed=21))
        assert changed_names(store, noisy) == set(select(store, selector))

    @pytest.mark.parametrize("name", PRESETS)
    def test_seq2seq(self, tiny_seq2seq, name):
        store = randomized(tiny_seq2seq.to_store(), seed=1)
        selector = preset(name, tiny_seq2seq.config.layers)
        noisy, _ = apply_noise(store, NoiseSpec(lam=0.5, selector=selector, seed=22))
        assert changed_names(store, noisy) == set(select(store, selector))
        if name == "decoder":
            assert noisy is not store and changed_names(store, noisy)

    def test_fresh_init_biases_have_zero_sigma(self, tiny_tagger):
        """Zero-initialised tensors are σ = 0 and stay untouched."""
        store = tiny_tagger.to_store()
        noisy, _ = apply_noise(store, NoiseSpec(lam=1.0, selector="kind:bias", seed=1))
        assert store_equal(noisy, store)


# ============================================================================
# SPEC & PLAN TESTS
# ============================================================================


class TestNoiseSpec:
    """Test request validation."""

    def test_selector_text_is_parsed(self):
        spec = NoiseSpec(lam=0.2, selector="kind:bias", seed=1)
        assert spec.selector == preset("bias")

    def test_lambda_alias(self):
        assert NoiseSpec.model_validate({"lambda": 0.3}).lam == 0.3

    @pytest.mark.parametrize("lam", [-0.1, float("nan"), float("inf")])
    def test_invalid_lambda(self, lam):
        with pytest.raises(ValueError):
            NoiseSpec(lam=lam)

    def test_invalid_selector_type(self):
        with pytest.raises(ValueError):
            NoiseSpec(lam=0.1, selector=42)

    def test_seed_range(self):
        with pytest.raises(ValueError):
            NoiseSpec(lam=0.1, seed=2**64)

    def test_from_preset(self):
        spec = NoiseSpec.from_preset("layer_zone_high", lam=0.9, layers=4)
        assert spec.selector == preset("layer_zone_high", 4)


class TestPlansAndZones:
    """Test per-selector intensities."""

    def test_first_matching_entry_wins(self, mixed_store):
        plan = [(preset("bias"), 0.0), (All(), 0.5)]
        noisy, report = apply_noise_plan(mixed_store, plan, seed=4)
        changed = changed_names(mixed_store, noisy)
        assert not changed & set(select(mixed_store, preset("bias")))
        assert report.tensors_touched == len(mixed_store)

    def test_empty_plan_is_identity(self, mixed_store):
        noisy, report = apply_noise_plan(mixed_store, [], seed=4)
        assert store_equal(noisy, mixed_store)
        assert report.tensors_touched == 0

    def test_zone_noise_uses_two_intensities(self, mixed_store):
        noisy, report = apply_zone_noise(mixed_store, (0.1, 0.9), layers=3, seed=6)
        lam_by_name = {t.name: t.lam for t in report.tensors}
        assert lam_by_name["enc.0.q.weight"] == 0.1
        assert lam_by_name["enc.1.q.weight"] == 0.9
        assert lam_by_name["enc.2.q.bias"] == 0.9
        unlayered = {r.name for r in mixed_store if r.zone.layer_index is None}
        assert not changed_names(mixed_store, noisy) & unlayered

    def test_shared_zone_lambda_equals_single_selector(self, mixed_store):
        a, _ = apply_zone_noise(mixed_store, (0.4, 0.4), layers=4, seed=6)
        b, _ = apply_noise(mixed_store, NoiseSpec(lam=0.4, selector="layer:0..4", seed=6))
        assert store_equal(a, b)

    def test_nothing_plan_entry(self, mixed_store):
        noisy, _ = apply_noise_plan(mixed_store, [(Nothing(), 3.0)], seed=1)
        assert store_equal(noisy, mixed_store)


# ============================================================================
# RUN TESTS
# ============================================================================

if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
