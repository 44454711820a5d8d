"""
PerturbKit Noise - Selectors, presets and the perturbation engine.

Core Components:
- parse_selector / matches: boolean predicates over tensor metadata
- preset: named noise locations (all, bias, weights, add_norm, ...)
- derive_substream: per-tensor counter-based RNG streams
- apply_noise: σ-scaled uniform (or Gaussian) noise on selected tensors

Usage:
    from noise import NoiseSpec, apply_noise

    spec = NoiseSpec(lam=0.41, selector="kind:bias", seed=3)
    noisy_store, report = apply_noise(store, spec)
    print(report.to_json())
"""

from noise.selector import (
    All,
    And,
    KindIs,
    LayerIn,
    NameGlob,
    Not,
    Nothing,
    Or,
    SelectorExpr,
    SelectorParseError,
    ZoneIs,
    format_selector,
    matches,
    parse_selector,
    select,
)
from noise.presets import (
    NoiseDefaults,
    UnknownPreset,
    list_presets,
    preset,
    register_preset,
    remove_preset,
)
from noise.rng import Substream, derive_seed, derive_substream
from noise.engine import (
    Distribution,
    NoiseSpec,
    NonFiniteResult,
    PerturbationReport,
    TensorPerturbation,
    apply_noise,
    apply_noise_plan,
    apply_zone_noise,
    perturb_tensor,
    tensor_std,
)

__all__ = [
    # Selector
    "SelectorExpr",
    "KindIs",
    "NameGlob",
    "ZoneIs",
    "LayerIn",
    "All",
    "Nothing",
    "And",
    "Or",
    "Not",
    "parse_selector",
    "format_selector",
    "matches",
    "select",
    "SelectorParseError",
    # Presets
    "preset",
    "list_presets",
    "register_preset",
    "remove_preset",
    "UnknownPreset",
    "NoiseDefaults",
    # RNG
    "Substream",
    "derive_substream",
    "derive_seed",
    # Engine
    "Distribution",
    "NoiseSpec",
    "PerturbationReport",
    "TensorPerturbation",
    "NonFiniteResult",
    "tensor_std",
    "perturb_tensor",
    "apply_noise",
    "apply_noise_plan",
    "apply_zone_noise",
]
