"""
PerturbKit Presets - Named noise locations & noise constants

Centralized repository for:
- Preset selectors, one per noise-location row of the reference experiments
  (all / bias / weights / add_norm / layer zones / encoder / decoder)
- Noise defaults (λ grids, zone split)

Enables adding new locations without touching the engine.
"""

import logging
from typing import Callable, Dict, List, Optional

from params.store import TensorKind, ZoneComponent
from noise.selector import All, KindIs, LayerIn, Nothing, Or, SelectorExpr, ZoneIs


logger = logging.getLogger(__name__)


class UnknownPreset(ValueError):
    """Preset name is not registered."""


# ============================================================================
# NOISE DEFAULTS
# ============================================================================


class NoiseDefaults:
    """Constants shared by the engine, harness and CLI."""

    # λ values swept by the global-perturbation reference method
    REFERENCE_LAMBDA_GRID: List[float] = [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3]
    # Extended grid covering the larger intensities that work for localized noise
    EXTENDED_LAMBDA_GRID: List[float] = [0.0, 0.1, 0.2, 0.3, 0.41, 0.5, 0.6, 0.8, 0.9, 1.0]

    # Gaussian noise std as a fraction of λ (keeps λ comparable to uniform)
    GAUSSIAN_STD_PER_LAMBDA: float = 0.5

    # Layer zones split the encoder at floor(L * fraction)
    ZONE_SPLIT_FRACTION: float = 0.5

    # Decimal places used in reports
    REPORT_DECIMALS: int = 6


# ============================================================================
# PRESET BUILDERS
# ============================================================================

PresetBuilder = Callable[[Optional[int]], SelectorExpr]


def _zone_split(layers: Optional[int]) -> int:
    if layers is None:
        raise ValueError("Layer-zone presets need the encoder depth L (layers=...)")
    if layers < 2:
        raise ValueError(f"Layer zones need at least 2 layers, got L={layers}")
    return max(1, int(layers * NoiseDefaults.ZONE_SPLIT_FRACTION))


def _layer_zone_low(layers: Optional[int]) -> SelectorExpr:
    return LayerIn(0, _zone_split(layers))


def _layer_zone_high(layers: Optional[int]) -> SelectorExpr:
    return LayerIn(_zone_split(layers), layers)


PRESETS: Dict[str, PresetBuilder] = {
    "all": lambda layers: All(),
    "none": lambda layers: Nothing(),
    "bias": lambda layers: KindIs(TensorKind.BIAS),
    "weights": lambda layers: KindIs(TensorKind.WEIGHT),
    # Residual adds have no parameters; their noise lands on the LayerNorm that follows.
    "add_norm": lambda layers: Or(
        KindIs(TensorKind.LAYER_NORM_GAIN), KindIs(TensorKind.LAYER_NORM_BIAS)
    ),
    "layer_zone_low": _layer_zone_low,
    "layer_zone_high": _layer_zone_high,
    "encoder": lambda layers: ZoneIs(ZoneComponent.ENCODER),
    "decoder": lambda layers: ZoneIs(ZoneComponent.DECODER),
}


# ============================================================================
# HELPER FUNCTIONS
# ============================================================================


def preset(name: str, layers: Optional[int] = None) -> SelectorExpr:
    """
    Selector for a named noise location.

    Args:
        name: Preset name (see list_presets())
        layers: Encoder depth L, required by layer_zone_low / layer_zone_high

    Returns:
        SelectorExpr

    Raises:
        UnknownPreset: If name is not registered
    """
    key = name.strip().lower()
    if key not in PRESETS:
        raise UnknownPreset(f"Unknown preset {name!r}; known presets: {', '.join(list_presets())}")
    return PRESETS[key](layers)


def list_presets() -> List[str]:
    return list(PRESETS)


def register_preset(name: str, builder: PresetBuilder) -> None:
    """
    Register a custom preset (runtime extension).

    Args:
        name: New preset name (lower-case)
        builder: Callable taking the encoder depth (or None) and returning a selector
    """
    key = name.strip().lower()
    if key in PRESETS:
        raise ValueError(f"Preset {key!r} already registered")
    PRESETS[key] = builder
    logger.info(f"Registered preset '{key}'")


def remove_preset(name: str) -> None:
    """Remove a previously registered preset."""
    key = name.strip().lower()
    if key not in PRESETS:
        raise UnknownPreset(f"Unknown preset {name!r}")
    del PRESETS[key]
    logger.info(f"Removed preset '{key}'")
