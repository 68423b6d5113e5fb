"""Named synthetic suites used by the CLI, the bundled mini dataset and the ablation checks."""

from __future__ import annotations

import numpy as np

from .dataset import SynthSpec


def mini_suite(seed: int = 0) -> list[SynthSpec]:
    """Four short sequences (two square, two fan) covering the main phenomena."""
    return [
        SynthSpec(name="sq_linear", frames=60, image_size=128, motion="linear", start=(20, 60),
                  velocity=(1.5, 0.4), salt_pepper_rate=0.005, speckle_sigma=0.15, seed=seed + 1),
        SynthSpec(name="sq_crossover", frames=24, image_size=128, motion="crossover", start=(30, 60),
                  velocity=(2.0, 0.3), distractor_velocity=(-2.0, 0.8), distractor_gain=0.85,
                  salt_pepper_rate=0.005, speckle_sigma=0.15, seed=seed + 2),
        SynthSpec(name="fan_sinusoidal", frames=24, image_size=128, motion="sinusoidal", start=(40, 60),
                  velocity=(1.5, 0.0), amplitude=8.0, period=30.0, ghost=True, format="fan",
                  salt_pepper_rate=0.005, seed=seed + 3),
        SynthSpec(name="fan_small", frames=24, image_size=128, motion="linear", start=(50, 70),
                  velocity=(1.0, -0.5), target_sigma=(3.0, 2.6), target_intensity=70.0,
                  background_sigma=6.0, format="fan", seed=seed + 4),
    ]


def crossover_suite(count: int = 20, seed: int = 100) -> list[SynthSpec]:
    """Target and a similar object cross paths mid-sequence (AOC / SO)."""
    specs = []
    for i in range(count):
        rng = np.random.default_rng(seed + i)
        specs.append(SynthSpec(
            name=f"crossover_{i:03d}", motion="crossover", frames=60, image_size=160,
            start=(30 + rng.uniform(-5, 5), 80 + rng.uniform(-10, 10)),
            velocity=(2.0, rng.uniform(-0.6, 0.6)),
            distractor_velocity=(rng.uniform(-2.5, -1.5), rng.uniform(-1.5, 1.5)),
            cross_offset=(0.0, rng.uniform(-4, 4)),
            distractor_gain=rng.uniform(0.8, 1.0),
            salt_pepper_rate=0.005, speckle_sigma=0.15, seed=seed + i,
        ))
    return specs


def low_contrast_suite(count: int = 20, seed: int = 500) -> list[SynthSpec]:
    """Dim targets in heavy clutter (LAR / BI)."""
    specs = []
    for i in range(count):
        rng = np.random.default_rng(seed + i)
        specs.append(SynthSpec(
            name=f"lowcontrast_{i:03d}", motion="sinusoidal", frames=50, image_size=160,
            start=(40, 80 + rng.uniform(-10, 10)), velocity=(rng.uniform(1.0, 2.0), 0.0),
            amplitude=rng.uniform(5, 15), period=40.0, target_intensity=45.0,
            background_sigma=15.0, speckle_sigma=0.3, salt_pepper_rate=0.01, seed=seed + 500 + i,
        ))
    return specs


PRESETS = {
    "mini": mini_suite,
    "crossover": crossover_suite,
    "lowcontrast": low_contrast_suite,
}
