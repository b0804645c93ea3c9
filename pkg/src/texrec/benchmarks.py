"""Predefined synthetic grating class sets used by demos and the test suite.

``easy4`` separates classes by widely spaced orientations with mild noise;
``hard4`` packs orientations 6 degrees apart under a placement jitter wider
than the class spacing, so single touches are genuinely ambiguous; ``freq4``
separates classes by spatial frequency only, with a large placement jitter
that augmentation must absorb; ``conf8`` is an eight-fabric universe for
confusion-matrix suites.
"""

import math

from .dataset import SyntheticClassParams

PRESETS = {}


def _register(name, classes):
    PRESETS[name] = tuple(classes)
    return PRESETS[name]


_register(
    "easy4",
    [
        SyntheticClassParams(orientation_degrees=a, frequency_cycles_per_image=8.0,
                             noise_sigma=0.05)
        for a in (0.0, 45.0, 90.0, 135.0)
    ],
)

_register(
    "hard4",
    [
        SyntheticClassParams(orientation_degrees=a, frequency_cycles_per_image=8.0,
                             placement_rotation_jitter_degrees=10.0, noise_sigma=0.15)
        for a in (0.0, 6.0, 12.0, 18.0)
    ],
)

_register(
    "freq4",
    [
        SyntheticClassParams(orientation_degrees=0.0, frequency_cycles_per_image=f,
                             placement_rotation_jitter_degrees=30.0,
                             phase_jitter=math.pi, noise_sigma=0.05)
        for f in (2.0, 4.0, 7.0, 12.0)
    ],
)

_register(
    "conf8",
    [
        SyntheticClassParams(orientation_degrees=a, frequency_cycles_per_image=8.0,
                             placement_rotation_jitter_degrees=5.0, noise_sigma=0.1)
        for a in (0.0, 22.5, 45.0, 67.5, 90.0, 112.5, 135.0, 157.5)
    ],
)


def preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown synthetic preset {name!r}; have {sorted(PRESETS)}") from None
