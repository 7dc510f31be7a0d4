import numpy as np
import pytest

from recurdet.synth import SceneSpec, generate, textured_constellation_template


MINING_VARIANCE_FLOOR = 0.03
"""Floor for mining tests on flat-background scenes.

Windows that clip a single intense pixel are proportional to each other
after mean subtraction and cross-match with correlation 1 anywhere; such
shape-free windows are exactly what the variance floor is meant to skip.
"""


@pytest.fixture(scope="session")
def clean_scene_25():
    """25 identical textured constellations, no jitter, no noise."""
    spec = SceneSpec(
        height=260,
        width=260,
        template=textured_constellation_template(),
        count=25,
        jitter=0,
        noise_sigma=0.0,
        rng_seed=7,
    )
    return generate(spec)
