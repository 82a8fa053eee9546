import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from simdis.labels import LabelSet

settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")


@st.composite
def label_sets(draw, universe_size=None, max_universe=8):
    size = universe_size or draw(st.integers(1, max_universe))
    bits = draw(st.integers(1, (1 << size) - 1))
    return LabelSet(bits, size)


@st.composite
def label_set_pairs(draw, max_universe=8):
    size = draw(st.integers(1, max_universe))
    return draw(label_sets(size)), draw(label_sets(size))


FIXTURE_ANCHOR = (0, 1, 2)
FIXTURE_SAMPLES = ((3, 4, 5), (0, 1, 2), (0, 3, 4), (0, 1), (0, 1, 2, 3, 4))


@pytest.fixture
def relation_sets():
    anchor = LabelSet.of(FIXTURE_ANCHOR, 6)
    return anchor, [LabelSet.of(t, 6) for t in FIXTURE_SAMPLES]


@pytest.fixture
def relation_batch():
    """Anchor at row 0 followed by p1..p5, orthonormal one-hot embeddings."""
    from simdis.losses import batch_from_arrays

    return batch_from_arrays(np.eye(6), [FIXTURE_ANCHOR, *FIXTURE_SAMPLES], 1.0, universe_size=6)
