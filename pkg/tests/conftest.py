import numpy as np
import pytest

from sirsteval.mask_ops import ProbMap


def build_split_merge_corpus():
    """Single-image corpus whose target PR sweep is known in closed form.

    Two true targets. The prediction near the first is a dumbbell: a bright
    3x3 lobe on the target, a dim bridge, and a bright stray endpoint. The
    prediction near the second target is a faint blob. With tau = 3 and
    thresholds (0.25, 0.5, 0.75) the pooled sweep yields precision/recall
    (1.0, 1.0), (1.0, 0.5), (0.5, 0.5): the faint blob drops out first, then
    the bridge breaks and the stray endpoint becomes an unmatched component.
    """
    height, width = 17, 48
    gt = np.zeros((height, width), dtype=bool)
    gt[7:10, 7:10] = True  # centroid (8, 8)
    gt[7:10, 39:42] = True  # centroid (8, 40)

    values = np.zeros((height, width))
    values[7:10, 7:10] = 0.9  # bright lobe on the first target
    values[8, 10:14] = 0.6  # bridge
    values[8, 14] = 0.9  # stray endpoint, 6 px from the first centroid
    values[8, 40] = 0.3  # faint blob on the second target

    corpus = [(ProbMap(values), gt)]
    thresholds = (0.25, 0.5, 0.75)
    expected = [(1.0, 1.0), (1.0, 0.5), (0.5, 0.5)]
    return corpus, thresholds, expected


@pytest.fixture
def split_merge_corpus():
    return build_split_merge_corpus()
