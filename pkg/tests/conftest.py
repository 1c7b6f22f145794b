import sys

import numpy as np
import pytest

from supportseg import kernels
from supportseg.cluster import ClusterConfig
from supportseg.scene import DEFAULT_CLASSES, ClassTable
from supportseg.targets import CenterProbMap, DistanceMaps, PredictionBundle, SemanticLogits

CAR = 3
PERSON = 4
ROAD = 1

BACKENDS = [pytest.param(kernels.python_backend, id="python")]
if kernels.compiled_backend is not None:
    BACKENDS.append(pytest.param(kernels.compiled_backend, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Route the pipeline through one kernel backend."""
    for name in ("vote_assign", "greedy_nms", "tight_boxes"):
        monkeypatch.setattr(kernels, name, getattr(request.param, name))
    return request.param


def hand_bundle(labels, distances, center, class_table: ClassTable = DEFAULT_CLASSES, stride=1):
    """Bundle from explicit arrays: labels (H,W), distances (4,H,W), center (n_thing,H,W)."""
    labels = np.asarray(labels)
    n = len(class_table)
    logits = np.zeros((n,) + labels.shape, dtype=np.float32)
    np.put_along_axis(logits, labels[None].astype(np.int64), 10.0, axis=0)
    distances = np.asarray(distances, dtype=np.float32)
    valid = class_table.thing_mask()[labels]
    return PredictionBundle(
        SemanticLogits(logits, stride),
        DistanceMaps(distances, stride, valid),
        CenterProbMap(np.asarray(center, dtype=np.float32), stride),
        class_table,
    )


@pytest.fixture
def default_cfg():
    return ClusterConfig()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
