import numpy as np
import pytest

from gnssmap import _backend
from gnssmap.ingest import BuildingDataset, build_dataset
from gnssmap.synth import default_scene, generate, robustness_signal

TRUE_HEIGHT = 20.0


@pytest.fixture(params=_backend.available())
def kernels(request):
    return _backend.get(request.param)


@pytest.fixture(scope="session")
def robustness_scene():
    scene = default_scene(seed=0)
    syn = generate(scene, robustness_signal())
    return scene, syn, build_dataset(syn.records, scene.footprint)


def make_dataset(cn0, height, name="synthetic"):
    cn0 = np.asarray(cn0, dtype=float)
    return BuildingDataset(name, cn0, np.asarray(height, dtype=float), np.arange(len(cn0)))


def fixed_point_dataset(seed=0, n=600):
    """C/N0 takes two well-separated values split exactly at h = 20 m.

    Any signal threshold between the two values reproduces the height
    labelling, so the loop sits on a fixed point from the start.
    """
    rng = np.random.default_rng(seed)
    h = rng.uniform(0.0, 40.0, n)
    cn0 = np.where(h > 20.0, 45.0, 20.0)
    return make_dataset(cn0, h, "fixed-point")


def ratchet_dataset(seed=1, n=2000, outlier_share=0.2, sd=3.0):
    """Adversarial set on which the co-training loop never settles.

    A share of low-height tuples carries C/N0 spread over the whole range,
    which holds the refitted signal classifier's upper asymptote near
    ``1 - outlier_share``.  Its 0.5 crossing then sits above its inflection,
    so every relabelling raises the threshold again.
    """
    rng = np.random.default_rng(seed)
    m = int(n * outlier_share / (1.0 - outlier_share))
    h = np.concatenate([rng.uniform(0.0, 40.0, n), np.full(m, 0.5)])
    cn0 = np.concatenate([h[:n] + 20.0 + rng.normal(0.0, sd, n), rng.uniform(20.0, 60.0, m)])
    return make_dataset(cn0, h, "ratchet")


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    n, title = mark.args
    ok = _CRITERIA.get(n, (True, title))[0] and not rep.failed
    if rep.when == "call" and rep.skipped:
        ok = False
    _CRITERIA[n] = (ok, title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, title = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}")
