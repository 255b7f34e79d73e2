import numpy as np
import pytest

from weqa.corpus import build_corpus, procedural_texture
from weqa.imgio import ColorImage


def rgb_image(h=32, w=32, seed=0) -> ColorImage:
    rng = np.random.default_rng(seed)
    return ColorImage.from_rgb(rng.uniform(size=(h, w, 3)))


def smooth_image(h=64, w=64, seed=0) -> ColorImage:
    return procedural_texture(seed, size=max(h, w), seed=seed)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Four 64 px references with noise levels 1..5."""
    out = tmp_path_factory.mktemp("corpus")
    refs = {f"t{i}": procedural_texture(i, 64, seed=3) for i in range(4)}
    manifest = build_corpus(refs, out, ("gaussian_noise",), (1, 2, 3, 4, 5), seed=7)
    return out, manifest


@pytest.fixture(scope="session")
def small_model(small_corpus):
    """A 20-tree forest trained on the small noise corpus."""
    from weqa.descriptors import SamplingPolicy, sample_training_set
    from weqa.forest import ForestConfig, train_forest

    _, manifest = small_corpus
    ts = sample_training_set(manifest, SamplingPolicy(per_image=300, seed=1))
    return train_forest(ts.X, ts.y, ForestConfig(n_trees=20, seed=1), ts.meta)


# --- acceptance summary ----------------------------------------------------------

_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    measured = dict(item.user_properties).get("measured", "")
    _CRITERIA.append((marker.args[0], marker.args[1], rep.passed, measured))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number, title, passed, measured in sorted(_CRITERIA, key=lambda r: r[0]):
        line = f"criterion {number:>2}  {'PASS' if passed else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{measured}]" if measured else ""))
