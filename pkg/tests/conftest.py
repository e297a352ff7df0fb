import pytest

from roadfusion import models, nn
from roadfusion.fusion import MultimodalClassifier, init_fusion


def untrained(arch, seed=0):
    shape = models.IMAGE_SHAPE if models.modality_of(arch) == "image" else models.AUDIO_SHAPE
    specs = models.build_architecture(arch, shape)
    return models.TrainedModel(arch, specs, nn.init_params(specs, seed), shape)


@pytest.fixture(scope="session")
def tiny_classifier():
    """Randomly initialised base models; enough to exercise the plumbing."""
    return MultimodalClassifier(untrained("mobilenet_base", 1), untrained("yamnet_base", 2), init_fusion())


# --- acceptance summary ---------------------------------------------------

_CRITERIA: dict[int, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    entry = _CRITERIA.setdefault(marker.args[0], [True, []])
    detail = dict(item.user_properties).get("detail")
    if rep.failed:
        entry[0] = False
        detail = detail or f"{item.name} failed during {rep.when}"
    if detail:
        entry[1].append(detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, details = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {'; '.join(details)}")
