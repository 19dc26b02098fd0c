import os

import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """3 subjects x 11 views with one normal, bag and coat walk each."""
    from gaitgts.synth import casia_like_specs, write_corpus
    root = str(tmp_path_factory.mktemp("small_corpus"))
    specs = casia_like_specs(3, corpus_seed=5, sequences=(1, 1, 1))
    write_corpus(specs, root)
    return root, specs


def pytest_report_header(config):
    from gaitgts.kernels import BACKEND
    return f"gaitgts kernel backend: {BACKEND}" + (
        " (GAITGTS_PURE_PYTHON set)" if os.environ.get("GAITGTS_PURE_PYTHON") else "")


PIPELINE = dict(subjects=10, seed=0, tuning_size=5, population=12, generations=4)


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """Synthesise, extract, tune and evaluate the 10-subject corpus once per session.

    Returns a dict of paths plus the wall time of every stage.
    """
    import time
    from gaitgts.cli import main
    base = tmp_path_factory.mktemp("pipeline")
    corpus, gts, whole = (str(base / n) for n in ("corpus", "gts", "whole"))
    templates = str(base / "templates")
    common = ["--seed", str(PIPELINE["seed"]), "--tuning-size", str(PIPELINE["tuning_size"]),
              "--templates", templates, "--jobs", "1"]
    stages = [
        ("synth", ["synth", "--corpus", corpus, "--subjects", str(PIPELINE["subjects"]), "--out", gts]),
        ("extract", ["extract", "--corpus", corpus, "--out", gts] + common),
        ("tune", ["tune", "--out", gts, "--population", str(PIPELINE["population"]),
                  "--generations", str(PIPELINE["generations"])] + common),
        ("evaluate", ["evaluate", "--out", gts] + common),
        ("whole", ["evaluate", "--out", whole, "--whole-template"] + common),
    ]
    times = {}
    for name, argv in stages:
        t0 = time.perf_counter()
        assert main(argv) == 0, name
        times[name] = time.perf_counter() - t0
    return dict(corpus=corpus, templates=templates, gts=gts, whole=whole, times=times,
                common=common, base=base)


# --- acceptance report -----------------------------------------------------------

_CRITERIA = {}


def pytest_addoption(parser):
    parser.addoption("--casia", default=os.environ.get("GAITGTS_CASIA_ROOT"),
                     help="root of a licensed CASIA-B silhouette corpus (enables criterion 9)")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        number, title = marker.args
        status = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        detail = "; ".join(str(v) for k, v in report.user_properties if k == "detail")
        _CRITERIA[number] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[number]
        line = f"criterion {number:2d} {status}: {title}"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))


def pytest_collection_modifyitems(items):
    for item in items:
        if "pipeline" in getattr(item, "fixturenames", ()):
            item.add_marker(pytest.mark.slow)
