import numpy as np
import pytest

from latmorph import autograd as ag

_CRITERIA: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = "PASS" if rep.outcome == "passed" else ("SKIP" if rep.skipped else "FAIL")
        _CRITERIA.setdefault(n, []).append(status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        results = _CRITERIA[n]
        if "FAIL" in results:
            status = "FAIL"
        elif all(r == "SKIP" for r in results):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"criterion {n:>2}: {status}  ({len(results)} checks)")


@pytest.fixture
def f64():
    with ag.precision(64):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


TOY_PAIRS = [("he went to the house", "eve gitdi"), ("see the roads", "yollar gor"),
             ("to come at the school", "okulda gelmek")]


def build_tiny(variant="lmm", pairs=TOY_PAIRS, seed=0, emb=6, hidden=6, lemma=3, features=2,
               mlp_hidden=5, src_merges=5, tgt_merges=8, dropout=0.0):
    from latmorph.models import ModelDims, build_model
    from latmorph.training import build_vocabularies

    sv, sb, tv, tb = build_vocabularies(variant, [s for s, _ in pairs], [t for _, t in pairs],
                                        src_merges, tgt_merges)
    dims = ModelDims(emb, hidden, lemma, features, mlp_hidden)
    return build_model(variant, dims, sv, sb, tv, np.random.default_rng(seed), tb, dropout)


@pytest.fixture
def tiny():
    return build_tiny
