import os

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=50, deadline=None)
settings.register_profile("stress", max_examples=1000, deadline=None)
settings.load_profile(os.environ.get("GESTUREDIFF_HYPOTHESIS", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


TINY_MODEL = {"hidden": 16, "layers": 1, "width": 16, "blocks": 2, "emb_dim": 8}


def tiny_config(takes, eval_takes=(), **sections):
    from gesturediff.config import parse_config
    raw = {"seed": 5, "data": {"takes": list(takes), "eval_takes": list(eval_takes)},
           "model": dict(TINY_MODEL), "schedule": {"n_steps": 10},
           "train": {"batch_size": 4, "max_epochs": 3}, "metrics": {"runs": 3}}
    for k, v in sections.items():
        raw.setdefault(k, {}).update(v)
    return parse_config(raw)


@pytest.fixture(scope="session")
def takes(tmp_path_factory):
    from gesturediff.synthetic import write_synthetic_take
    d = tmp_path_factory.mktemp("takes")
    return [write_synthetic_take(str(d), f"take{i}", 8.0, seed=i) for i in range(3)]


@pytest.fixture(scope="session")
def trained(tmp_path_factory, takes):
    from gesturediff import pipeline
    cfg = tiny_config(takes[:2], takes[2:])
    root = tmp_path_factory.mktemp("run")
    pipeline.cmd_prepare(cfg, str(root / "ds"))
    ckpt = pipeline.cmd_train(cfg, str(root / "ds"), str(root / "train"))
    return cfg, root, ckpt


# acceptance report: one PASS/FAIL line per criterion, whatever pytest's capture mode

_ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """``criterion(k, detail)`` tags the running test as acceptance criterion ``k``."""
    def tag(k, detail=""):
        request.node.user_properties.append(("criterion", k))
        request.node.user_properties.append(("detail", detail))
    return tag


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    props = dict(item.user_properties)
    if "criterion" not in props or rep.when not in ("setup", "call"):
        return
    if rep.when == "call" or rep.failed:
        _ACCEPTANCE[props["criterion"]] = (rep.passed, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
