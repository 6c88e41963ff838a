import os

import numpy as np
import pytest

from openloop_fw.datasets import write_movielens

from .helpers import identity_instance


@pytest.fixture(autouse=True)
def clean_settings_environment(monkeypatch):
    for key in list(os.environ):
        if key.startswith("FW_"):
            monkeypatch.delenv(key)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def exterior():
    return identity_instance(n=20, seed=1, p=2.0, factor=0.5)


@pytest.fixture
def interior():
    return identity_instance(n=20, seed=1, p=2.0, factor=1.5)


@pytest.fixture
def ratings_file(tmp_path):
    """30 users x 40 items, roughly a third of the entries rated 1 to 5."""
    rng = np.random.default_rng(3)
    mask = rng.random((30, 40)) < 0.35
    rows, cols = np.nonzero(mask)
    values = rng.integers(1, 6, size=rows.size)
    return write_movielens(tmp_path / "u.data", rows, cols, values)


@pytest.fixture
def write_config(tmp_path):
    def write(name="experiment.ini", **values):
        lines = ["[experiment]"] + [f"{key} = {value}" for key, value in values.items()]
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n")
        return path

    return write
