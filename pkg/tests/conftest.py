from pathlib import Path

import numpy as np
import pytest

from smckit import compile_model

DATA = Path(__file__).parent / "data"


def load_series(name: str) -> np.ndarray:
    lines = (DATA / name).read_text().strip().splitlines()
    return np.array([float(v) for v in lines[1:]])


@pytest.fixture(scope="session")
def lg_y():
    return load_series("lg.csv")


@pytest.fixture(scope="session")
def lg_graph(lg_y):
    return compile_model((DATA / "lg.mod").read_text(), data={"y": lg_y}, latent="x")


@pytest.fixture(scope="session")
def sv_y():
    return load_series("sv.csv")


@pytest.fixture(scope="session")
def sv_graph(sv_y):
    return compile_model(
        (DATA / "sv.mod").read_text(),
        constants={"T": 67},
        data={"y": sv_y},
        latent="x",
    )


@pytest.fixture(scope="session")
def lgA_y():
    return load_series("lgA.csv")


@pytest.fixture(scope="session")
def lgA_graph(lgA_y):
    return compile_model((DATA / "lgA.mod").read_text(), data={"y": lgA_y}, latent="x")


@pytest.fixture(scope="session")
def conj_y():
    return load_series("conj.csv")


@pytest.fixture(scope="session")
def conj_graph(conj_y):
    return compile_model(
        (DATA / "conj.mod").read_text(), data={"y": conj_y}, latent="x"
    )
