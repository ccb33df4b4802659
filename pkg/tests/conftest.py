from pathlib import Path

import numpy as np
import pytest

from gradnet.framework.compiledcircuit import CompiledCircuit
from gradnet.primitives.submodel import SimInfo
from gradnet.sizing import tablegen

CORPUS = Path(__file__).resolve().parent.parent / "gradnet" / "netlists"
FIXTURES = Path(__file__).resolve().parent / "fixtures"

#corners tabulated for the fast suite
TEST_CORNERS = [("tt", 27.0), ("ss", 125.0)]


@pytest.fixture(scope="session")
def corpus() -> Path:
    return CORPUS


@pytest.fixture(scope="session")
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def table_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("tables")
    tablegen.write_tables(out, TEST_CORNERS)
    return out


@pytest.fixture(scope="session")
def all_corner_tables(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("all_tables")
    tablegen.write_tables(out)
    return out


@pytest.fixture
def load(corpus, table_dir):
    """Compile a corpus netlist by file name against the synthetic tables"""
    def _load(name, corner = "tt", temperature = 27.0):
        return CompiledCircuit.from_file(corpus / name, SimInfo(corner, temperature, str(table_dir)))
    return _load


def _central_difference(f, p, h = 1e-6):
    """Central differences of f (scalar or vector valued) at p, one column per entry of p.
    The step is relative to the entry's magnitude."""

    p = np.asarray(p, dtype=float)
    f0 = np.asarray(f(p))
    out = np.zeros(f0.shape + p.shape, dtype=np.result_type(f0, float))
    for k in range(len(p)):
        step = h*max(1.0, abs(p[k]))
        hi, lo = p.copy(), p.copy()
        hi[k] += step
        lo[k] -= step
        out[..., k] = (np.asarray(f(hi)) - np.asarray(f(lo)))/(2*step)
    return out


@pytest.fixture(scope="session")
def central_difference():
    return _central_difference
