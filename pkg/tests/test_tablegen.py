import numpy as np
import pytest

from gradnet.primitives.interptable import load_table
from gradnet.sizing import tablegen
from gradnet.sizing.tablegen import NMOS, PMOS, SLABS, square_law

POINTS = [
    (1.5, 2.0, 0.1, 1.0, 10.0), #saturation
    (1.5, 0.3, 0.5, 2.0, 20.0), #triode
    (0.6, 1.0, 0.2, 3.0, 4.0), #subthreshold
]


@pytest.mark.parametrize("point", POINTS)
@pytest.mark.parametrize("params", [NMOS, PMOS])
def test_conductances_are_current_derivatives(point, params):
    h = 1e-6
    slabs = square_law(*point, params)

    def current(k, delta):
        p = list(point)
        p[k] += delta
        return square_law(*p, params)["ID"]

    d = [(current(k, h) - current(k, -h))/(2*h) for k in range(3)]
    assert slabs["GM"] == pytest.approx(d[0], rel=1e-5, abs=1e-12)
    assert slabs["GDS"] == pytest.approx(d[1], rel=1e-5, abs=1e-12)
    assert slabs["GMB"] == pytest.approx(-d[2], rel=1e-5, abs=1e-12)


def test_current_is_continuous_at_the_saturation_edge():
    vds = np.linspace(0, 3, 30001)
    slabs = square_law(2.0, vds, 0.0, 1.0, 10.0, NMOS)
    assert np.abs(np.diff(slabs["ID"])).max() < 1e-3*slabs["ID"].max()
    assert np.abs(np.diff(slabs["GDS"])).max() < 1e-2*slabs["GDS"].max()


def test_polarity_and_shape():
    (nmos,) = tablegen.generate("NMOSTYPE", [("tt", 27.0)])
    (pmos,) = tablegen.generate("PMOSTYPE", [("tt", 27.0)])
    assert nmos.values.shape == (17, 11, 6, 5, 5, len(SLABS))
    id_ = SLABS.index("ID")
    assert np.all(nmos.values[..., id_] >= 0)
    assert np.all(pmos.values[..., id_] <= 0)
    assert pmos.values[..., id_].min() < 0
    assert nmos.bindings["Vgs"] == "gate-source"
    assert pmos.bindings["Vgs"] == "source-gate"


def test_corners_order_the_current():
    point = (1.5, 2.0, 0.0, 1.0, 10.0)
    current = lambda mobility, t: square_law(*point, NMOS, mobility, t)["ID"]
    assert current(0.9, 27.0) < current(1.0, 27.0) < current(1.1, 27.0)
    #the threshold drops as temperature rises
    assert square_law(*point, NMOS, 1.0, 125.0)["VTH"] < square_law(*point, NMOS, 1.0, -40.0)["VTH"]


def test_mismatch_draw_is_seeded():
    vth = lambda seed, sigma: tablegen.generate("NMOSTYPE", [("tt", 27.0)], seed, sigma)[0].values[0, 0, 0, 0, 0, SLABS.index("VTH")]
    nominal = vth(0, 0.0)
    assert nominal == pytest.approx(NMOS.vth0)
    assert vth(3, 0.01) == vth(3, 0.01)
    assert vth(3, 0.01) != vth(4, 0.01)
    assert vth(3, 0.01) != nominal


def test_write_and_load(tmp_path):
    paths = tablegen.write_tables(tmp_path, [("tt", 27.0), ("ff", -40.0)], devices = ["NMOSTYPE"])
    assert paths == [tmp_path / "NMOSTYPE.json"]
    (expected,) = tablegen.generate("NMOSTYPE", [("ff", -40.0)])
    table = load_table(paths[0], "ff", -40.0)
    np.testing.assert_allclose(table.values, expected.values, rtol=1e-15)
    assert table.axis_names == tablegen.AXES
    assert table.bindings["Vds"] == "drain-source"


def test_default_corner_set():
    assert len(tablegen.CORNERS) == 9
    assert ("ss", 125.0) in tablegen.CORNERS and ("ff", -40.0) in tablegen.CORNERS
