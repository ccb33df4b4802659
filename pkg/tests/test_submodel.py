import numpy as np
import pytest

from gradnet.errors import ExprParseError, SchemaError, TableNotFound
from gradnet.framework.netlist import SubModelSpec
from gradnet.primitives.element import AC, DC, TRAN
from gradnet.primitives.submodel import (EXPRESSION, LOOKUP_TABLE, ExpressionSubModel, LookupTableSubModel, SimInfo,
    compile, resolve_loader)

LOADER = 'SimInfo->lut.MosLookup("NMOSTYPE",\n      /path/to/data; SimInfo=SimInfo)'
MOS_SIGNALS = ["gate", "source", "drain", "bulk", "gnd"]
MOS_PARAMS = ["MosL", "MosW"]
MOS_INTRINSIC = ("ID", "GDS", "CDD", "CSS", "CGG", "CGS", "CGD", "GM", "GMB")


def test_expression_submodel_splits_jacobians():
    sm = ExpressionSubModel("[1e2*Rlength/Rwidth, l - r,]", ["RValue", "V"], ["l", "r", "gnd"], ["Rlength", "Rwidth"])
    ev = sm.eval(np.array([3.0, 1.0, 0.0]), np.array([2.0, 1.0]))
    np.testing.assert_allclose(ev.intrp, [200.0, 2.0])
    np.testing.assert_allclose(ev.J_s, [[0, 0, 0], [1, -1, 0]])
    np.testing.assert_allclose(ev.J_ip, [[100.0, -200.0], [0, 0]])


def test_expression_arity_must_match():
    with pytest.raises(ExprParseError):
        ExpressionSubModel("[1, 2]", ["a"], [], [])


def test_analysis_filter():
    sm = ExpressionSubModel("[1,]", ["a"], [], [], analyses = ("DC", "TRAN"))
    assert sm.active(DC) and sm.active(TRAN) and not sm.active(AC)
    assert ExpressionSubModel("[1,]", ["a"], [], []).active(AC)


def test_table_path_resolution(tmp_path, monkeypatch):
    monkeypatch.delenv("GRADNET_TABLE_DIR", raising=False)
    assert SimInfo(table_dir=str(tmp_path)).table_path("NMOSTYPE.json") == tmp_path / "NMOSTYPE.json"
    monkeypatch.setenv("GRADNET_TABLE_DIR", str(tmp_path / "env"))
    assert SimInfo().table_path("x.json") == tmp_path / "env" / "x.json"
    assert SimInfo().with_corner("ss", 125).corner == "ss"


def test_model_loader_reads_the_device_table(table_dir):
    table = resolve_loader(LOADER, SimInfo("tt", 27, str(table_dir)))
    assert table.device == "NMOSTYPE"
    assert table.axis_names == ["Vgs", "Vds", "Vsb", "MosL", "MosW"]
    with pytest.raises(SchemaError):
        resolve_loader('SimInfo->lut.Other("NMOSTYPE")', SimInfo())
    with pytest.raises(SchemaError):
        resolve_loader("not a loader", SimInfo())
    with pytest.raises(TableNotFound):
        resolve_loader(LOADER, SimInfo("ff", 27, str(table_dir)))


@pytest.fixture
def mos(table_dir) -> LookupTableSubModel:
    spec = SubModelSpec(LOOKUP_TABLE, MOS_INTRINSIC, ("DC", "TRAN"), loader = LOADER)
    return compile(spec, MOS_SIGNALS, MOS_PARAMS, SimInfo("tt", 27, str(table_dir)))


def test_lookup_submodel_binds_axes_to_node_differences(mos):
    signals = np.array([1.2, 0.0, 2.0, 0.0, 0.0])
    ev = mos.eval(signals, np.array([1.0, 10.0]))
    assert ev.intrp.shape == (9,)
    assert ev.intrp[MOS_INTRINSIC.index("ID")] > 0
    #ID only depends on node differences, so the signal gradient sums to zero
    assert abs(ev.J_s[0].sum()) < 1e-10*np.abs(ev.J_s[0]).max()
    #gm from the slab agrees with dID/dVgate
    gm = ev.intrp[MOS_INTRINSIC.index("GM")]
    assert ev.J_s[0, 0] == pytest.approx(gm, rel=0.05)


def test_lookup_jacobians_match_central_differences(mos, central_difference):
    signals = np.array([1.3, 0.2, 2.4, 0.0, 0.0])
    ip = np.array([2.1, 17.0])
    ev = mos.eval(signals, ip)
    fd_s = central_difference(lambda s: mos.eval(s, ip).intrp, signals)
    fd_ip = central_difference(lambda q: mos.eval(signals, q).intrp, ip)
    scale = np.abs(ev.intrp)[:, None] + 1e-18
    np.testing.assert_allclose(ev.J_s/scale, fd_s/scale, atol=1e-5)
    np.testing.assert_allclose(ev.J_ip/scale, fd_ip/scale, atol=1e-5)


def test_extra_slab(mos):
    ev = mos.eval_slab("VTH", np.array([1.2, 0.0, 2.0, 0.0, 0.0]), np.array([1.0, 10.0]))
    assert 0.6 < ev.intrp[0] < 0.8


def test_describe_renames_inputs(mos):
    text = mos.describe({"gate" : "x[in]", "source" : "gnd", "MosW" : "W"})
    assert text[0].startswith("NMOSTYPE.ID(")
    assert "x[in]" in text[0] and "W" in text[0]


def test_compile_dispatch():
    sm = compile(SubModelSpec(EXPRESSION, ("R",), None, "[2*a,]"), ["gnd"], ["a"])
    assert isinstance(sm, ExpressionSubModel)
    assert sm.eval(np.zeros(1), np.array([3.0])).intrp[0] == 6.0
