"""Synthetic MOSFET lookup tables.

A smoothed square-law device stands in for characterized device data. The overdrive is a
softplus of V_gs - V_th so currents and conductances stay nonzero below threshold, and the
triode region uses the usual parabola so the current is C^1 across the saturation edge:

    V_ov = nVt*ln(1 + exp((V_gs - V_th)/nVt))
    ID   = 1/2*k*mu*(W/L)*(1 + lambda*V_ds)*(V_ov^2 - max(V_ov - V_ds, 0)^2)
    V_th = V_th0 + gamma*(sqrt(2phi + V_sb) - sqrt(2phi)) - eta*V_ds/L - 2 mV/C*(T - 27)

GM, GDS and GMB are the analytic derivatives of ID. Corners scale the mobility mu (ff +10%,
ss -10%). PMOS tables are written in source-referenced magnitudes (V_sg, V_sd, V_bs) with
ID stored negative, so the same module fragment serves both polarities.
"""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Sequence, Tuple
import logging

import numpy as np
from scipy.special import expit

from gradnet.primitives.interptable import InterpTable, write_table_file

logger = logging.getLogger("gradnet")

SLABS = ["ID", "GDS", "CDD", "CSS", "CGG", "CGS", "CGD", "GM", "GMB", "VTH"]

VGS_GRID = np.linspace(0, 4, 17)
VDS_GRID = np.linspace(0, 5, 11)
VSB_GRID = np.linspace(0, 2.5, 6)
L_GRID = np.linspace(1, 5, 5) #um
W_GRID = np.linspace(2, 50, 5) #um

AXES = ["Vgs", "Vds", "Vsb", "MosL", "MosW"]

MOBILITY = {"tt" : 1.0, "ff" : 1.1, "ss" : 0.9}
TEMPERATURES = [27.0, -40.0, 125.0]
CORNERS = [(corner, t) for corner in ("tt", "ff", "ss") for t in TEMPERATURES]

VTH_TEMPCO = -2e-3 #V/C
T_NOMINAL = 27.0
N_VT = 0.04


@dataclass(frozen=True)
class MosParams:
    polarity : str
    k : float #A/V^2, process transconductance
    vth0 : float #V, magnitude
    gamma : float = 0.4 #V^0.5
    phi2 : float = 0.7 #V
    lambda_l : float = 0.1 #um/V, channel length modulation is lambda_l/L
    eta : float = 0.02 #um, drain induced barrier lowering is eta*V_ds/L
    cox : float = 4.6e-15 #F/um^2
    cov : float = 0.3e-15 #F/um
    cj : float = 0.8e-15 #F/um


NMOS = MosParams("nmos", 100e-6, 0.7)
PMOS = MosParams("pmos", 40e-6, 0.8)

DEVICES = {"NMOSTYPE" : NMOS, "PMOSTYPE" : PMOS}

BINDINGS = {
    "nmos" : {"Vgs" : "gate-source", "Vds" : "drain-source", "Vsb" : "source-bulk", "MosL" : "MosL", "MosW" : "MosW"},
    "pmos" : {"Vgs" : "source-gate", "Vds" : "source-drain", "Vsb" : "bulk-source", "MosL" : "MosL", "MosW" : "MosW"},
}


def square_law(vgs, vds, vsb, L, W, params : MosParams, mobility : float = 1.0, temperature : float = T_NOMINAL) -> Dict[str, np.ndarray]:
    """Every slab of the device at the given (broadcastable) bias and geometry, in magnitudes"""

    root = np.sqrt(params.phi2 + np.maximum(vsb, 0))
    vth = (params.vth0 + params.gamma*(root - np.sqrt(params.phi2)) - params.eta*vds/L
        + VTH_TEMPCO*(temperature - T_NOMINAL))
    dvth_dvsb = params.gamma/(2*root)

    u = (vgs - vth)/N_VT
    vov = N_VT*np.logaddexp(0, u)
    s = expit(u) #dV_ov/dV_gs
    a = s*params.eta/L #dV_ov/dV_ds through the threshold

    tri = np.maximum(vov - vds, 0)
    core = vov**2 - tri**2
    lam = params.lambda_l/L
    beta = 0.5*params.k*mobility*W/L
    clm = 1 + lam*vds

    slabs = {}
    slabs["ID"] = beta*clm*core
    slabs["GM"] = beta*clm*2*(vov - tri)*s
    slabs["GDS"] = beta*(clm*(2*(vov - tri)*a + 2*tri) + lam*core)
    slabs["GMB"] = beta*clm*2*(vov - tri)*s*dvth_dvsb

    area = W*L*params.cox
    slabs["CGS"] = 2/3*area*s + params.cov*W
    slabs["CGD"] = params.cov*W + 0*vgs
    slabs["CGG"] = 0.5*area*(1 - s) #gate to bulk
    slabs["CDD"] = params.cj*W + 0*vgs
    slabs["CSS"] = params.cj*W + 0*vgs
    slabs["VTH"] = vth
    return slabs


def device_table(device : str, params : MosParams, corner : str, temperature : float) -> InterpTable:
    grids = [VGS_GRID, VDS_GRID, VSB_GRID, L_GRID, W_GRID]
    vgs, vds, vsb, L, W = np.meshgrid(*grids, indexing="ij")
    slabs = square_law(vgs, vds, vsb, L, W, params, MOBILITY[corner], temperature)
    if params.polarity == "pmos":
        slabs["ID"] = -slabs["ID"]
    values = np.stack([np.broadcast_to(slabs[name], vgs.shape) for name in SLABS], axis=-1)
    return InterpTable(list(zip(AXES, grids)), values, SLABS, corner, temperature, BINDINGS[params.polarity], device)


def generate(device : str, corners : Sequence[Tuple[str, float]] = CORNERS, seed : int = 0,
        vth_sigma : float = 0.0) -> List[InterpTable]:
    """Tables of one device for several corners. A nonzero vth_sigma shifts the device's threshold
    by one normal draw, seeded by seed and the device name, shared by all of its corners."""

    params = DEVICES[device]
    if vth_sigma:
        rng = np.random.default_rng([seed, sorted(DEVICES).index(device)])
        params = replace(params, vth0 = params.vth0 + rng.normal(0, vth_sigma))
        logger.info("%s threshold shifted to %.4f V"%(device, params.vth0))
    return [device_table(device, params, corner, temperature) for corner, temperature in corners]


def write_tables(out_dir, corners : Sequence[Tuple[str, float]] = CORNERS, seed : int = 0, vth_sigma : float = 0.0,
        devices : Sequence[str] = None) -> List[Path]:
    """Write <DEVICE>.json for every synthetic device into out_dir

    Args:
        out_dir (str): target directory, created if needed
        corners (list): (corner, temperature) conditions to tabulate
        seed (int): seed of the threshold mismatch draw
        vth_sigma (float): standard deviation of the threshold mismatch in V
        devices (list[str]): subset of NMOSTYPE, PMOSTYPE

    Returns:
        list[Path]: the written files
    """

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for device in devices or sorted(DEVICES):
        tables = generate(device, corners, seed, vth_sigma)
        path = out_dir / (device + ".json")
        write_table_file(path, device, BINDINGS[DEVICES[device].polarity], tables)
        logger.info("Wrote %d %s tables to %s"%(len(tables), device, path))
        paths.append(path)
    return paths
