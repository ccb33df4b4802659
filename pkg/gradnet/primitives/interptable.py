"""Tensor-product cubic interpolation tables used by lookup-table submodels.

A table file is JSON:

    {"Device": "NMOSTYPE",
     "Bindings": {"Vgs": "gate-source", ...},
     "Tables": [{"Corner": "tt", "Temperature": 27,
                 "Axes": [{"Name": "Vgs", "Grid": [...]}, ...],
                 "Slabs": {"ID": {"Encoding": "base64", "Data": "..."}, "GDS": [...], ...}}]}

Slab payloads are row-major float64 arrays over the axis grids, either base64 encoded
little-endian bytes or (nested) JSON lists.
"""

from collections import Counter
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple
import base64
import json
import logging
import threading

import numpy as np

from gradnet.errors import AxisNotMonotonic, SchemaError, TableNotFound, TableShapeError

logger = logging.getLogger("gradnet")

#one reader at a time fills the file cache
_LOAD_LOCK = threading.Lock()

MIN_GRID = 4 #cubic support


def _slope(grid, j):
    """Weights of the Catmull-Rom slope at knot j, as (index, weight) pairs"""
    n = len(grid)
    if j == 0:
        d = grid[1]-grid[0]
        return ((1, 1/d), (0, -1/d))
    if j == n-1:
        d = grid[n-1]-grid[n-2]
        return ((n-1, 1/d), (n-2, -1/d))
    d = grid[j+1]-grid[j-1]
    return ((j+1, 1/d), (j-1, -1/d))


def axis_weights(grid : np.ndarray, q : float):
    """Stencil indices, value weights and derivative weights of the piecewise cubic Hermite
    interpolant with Catmull-Rom slopes at query q. Queries outside the grid are clamped and
    get zero derivative weights.

    Returns:
        idx (ndarray[int]): four grid indices (clipped at the ends, unused slots weigh 0)
        w (ndarray): value weights
        dw (ndarray): derivative weights
        clamped (bool): whether q was outside the grid
    """

    n = len(grid)
    clamped = bool(q < grid[0] or q > grid[-1])
    qc = min(max(q, grid[0]), grid[-1])

    i = int(np.searchsorted(grid, qc, side="right")) - 1
    i = min(max(i, 0), n-2)
    h = grid[i+1]-grid[i]
    t = (qc-grid[i])/h

    h00, h10, h01, h11 = 2*t**3-3*t**2+1, t**3-2*t**2+t, -2*t**3+3*t**2, t**3-t**2
    d00, d10, d01, d11 = 6*t**2-6*t, 3*t**2-4*t+1, -6*t**2+6*t, 3*t**2-2*t

    w = np.zeros(4)
    dw = np.zeros(4)
    base = i-1

    w[i-base] += h00
    w[i+1-base] += h01
    dw[i-base] += d00/h
    dw[i+1-base] += d01/h
    for k, c in _slope(grid, i):
        w[k-base] += h10*h*c
        dw[k-base] += d10*c
    for k, c in _slope(grid, i+1):
        w[k-base] += h11*h*c
        dw[k-base] += d11*c

    if clamped:
        dw[:] = 0

    idx = np.clip(np.arange(base, base+4), 0, n-1)
    return idx, w, dw, clamped


class InterpTable:
    """A gridded multi-slab table sampled for one (corner, temperature) condition"""

    def __init__(self, axes : Sequence[Tuple[str, Sequence[float]]], values : np.ndarray, slabs : Sequence[str],
            corner : str = None, temperature : float = None, bindings : Dict[str, str] = None, device : str = None):
        """
        Args:
            axes (list): (name, grid) pairs, one per table dimension
            values (ndarray): shape (len(grid_0), ..., len(grid_d-1), len(slabs))
            slabs (list[str]): names of the stored quantities
            corner (str): process corner tag
            temperature (float): temperature in degrees C
            bindings (dict): default expression for each axis, in terms of module nodes and params
            device (str): device name the table describes
        """

        self.axis_names = [name for name, _ in axes]
        self.grids = []
        for name, grid in axes:
            grid = np.asarray(grid, dtype=float)
            if grid.ndim != 1 or len(grid) < MIN_GRID:
                raise TableShapeError("Axis %s needs at least %d grid points"%(name, MIN_GRID))
            if not np.all(np.diff(grid) > 0):
                raise AxisNotMonotonic("Axis %s is not strictly increasing"%name)
            self.grids.append(grid)

        self.values = np.asarray(values, dtype=float)
        self.slabs = list(slabs)
        shape = tuple(len(g) for g in self.grids) + (len(self.slabs),)
        if self.values.shape != shape:
            raise TableShapeError("Table values have shape %s, expected %s"%(self.values.shape, shape))

        self.corner = corner
        self.temperature = temperature
        self.bindings = dict(bindings or {})
        self.device = device

        self._clamps = Counter()
        self._lock = threading.Lock()

    def ndim(self):
        return len(self.grids)

    def slab_index(self, name : str) -> int:
        try:
            return self.slabs.index(name)
        except ValueError:
            raise TableShapeError("Table for %s has no slab %s"%(self.device, name))

    def clamp_counts(self) -> Counter:
        """Number of clamped queries per axis name since the table was loaded"""
        with self._lock:
            return Counter(self._clamps)

    def interpolate(self, point : Sequence[float], slabs : Optional[Sequence[int]] = None):
        """Evaluate the interpolant at a point.

        Args:
            point (list[float]): one coordinate per axis
            slabs (list[int]): slab indices to evaluate, all by default

        Returns:
            (ndarray, ndarray): values, shape (S,), and gradient with respect to the point, shape (S, ndim)
        """

        if slabs is None:
            slabs = range(len(self.slabs))
        slabs = list(slabs)

        stencil = []
        for name, grid, q in zip(self.axis_names, self.grids, point):
            idx, w, dw, clamped = axis_weights(grid, float(q))
            if clamped:
                with self._lock:
                    self._clamps[name] += 1
                logger.debug("%s table query %s=%g clamped to [%g, %g]"%(self.device, name, q, grid[0], grid[-1]))
            stencil.append((idx, w, dw))

        block = self.values[np.ix_(*[s[0] for s in stencil], slabs)]

        def contract(weights):
            r = block
            for wk in weights:
                r = np.tensordot(wk, r, axes=(0, 0))
            return r

        vals = contract([s[1] for s in stencil])
        grad = np.empty((len(slabs), len(stencil)))
        for a in range(len(stencil)):
            grad[:, a] = contract([s[2] if k == a else s[1] for k, s in enumerate(stencil)])
        return vals, grad


def _decode_slab(payload, shape, name):
    if isinstance(payload, dict):
        if payload.get("Encoding") != "base64" or "Data" not in payload:
            raise SchemaError("Slab %s must be a list or a base64 object"%name)
        raw = np.frombuffer(base64.b64decode(payload["Data"]), dtype="<f8")
    elif isinstance(payload, list):
        raw = np.asarray(payload, dtype=float).ravel()
    else:
        raise SchemaError("Slab %s must be a list or a base64 object"%name)
    if raw.size != int(np.prod(shape)):
        raise TableShapeError("Slab %s has %d values, expected %d"%(name, raw.size, int(np.prod(shape))))
    return raw.reshape(shape)


def _encode_slab(array):
    data = np.ascontiguousarray(array, dtype="<f8").tobytes()
    return {"Encoding" : "base64", "Data" : base64.b64encode(data).decode("ascii")}


def _parse_table(entry, device, bindings):
    try:
        axes = [(ax["Name"], ax["Grid"]) for ax in entry["Axes"]]
        slab_data = entry["Slabs"]
        corner = entry["Corner"]
        temperature = float(entry["Temperature"])
    except (KeyError, TypeError) as e:
        raise SchemaError("Malformed table entry for %s: missing %s"%(device, e))

    shape = tuple(len(grid) for _, grid in axes)
    names = list(slab_data.keys())
    values = np.stack([_decode_slab(slab_data[name], shape, name) for name in names], axis=-1)
    return InterpTable(axes, values, names, corner, temperature, bindings, device)


@lru_cache(maxsize=None)
def _load(path : str, corner : str, temperature : float) -> InterpTable:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise TableNotFound("No table file %s"%path, corner, temperature)
    except json.JSONDecodeError as e:
        raise SchemaError("Table file %s is not valid JSON: %s"%(path, e))

    if not isinstance(doc, dict) or not isinstance(doc.get("Tables"), list):
        raise SchemaError("Table file %s has no Tables list"%path)
    device = doc.get("Device", Path(path).stem)
    bindings = doc.get("Bindings", {})

    for entry in doc["Tables"]:
        if entry.get("Corner") == corner and np.isclose(float(entry.get("Temperature", np.nan)), temperature):
            table = _parse_table(entry, device, bindings)
            logger.info("Loaded %s table for corner %s at %g C"%(device, corner, temperature))
            return table

    raise TableNotFound("%s has no table for corner %s at %g C"%(path, corner, temperature), corner, temperature)


def load_table(path, corner : str, temperature : float) -> InterpTable:
    """Load the table for one (corner, temperature) condition from a table file. Loaded
    tables are cached and shared, so repeated compiles of the same corner do not re-read."""
    with _LOAD_LOCK:
        return _load(str(Path(path).resolve()), corner, float(temperature))


def write_table_file(path, device : str, bindings : Dict[str, str], tables : List[InterpTable]):
    """Write tables for several conditions of one device into a single table file"""

    entries = []
    for table in tables:
        entries.append({
            "Corner" : table.corner,
            "Temperature" : table.temperature,
            "Axes" : [{"Name" : name, "Grid" : grid.tolist()} for name, grid in zip(table.axis_names, table.grids)],
            "Slabs" : {name : _encode_slab(table.values[..., k]) for k, name in enumerate(table.slabs)}
        })

    with open(path, "w", encoding="utf-8") as f:
        json.dump({"Device" : device, "Bindings" : bindings, "Tables" : entries}, f, indent=1)
    _load.cache_clear()
