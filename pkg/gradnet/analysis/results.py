"""Result containers and their serialization. Numbers are always printed with 17 significant
digits so repeated runs produce identical files."""

from dataclasses import dataclass, field
from typing import List, Sequence
import csv
import json

import numpy as np

FLOAT_FORMAT = "%.17g"


def _fmt(value):
    return FLOAT_FORMAT%value


def dc_json(names : Sequence[str], x : Sequence[float]) -> str:
    """{name: value} for every unknown, node voltages and branch currents alike"""
    lines = ["  %s: %s"%(json.dumps(name), _fmt(value)) for name, value in zip(names, x)]
    if not lines:
        return "{}\n"
    return "{\n" + ",\n".join(lines) + "\n}\n"


def gradient_json(names : Sequence[str], grad : Sequence[float], loss : float = None) -> str:
    lines = []
    if loss is not None:
        lines.append('  "loss": %s'%_fmt(loss))
    inner = ",\n".join("    %s: %s"%(json.dumps(name), _fmt(g)) for name, g in zip(names, grad))
    lines.append('  "gradient": {\n%s\n  }'%inner if inner else '  "gradient": {}')
    return "{\n" + ",\n".join(lines) + "\n}\n"


@dataclass
class Trajectory:
    """States of a transient run, one row per time point"""

    times : np.ndarray
    states : np.ndarray
    names : List[str] = field(default_factory=list)

    def node(self, name):
        return self.states[:, self.names.index(name)]

    def write_csv(self, stream):
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["t"] + list(self.names))
        for t, row in zip(self.times, self.states):
            writer.writerow([_fmt(t)] + [_fmt(v) for v in row])

    def plot(self, nodes = None, ax = None):
        """Plot node waveforms against time"""
        from matplotlib import pyplot as plt

        if ax is None:
            _, ax = plt.subplots()
        for name in nodes or self.names:
            ax.plot(self.times, self.node(name), label = name)
        ax.set_xlabel("t [s]")
        ax.legend()
        return ax


@dataclass
class ACSweep:
    """Small-signal solutions over a frequency grid"""

    freqs : np.ndarray
    solutions : np.ndarray #len(freqs) x N complex
    names : List[str] = field(default_factory=list)

    def node(self, name):
        return self.solutions[:, self.names.index(name)]

    def magnitude_db(self, name):
        return 20*np.log10(np.abs(self.node(name)))

    def phase_deg(self, name):
        return np.degrees(np.angle(self.node(name)))

    def write_csv(self, stream, nodes = None):
        """Long format: freq_hz, node, re, im, mag_db, phase_deg"""
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["freq_hz", "node", "re", "im", "mag_db", "phase_deg"])
        nodes = nodes or self.names
        cols = [self.names.index(name) for name in nodes]
        for f, row in zip(self.freqs, self.solutions):
            for name, k in zip(nodes, cols):
                v = row[k]
                mag = 20*np.log10(abs(v)) if v != 0 else -np.inf
                writer.writerow([_fmt(f), name, _fmt(v.real), _fmt(v.imag), _fmt(mag), _fmt(np.degrees(np.angle(v)))])

    def plot(self, nodes = None, axes = None):
        """Bode plot, magnitude above phase"""
        from matplotlib import pyplot as plt

        if axes is None:
            _, axes = plt.subplots(2, 1, sharex = True)
        mag_ax, phase_ax = axes
        for name in nodes or self.names:
            mag_ax.semilogx(self.freqs, self.magnitude_db(name), label = name)
            phase_ax.semilogx(self.freqs, self.phase_deg(name), label = name)
        mag_ax.set_ylabel("magnitude [dB]")
        phase_ax.set_ylabel("phase [deg]")
        phase_ax.set_xlabel("f [Hz]")
        mag_ax.legend()
        return axes
