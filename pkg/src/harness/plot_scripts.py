"""Standalone matplotlib scripts written next to the CSV tables they read.

The toolkit never imports matplotlib itself; the scripts are plain text.
"""
import json
from string import Template
from typing import List, Sequence, Tuple

from src.harness.config import RunConfig

_READER = '''import csv
from collections import defaultdict
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

HERE = Path(__file__).resolve().parent


def read_long(path):
    """Split a t,observable,site,value table into site profiles and scalar series."""
    profiles, scalars = defaultdict(dict), defaultdict(list)
    with open(path, newline="") as handle:
        for row in csv.DictReader(handle):
            t, name, value = float(row["t"]), row["observable"], float(row["value"])
            if row["site"] == "":
                scalars[name].append((t, value))
            else:
                profiles[name].setdefault(t, {})[int(row["site"])] = value
    return profiles, scalars
'''

_LONG_TABLE = Template(_READER + '''

profiles, scalars = read_long(HERE / "$csv")

for name, by_time in sorted(profiles.items()):
    times = sorted(by_time)
    sites = sorted(by_time[times[0]])
    grid = np.array([[by_time[t].get(s, np.nan) for s in sites] for t in times])
    fig, ax = plt.subplots(figsize=(6, 4))
    mesh = ax.pcolormesh(sites, times, grid, shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label=name)
    ax.set_xlabel("$xlabel")
    ax.set_ylabel("t")
    ax.set_title("$title")
    fig.tight_layout()
    fig.savefig(HERE / f"${prefix}_{name}.png", dpi=150)
    plt.close(fig)

if scalars:
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, points in sorted(scalars.items()):
        t, v = zip(*sorted(points))
        ax.plot(t, v, label=name)
    ax.set_xlabel("t")
    ax.legend()
    ax.set_title("$title")
    fig.tight_layout()
    fig.savefig(HERE / "${prefix}_scalars.png", dpi=150)
    plt.close(fig)
''')

_TRANSMISSION = Template('''import csv
from collections import defaultdict
from pathlib import Path

import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent

curves = defaultdict(list)
with open(HERE / "${prefix}_transmission.csv", newline="") as handle:
    for row in csv.DictReader(handle):
        curves[float(row["alpha"])].append((float(row["k"]), float(row["T"])))

fig, ax = plt.subplots(figsize=(6, 4))
for alpha, points in sorted(curves.items()):
    k, T = zip(*points)
    ax.plot(k, T, label=f"alpha = {alpha:g}")
ax.set_xlabel("k")
ax.set_ylabel("T(k)")
ax.set_xlim(0, 3.141592653589793)
ax.set_ylim(0, 1.05)
ax.legend()
ax.set_title("$title")
fig.tight_layout()
fig.savefig(HERE / "${prefix}_transmission.png", dpi=150)
''')

_OCCUPATION = Template('''import csv
from collections import defaultdict
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

HERE = Path(__file__).resolve().parent

by_species = defaultdict(lambda: defaultdict(dict))
with open(HERE / "${prefix}_occupation.csv", newline="") as handle:
    for row in csv.DictReader(handle):
        by_species[row["species"]][float(row["t"])][float(row["k"])] = float(row["occupation"])

fig, axes = plt.subplots(1, len(by_species), figsize=(10, 4), squeeze=False)
for ax, (species, by_time) in zip(axes[0], sorted(by_species.items())):
    times = sorted(by_time)
    ks = sorted(by_time[times[0]])
    grid = np.array([[by_time[t][k] for k in ks] for t in times])
    mesh = ax.pcolormesh(ks, times, grid, shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label=f"n_k ({species})")
    ax.set_xlabel("k")
    ax.set_ylabel("t")
fig.suptitle("$title")
fig.tight_layout()
fig.savefig(HERE / "${prefix}_occupation.png", dpi=150)
''')

_OVERLAY = Template(_READER + '''

RUNS = $runs

fig, ax = plt.subplots(figsize=(6, 4))
for label, relative in RUNS:
    _, scalars = read_long(HERE / relative)
    for name, points in sorted(scalars.items()):
        if not name.startswith("population_"):
            continue
        t, v = zip(*sorted(points))
        ax.plot(t, v, label=f"{label}: {name}")
ax.set_xlabel("t")
ax.set_ylabel("population")
ax.legend(fontsize="small")
ax.set_title("$title")
fig.tight_layout()
fig.savefig(HERE / "${figure}.png", dpi=150)
''')


def run_script(config: RunConfig, tables: Sequence[str]) -> str:
    """Plot script for one run directory."""
    prefix = config.output.prefix
    if config.engine == "analytic":
        return _TRANSMISSION.substitute(prefix=prefix, title=config.name)
    table = "occupation" if config.engine == "two-body-ed" else "timeseries"
    if table not in tables:
        raise ValueError(f"run {config.name!r} produced no {table} table")
    if table == "occupation":
        return _OCCUPATION.substitute(prefix=prefix, title=config.name)
    return _LONG_TABLE.substitute(csv=f"{prefix}_{table}.csv", prefix=prefix, xlabel="site", title=config.name)


def figure_script(figure_id: str, title: str, runs: List[Tuple[str, str]]) -> str:
    """Overlay of the population curves of several runs; `runs` holds (label, relative CSV path)."""
    return _OVERLAY.substitute(figure=figure_id, title=title, runs=json.dumps(runs))
