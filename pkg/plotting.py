"""SVG figures: forward/backward path overlays, reconstructed routes in 2D and 3D
and wind-speed scatter plots with their fitted line.

Output is byte-stable for identical input: the SVG id salt is fixed and no
creation date is written.
"""

import logging
from pathlib import Path as FilePath
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from deadreckon import Path  # noqa: E402
from lasso import Dataset1D, LassoModel, predict_many  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "windward"

FORWARD_COLOR = "tab:blue"
BACKWARD_COLOR = "gold"
REFERENCE_COLOR = "tab:gray"

Trace = Sequence[tuple[float, float]]
Track = Sequence[tuple[float, float, float]]


def _save(fig, target: FilePath) -> FilePath:
    target.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(target, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug("wrote %s", target)
    return target


def _route_axes(ax, title: str) -> None:
    ax.set_xlabel("east (m)")
    ax.set_ylabel("north (m)")
    ax.set_title(title)
    ax.set_aspect("equal", adjustable="datalim")
    ax.grid(True, alpha=0.3)


def plot_run(
    forward: Trace,
    backward: Trace,
    target: FilePath,
    title: str = "",
) -> FilePath:
    """Overlay the forward route (blue) and the flown return (yellow)."""
    fig, ax = plt.subplots(figsize=(6, 6))
    if forward:
        f = np.asarray(forward, dtype=float)
        ax.plot(f[:, 1], f[:, 0], color=FORWARD_COLOR, label="forward")
    if backward:
        b = np.asarray(backward, dtype=float)
        ax.plot(b[:, 1], b[:, 0], color=BACKWARD_COLOR, label="backward")
        ax.plot(b[-1, 1], b[-1, 0], "x", color="black", label="landing")
    ax.plot(0.0, 0.0, "o", color="green", label="takeoff")
    ax.legend(loc="best")
    _route_axes(ax, title)
    return _save(fig, target)


def plot_path(
    path: Path, target: FilePath, title: str = "", reference: Track | None = None
) -> FilePath:
    """2D route rebuilt from a flight log, optionally over a reference track."""
    north, east = path.as_arrays()
    fig, ax = plt.subplots(figsize=(6, 6))
    if reference:
        r = np.asarray(reference, dtype=float)
        ax.plot(r[:, 1], r[:, 0], "--", color=REFERENCE_COLOR, label="reference")
    ax.plot(east, north, color=FORWARD_COLOR, label="dead reckoned")
    ax.plot(east[0], north[0], "o", color="green", label="takeoff")
    ax.plot(east[-1], north[-1], "x", color="black", label="end")
    ax.legend(loc="best")
    _route_axes(ax, title)
    return _save(fig, target)


def plot_path_3d(
    path: Path, target: FilePath, title: str = "", reference: Track | None = None
) -> FilePath:
    """The same route with the logged height on the vertical axis."""
    north, east = path.as_arrays()
    height = path.heights()
    fig = plt.figure(figsize=(7, 6))
    ax = fig.add_subplot(projection="3d")
    if reference:
        r = np.asarray(reference, dtype=float)
        ax.plot(r[:, 1], r[:, 0], r[:, 2], "--", color=REFERENCE_COLOR, label="reference")
    ax.plot(east, north, height, color=FORWARD_COLOR, label="dead reckoned")
    ax.scatter([east[0]], [north[0]], [height[0]], color="green", label="takeoff")
    ax.set_xlabel("east (m)")
    ax.set_ylabel("north (m)")
    ax.set_zlabel("height (m)")
    ax.set_title(title)
    ax.legend(loc="best")
    return _save(fig, target)


def plot_fit(
    data: Dataset1D,
    model: LassoModel,
    target: FilePath,
    xlabel: str = "wind (m/s)",
    ylabel: str = "speed (m/s)",
    title: str = "",
) -> FilePath:
    x, y = data.arrays()
    line_x = np.linspace(float(x.min()), float(x.max()), 50)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(x, y, s=4, alpha=0.5, color=FORWARD_COLOR)
    ax.plot(line_x, predict_many(model, line_x), color="tab:red")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return _save(fig, target)
