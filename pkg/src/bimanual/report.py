"""Figure rendering for scenario logs: commanded-vs-adapted pose traces,
per-joint torque loading against the enforced limit, and contact margins.
Rendered to files next to the CSV output so a run leaves a self-contained
report directory.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .spatial import rotation_log

_TRANS_LABELS = ("x", "y", "z")
_ROT_LABELS = ("roll", "pitch", "yaw")


def _rotation_traces(records, which: str) -> np.ndarray:
    """(n, 3) rotation-log angles of each record's pose relative to the first
    commanded pose, so commanded and adapted traces share a zero."""
    R0 = records[0].commanded.rotation
    return np.array([rotation_log(getattr(r, which).rotation @ R0.T)
                     for r in records])


def render_pose_traces(records, path) -> None:
    t = np.array([r.time for r in records])
    cmd_p = np.array([r.commanded.translation for r in records])
    adp_p = np.array([r.adapted.translation for r in records])
    cmd_r = _rotation_traces(records, "commanded")
    adp_r = _rotation_traces(records, "adapted")

    fig, axes = plt.subplots(2, 3, figsize=(12, 6), sharex=True)
    for i, name in enumerate(_TRANS_LABELS):
        ax = axes[0, i]
        ax.plot(t, cmd_p[:, i], "k--", label="commanded")
        ax.plot(t, adp_p[:, i], "C0-", label="adapted")
        ax.set_title(f"object {name} [m]")
        ax.grid(alpha=0.3)
    for i, name in enumerate(_ROT_LABELS):
        ax = axes[1, i]
        ax.plot(t, np.degrees(cmd_r[:, i]), "k--")
        ax.plot(t, np.degrees(adp_r[:, i]), "C0-")
        ax.set_title(f"object {name} [deg]")
        ax.set_xlabel("time [s]")
        ax.grid(alpha=0.3)
    axes[0, 0].legend(loc="best", fontsize=8)
    fig.suptitle("commanded (dashed) vs adapted (solid) object pose")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_torques(records, path, torque_ratio: float = 0.9) -> None:
    """Per-joint torque loading |tau| / tau_max with the enforced-ratio line.

    Records carry the enforced limit (torque_ratio * tau_max), so tau_max is
    recovered from it and the limit line sits at the ratio.
    """
    t = np.array([r.time for r in records])
    tau = np.array([r.tau for r in records])
    tau_max = records[0].tau_limit / torque_ratio
    load = np.abs(tau) / tau_max

    fig, axes = plt.subplots(1, 2, figsize=(12, 4), sharey=True)
    for k, (ax, sl, name) in enumerate(((axes[0], slice(0, 7), "left arm"),
                                        (axes[1], slice(7, 14), "right arm"))):
        for j in range(sl.start, sl.stop):
            ax.plot(t, load[:, j], lw=0.9, label=f"joint {j}")
        ax.axhline(torque_ratio, color="r", ls="--", lw=1.2,
                   label=f"{torque_ratio:g} limit")
        ax.set_title(name)
        ax.set_xlabel("time [s]")
        ax.set_ylim(0.0, 1.05)
        ax.grid(alpha=0.3)
        ax.legend(loc="upper left", fontsize=7, ncol=2)
    axes[0].set_ylabel(r"$|\tau| / \tau_{max}$")
    fig.suptitle("joint torque loading")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_margins(records, path) -> None:
    t = np.array([r.time for r in records])
    fm = np.array([r.friction_margin for r in records])
    cop = np.array([r.cop_margin for r in records])

    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(t, fm, "C0-", lw=1.0, label="slippage margin")
    ax.plot(t, cop, "C1-", lw=1.0, label="CoP margin")
    ax.axhline(0.0, color="r", ls="--", lw=1.2, label="slip threshold")
    flagged = t[[r.slippage or r.torque_violation or r.crash for r in records]]
    if flagged.size:
        ax.plot(flagged, np.zeros_like(flagged), "rx", ms=3,
                label="flagged cycles")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("margin")
    ax.grid(alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.suptitle("contact stability margins (measured wrenches)")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_report(records, out_dir, prefix: str = "") -> list:
    """Render all report figures into out_dir; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if prefix and not prefix.endswith("_"):
        prefix = prefix + "_"
    paths = []
    for name, renderer in (("pose_traces", render_pose_traces),
                           ("torques", render_torques),
                           ("margins", render_margins)):
        path = out_dir / f"{prefix}{name}.png"
        renderer(records, path)
        paths.append(path)
    return paths
