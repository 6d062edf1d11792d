"""SVG plots of ROC, CMC and FNMR-dynamics curves."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import CmcCurve, RocCurve  # noqa: E402

# fixed hash salt and no date so repeated runs write identical files
plt.rcParams["svg.hashsalt"] = "pmiris"
_META = {"Date": None, "Creator": None}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def plot_roc(curves: dict[str, RocCurve], path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 5))
    for name, roc in sorted(curves.items()):
        fmr = np.clip(roc.fmr, 1e-5, 1)
        ls = ":" if name.endswith("_norm") else "-"
        ax.step(fmr, 1 - roc.fnmr, where="post", ls=ls, label=f"{name} (EER {100 * roc.eer:.2f}%)")
    ax.set_xscale("log")
    ax.set_xlim(1e-5, 1)
    ax.set_ylim(0, 1.01)
    ax.set_xlabel("false match rate")
    ax.set_ylabel("true match rate")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=6, loc="lower right")
    return _save(fig, Path(path))


def plot_cmc(curves: dict[str, CmcCurve], path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 5))
    for name, cmc in sorted(curves.items()):
        ls = ":" if name.endswith("_norm") else "-"
        ax.plot(cmc.ranks, cmc.rates, ls=ls, marker="o", ms=3, label=name)
    ax.set_ylim(0, 1.01)
    ax.set_xlabel("rank")
    ax.set_ylabel("identification rate")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=6, loc="lower right")
    return _save(fig, Path(path))


def plot_dynamics(series: dict[str, list], path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, pts in sorted(series.items()):
        pts = [p for p in pts if not p.flagged]
        if not pts:
            continue
        ax.plot([p.horizon for p in pts], [p.fnmr for p in pts], marker="o", label=name)
    ax.set_xlabel("capture horizon (hours, cumulative)")
    ax.set_ylabel("FNMR at the FMR bound")
    ax.set_ylim(0, 1.01)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    return _save(fig, Path(path))


def plot_curves(curves: dict, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for prefix in ("", "external_"):
        mine = {k[len(prefix):]: v for k, v in curves.items()
                if k.startswith(prefix) and (prefix or not k.startswith("external_"))}
        roc = {k: v for k, v in mine.items() if isinstance(v, RocCurve)}
        cmc = {k: v for k, v in mine.items() if isinstance(v, CmcCurve)}
        dyn = {k: v for k, v in mine.items() if isinstance(v, list)}
        if roc:
            written.append(plot_roc(roc, out / f"{prefix}roc.svg"))
        if cmc:
            written.append(plot_cmc(cmc, out / f"{prefix}cmc.svg"))
        if dyn:
            written.append(plot_dynamics(dyn, out / f"{prefix}fnmr_dynamics.svg"))
    return written
