"""PNG figures for ensemble reports (matplotlib, Agg backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# no timestamps or version strings, so reruns give identical bytes
_METADATA = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_METADATA)
    plt.close(fig)
    return path


def plot_report(report: dict, outdir: str | Path) -> list[Path]:
    """One PNG per observable present in ``report["observables"]``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    obs = report["observables"]
    paths = []
    if "dos" in obs:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        energies = sorted({r["E"] for r in obs["dos"]})
        for E in energies:
            rows = [r for r in obs["dos"] if r["E"] == E]
            ax.errorbar([r["delta"] for r in rows], [r["mean"] for r in rows],
                        yerr=[r["stderr"] for r in rows], marker="o", label=f"E={E:g}")
        ax.set_xscale("log")
        ax.set_xlabel("window half-width")
        ax.set_ylabel("mean eigenvalue count")
        ax.legend()
        paths.append(_save(fig, outdir / "dos.png"))
    if "correlator" in obs:
        rows = [r for r in obs["correlator"]["table"] if r["mean"] > 0]
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.semilogy([r["distance"] for r in rows], [r["mean"] for r in rows], "o-", label="mean")
        med = [r for r in rows if r["central_median"] == r["central_median"] and r["central_median"] > 0]
        if med:
            ax.semilogy([r["distance"] for r in med], [r["central_median"] for r in med], "s--",
                        label="median, central pair")
        ax.set_xlabel("|x - y|")
        ax.set_ylabel("eigenfunction correlator")
        ax.legend()
        paths.append(_save(fig, outdir / "correlator.png"))
    if "spacing" in obs:
        rows = obs["spacing"]["table"]
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.errorbar([r["delta"] for r in rows], [r["probability"] for r in rows],
                    yerr=[r["stderr"] for r in rows], marker="o")
        ax.set_xscale("log")
        ax.set_xlabel("threshold")
        ax.set_ylabel("P(min spacing < threshold)")
        paths.append(_save(fig, outdir / "spacing.png"))
    if "blocks" in obs:
        rows = obs["blocks"]
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.errorbar([r["k"] for r in rows], [r["p_resonant"] for r in rows],
                    yerr=[r["stderr"] for r in rows], marker="o")
        ax.set_xlabel("scale k")
        ax.set_ylabel("fraction of resonant sites")
        paths.append(_save(fig, outdir / "blocks.png"))
    return paths
