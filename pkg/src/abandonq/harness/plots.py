"""Static SVG figures from a ConvergenceReport."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.fonttype": "none", "svg.hashsalt": "abandonq", "font.size": 9}


def ks_label(ks: float) -> str:
    return f"grid-KS = {ks:.6g}"


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def emit_plots(report, out_dir) -> list:
    """Write error-vs-n, CDF-overlay and abandonment figures; return their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    orders = sorted({r["m"] for r in report.rows})
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for m in orders:
            ns, errs = report.series("rel_err", m)
            ax.loglog(ns, np.maximum(errs, 1e-16), marker="o", label=f"m = {m:g}")
        ax.set_xlabel("n")
        ax.set_ylabel("relative error of scaled moment")
        ax.legend()
        paths.append(_save(fig, os.path.join(out_dir, "error_vs_n.svg")))

        ov = report.cdf_overlay
        emp = np.asarray(ov["empirical"])
        dif = np.asarray(ov["diffusion"])
        gap = float(np.max(np.abs(emp - dif))) if emp.size else 0.0
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.step(ov["grid"], emp, where="post", label=f"simulated, n = {ov['n']}")
        ax.plot(ov["grid"], dif, label="diffusion")
        if emp.size:
            k = int(np.argmax(np.abs(emp - dif)))
            ax.vlines(ov["grid"][k], min(emp[k], dif[k]), max(emp[k], dif[k]), colors="k")
        ax.text(0.98, 0.05, ks_label(gap), transform=ax.transAxes, ha="right")
        ax.set_xlabel("x (diffusion scale)")
        ax.set_ylabel("CDF")
        ax.legend(loc="center right")
        paths.append(_save(fig, os.path.join(out_dir, "cdf_overlay.svg")))

        ns, spa = report.series("sqrtn_pa", orders[0])
        _, ci = report.series("pa_ci", orders[0])
        _, eh = report.series("eh", orders[0])
        x = np.arange(len(ns))
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.bar(x - 0.2, spa, 0.4, yerr=ci, label="sqrt(n) P_a (simulated)")
        ax.bar(x + 0.2, eh, 0.4, label="E[H(V)] (diffusion)")
        ax.set_xticks(x, [str(n) for n in ns])
        ax.set_xlabel("n")
        ax.legend()
        paths.append(_save(fig, os.path.join(out_dir, "abandonment.svg")))
    return paths
