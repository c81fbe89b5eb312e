"""Figure rendering for experiment reports.

Each experiment's CSV rows drive one PNG written next to the delimited
output. Rendering is best effort: a report with no rows produces no file.
"""

from __future__ import annotations

import math
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _group(rows, key):
    groups = defaultdict(list)
    for row in rows:
        groups[row[key]].append(row)
    return groups


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=130, metadata={"Software": None})
    plt.close(fig)


def figure_tightness(report, path):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, rows in sorted(_group(report.rows, "model").items()):
        ns = [r["n"] for r in rows]
        errs = [max(r["error"], 1e-18) for r in rows]
        ax.semilogy(ns, errs, "o-", label=label)
    ax.axhline(report.metrics["tol"], color="k", ls="--", lw=0.8, label="tolerance")
    ax.set_xlabel("n")
    ax.set_ylabel("|lhs - (1-kappa) Ent(f)|")
    ax.set_title("Saturation of the subadditivity bound by perfectly correlated copies")
    ax.legend(fontsize=8)
    _save(fig, path)


def figure_kappa_scan(report, path):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    groups = sorted(_group(report.rows, "label").items())
    for label, rows in groups:
        ratios = [r["ratio"] for r in rows]
        bound = rows[0]["bound"]
        ax.hist(ratios, bins=60, alpha=0.55, label=f"{label} (bound {bound:.4f})")
        ax.axvline(bound, color="k", lw=0.8)
    ax.set_xlabel("sum_A nu(A)(Ent f_A + Ent f_Ac) / Ent f")
    ax.set_ylabel("count")
    ax.set_title("Scanned subadditivity ratios against 1 - kappa")
    ax.legend(fontsize=7)
    _save(fig, path)


def figure_sharp_test(report, path):
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, rows in sorted(_group(report.rows, "model").items()):
        ns = [r["n"] for r in rows]
        ax.plot(ns, [r["n"] * r["ratio"] for r in rows], "o-", ms=3, label=f"{label}: n D/Ent")
        ax.plot(ns, [r["n"] * r["asymptote"] for r in rows], "--", lw=0.9,
                label=f"{label}: 4(1-Delta)")
    ax.set_xlabel("n")
    ax.set_ylabel("n * ratio")
    ax.set_title("Sharp-test entropy production ratio and its large-n asymptote")
    ax.legend(fontsize=7)
    _save(fig, path)


def figure_decay(report, path):
    fig, ax = plt.subplots(figsize=(6.2, 4.2))
    traces = report.metrics.get("example_traces", {})
    for label, data in sorted(traces.items()):
        times, hs, kappa = data["times"], data["entropies"], data["kappa"]
        line, = ax.semilogy(times, [max(h, 1e-300) for h in hs], "o-", ms=3, label=label)
        env = [hs[0] * math.exp(-kappa * t) for t in times]
        ax.semilogy(times, env, "--", lw=0.9, color=line.get_color())
    ax.set_xlabel("t")
    ax.set_ylabel("H(p_t | pi)")
    ax.set_title("Relative entropy decay against the exp(-kappa t) envelope")
    ax.legend(fontsize=7)
    _save(fig, path)


def figure_spectrum(report, path):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for row in report.rows:
        n = row["n"]
        vals = row["eigenvalues"]
        ax.plot([n] * len(vals), vals, "k.", ms=4)
    ax.axhline(0.5, color="tab:blue", ls="--", lw=0.8, label="1/2 (conserved)")
    ax.axhline(0.25, color="tab:red", ls="--", lw=0.8, label="1/4 (complement cap)")
    ax.set_xlabel("n")
    ax.set_ylabel("eigenvalues of K")
    ax.set_title("Linearized kernel spectrum, binary uniform crossover")
    ax.legend(fontsize=8)
    _save(fig, path)


def figure_shearer(report, path):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    slacks = [r["slack"] for r in report.rows if r["check"] == "submodular"]
    improved = [r["slack"] for r in report.rows if r["check"] == "improved"]
    if slacks:
        ax.hist(slacks, bins=50, alpha=0.6, label="worst submodularity slack")
    if improved:
        ax.hist(improved, bins=50, alpha=0.6, label="refined bound slack")
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_xlabel("slack")
    ax.set_ylabel("count")
    ax.set_title("Nonnegativity of submodularity and refined-bound slacks")
    ax.legend(fontsize=8)
    _save(fig, path)


def figure_rqs_axioms(report, path):
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    labels = [r["setup"] + ":" + r["check"] for r in report.rows]
    values = [max(r["violation"], 1e-18) for r in report.rows]
    ax.barh(range(len(labels)), values, log=True)
    ax.set_yticks(range(len(labels)))
    ax.set_yticklabels(labels, fontsize=5)
    ax.set_xlabel("violation")
    ax.set_title("Generator axioms: worst violations per check")
    _save(fig, path)


def figure_ising(report, path):
    fig, ax = plt.subplots(figsize=(6.2, 4.2))
    trace = report.metrics.get("dissipative_trace")
    if trace:
        ax.semilogy(trace["times"], [max(h, 1e-300) for h in trace["entropies"]], "o-", ms=3)
        ax.set_xlabel("t")
        ax.set_ylabel("H(p_t | gibbs)")
        slope = report.metrics.get("dissipative_slope")
        title = "Dissipative spin dynamics: relative entropy decay"
        if slope is not None:
            title += f" (fitted slope {slope:.3f})"
        ax.set_title(title, fontsize=10)
    _save(fig, path)


def figure_linearization(report, path):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    e_errs = [r["rel_err"] for r in report.rows if r["functional"] == "ent"]
    d_errs = [r["rel_err"] for r in report.rows if r["functional"] == "production"]
    ax.hist(e_errs, bins=40, alpha=0.6, label="entropy quadratic form")
    ax.hist(d_errs, bins=40, alpha=0.6, label="production quadratic form")
    ax.axvline(report.metrics["tol"], color="k", ls="--", lw=0.8, label="tolerance")
    ax.set_xlabel("relative error after step extrapolation")
    ax.set_ylabel("count")
    ax.set_title("Small-perturbation limits versus the linearized forms")
    ax.legend(fontsize=8)
    _save(fig, path)


FIGURES = {
    "tightness": figure_tightness,
    "kappa_scan": figure_kappa_scan,
    "sharp_test": figure_sharp_test,
    "decay": figure_decay,
    "spectrum": figure_spectrum,
    "shearer": figure_shearer,
    "rqs_axioms": figure_rqs_axioms,
    "ising": figure_ising,
    "linearization": figure_linearization,
}


def render(report, path) -> bool:
    fn = FIGURES.get(report.name)
    if fn is None or not (report.rows or report.metrics):
        return False
    fn(report, path)
    return True
