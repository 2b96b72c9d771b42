"""CSV and figure emission for runs and convergence tables.

Floats are serialized with ``repr`` (shortest round-trip decimal), so
re-reading a CSV reproduces the stored values bit for bit.  Figures are
rendered with the Agg backend straight to SVG next to the delimited output.
"""

from __future__ import annotations

import os
from typing import Dict, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .composition import RunRecord  # noqa: E402
from .scenarios import ConvergenceTable  # noqa: E402


def _fmt(v: float) -> str:
    return repr(float(v))


def write_run_csv(record: RunRecord, path: str, reference=None) -> str:
    """One row per sample: t, x..., u, p..., H, sigma_cum, and the error
    columns when a (state, energy, log-conformal) reference is supplied."""
    n = record.states[0].n
    cols = [f"x{i + 1}" for i in range(n)] + ["u"] + \
           [f"p{i + 1}" for i in range(n)]
    header = ["t"] + cols + ["H", "sigma_cum"]
    if reference is not None:
        header += ["H_rel_err", "lambda_err"]
    lines = [",".join(header)]
    for k, t in enumerate(record.times):
        z = record.states[k]
        row = [_fmt(t)] + [_fmt(v) for v in z.x] + [_fmt(z.u)] + \
              [_fmt(v) for v in z.p]
        row.append(_fmt(record.H_values[k])
                   if record.H_values is not None else "nan")
        row.append(_fmt(record.sigma_cum[k]))
        if reference is not None:
            _, energy, lam = reference
            Href = energy(float(t))
            Hnum = record.H_values[k] if record.H_values is not None \
                else float("nan")
            row.append(_fmt(abs(Hnum / Href - 1.0) if Href != 0
                            else abs(Hnum - Href)))
            row.append(_fmt(abs(record.sigma_cum[k] - lam(float(t)))))
        lines.append(",".join(row))
    _write(path, "\n".join(lines) + "\n")
    return path


def write_convergence_csv(table: ConvergenceTable, path: str) -> str:
    lines = [f"# label={table.label} fitted_slope={_fmt(table.fitted_slope)}"
             f" r2={_fmt(table.fit_r2)}",
             "h,endpoint_error,sup_error"]
    for k in range(len(table.h)):
        lines.append(",".join([_fmt(table.h[k]),
                               _fmt(table.endpoint_error[k]),
                               _fmt(table.sup_error[k])]))
    _write(path, "\n".join(lines) + "\n")
    return path


def read_csv(path: str):
    """Columns of a CSV written by this module, as float arrays."""
    with open(path) as fh:
        rows = [ln.strip() for ln in fh if ln.strip()
                and not ln.startswith("#")]
    header = rows[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in rows[1:]])
    return header, data


def plot_trajectories(records: Sequence[RunRecord], path: str,
                      projection=("x", "u"), title: str = "") -> str:
    """Phase-plane projection of one or more runs."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    comp = {"x": lambda r: r.x[:, 0], "u": lambda r: r.u,
            "p": lambda r: r.p[:, 0]}
    for rec in records:
        ax.plot(comp[projection[0]](rec), comp[projection[1]](rec),
                lw=0.7, label=rec.label or None)
    ax.set_xlabel(projection[0])
    ax.set_ylabel(projection[1])
    if title:
        ax.set_title(title)
    if any(r.label for r in records):
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_convergence(tables: Sequence[ConvergenceTable], path: str,
                     xlabel: str = "h") -> str:
    """Log-log error plot with the fitted slope annotated per curve."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for tab in tables:
        ax.loglog(tab.h, tab.endpoint_error, "o-", ms=4,
                  label=f"{tab.label} (slope {tab.fitted_slope:.2f})")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("endpoint error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_dho_diagnostics(records: Sequence[RunRecord], reference, path: str) -> str:
    """Energy decay, relative energy error, and conformal-factor error
    over time for a set of damped-oscillator runs."""
    _, energy, lam = reference
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    for rec in records:
        t = rec.times
        Href = np.array([energy(float(s)) for s in t])
        lref = np.array([lam(float(s)) for s in t])
        axes[0].plot(t, rec.H_values, lw=0.8, label=rec.label)
        axes[1].semilogy(t, np.abs(rec.H_values / Href - 1.0), lw=0.8,
                         label=rec.label)
        axes[2].semilogy(t, np.abs(rec.sigma_cum - lref) + 1e-18, lw=0.8,
                         label=rec.label)
    axes[0].set_ylabel("H")
    axes[1].set_ylabel("relative H error")
    axes[2].set_ylabel("conformal-factor error")
    for ax in axes:
        ax.set_xlabel("t")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def emit_outputs(records: Dict[str, RunRecord],
                 tables: Dict[str, ConvergenceTable],
                 outdir: str, svg: bool = False, reference=None,
                 projection=("x", "u")) -> list:
    """Write one CSV per run and per table; optionally the figures."""
    os.makedirs(outdir, exist_ok=True)
    written = []
    for name, rec in records.items():
        written.append(write_run_csv(rec, os.path.join(outdir, f"{name}.csv"),
                                     reference=reference))
    for name, tab in tables.items():
        written.append(write_convergence_csv(
            tab, os.path.join(outdir, f"{name}_convergence.csv")))
    if svg:
        if records:
            written.append(plot_trajectories(
                list(records.values()),
                os.path.join(outdir, "trajectories.svg"),
                projection=projection))
            if reference is not None and all(
                    r.H_values is not None for r in records.values()):
                written.append(plot_dho_diagnostics(
                    list(records.values()), reference,
                    os.path.join(outdir, "diagnostics.svg")))
        if tables:
            written.append(plot_convergence(
                list(tables.values()),
                os.path.join(outdir, "convergence.svg")))
    return written


def _write(path: str, content: str) -> None:
    try:
        with open(path, "w") as fh:
            fh.write(content)
    except OSError as exc:
        raise OSError(f"cannot write output file {path}: {exc}") from exc
