"""Render benchmark CSVs into figures.

Three kinds of plot:

* ``convergence`` - log-log error-versus-h curves from a refinement CSV
  (columns ``level,h,err_u,err_K,err_P_hdiv,err_p,err_u_corr``), with
  reference slope guide lines drawn dotted (1), dashed (2), dot-dashed (3)
  and solid (4).
* ``boxplot`` - box plots of projected-Jacobian nodal values with
  whiskers at the most extreme data inside 1.5 times the interquartile
  range. Expects a raw-values CSV (a ``value`` column, optionally grouped
  by ``mesh``/``u``); a stretch summary CSV (five-number columns) is also
  accepted, with whiskers then clipped at the recorded extrema.
* ``deflection`` - tip-deflection components versus mesh level from the
  Cook CSV (columns ``n,f,ux_A,uy_A,newton_iters_total``).

Rendering is deterministic: the SVG hash salt is pinned and timestamps
are disabled, so re-rendering reproduces files byte for byte.
"""

import csv
import math
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "ddfem-plots"

import matplotlib.pyplot as plt
import numpy as np

_SLOPE_STYLES = {1: ":", 2: "--", 3: "-.", 4: "-"}
_KINDS = ("convergence", "boxplot", "deflection")


class SchemaError(Exception):
    """Input CSV does not match any expected benchmark schema."""


@dataclass
class PlotSpec:
    input_csv: str
    kind: str
    output: str
    slopes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown plot kind {self.kind!r}")
        for s in self.slopes:
            if not math.isfinite(s):
                raise ValueError("reference slopes must be finite")


def _read_csv(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty CSV, nothing to plot")
    return rows


def _column(rows, name, path):
    if name not in rows[0]:
        raise SchemaError(f"{path}: missing column {name!r}")
    return np.array([float(r[name]) for r in rows])


def whisker_bounds(values):
    """Whisker positions at the most extreme data within 1.5 x IQR."""
    values = np.asarray(values, dtype=float)
    q1, q3 = np.percentile(values, [25.0, 75.0])
    iqr = q3 - q1
    lo = values[values >= q1 - 1.5 * iqr].min()
    hi = values[values <= q3 + 1.5 * iqr].max()
    return float(lo), float(hi)


def _box_stat(values, label):
    values = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(values, [25.0, 50.0, 75.0])
    lo, hi = whisker_bounds(values)
    fliers = values[(values < lo) | (values > hi)]
    return {"label": label, "q1": q1, "med": med, "q3": q3,
            "whislo": lo, "whishi": hi, "fliers": fliers}


def _convergence_figure(spec, rows):
    hs = _column(rows, "h", spec.input_csv)
    fields = ["err_u", "err_K", "err_P_hdiv", "err_p", "err_u_corr"]
    labels = {"err_u": "displacement", "err_K": "displacement gradient",
              "err_P_hdiv": "stress (H(div))", "err_p": "pressure",
              "err_u_corr": "corrected displacement"}
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for name in fields:
        errs = _column(rows, name, spec.input_csv)
        keep = np.isfinite(errs) & (errs > 0)
        if keep.any():
            ax.loglog(hs[keep], errs[keep], "o-", label=labels[name],
                      markersize=4)
    ymin, _ = ax.get_ylim()
    anchor_h = hs.min(), hs.max()
    ref_base = max(np.nanmin([
        _column(rows, f, spec.input_csv)[np.isfinite(
            _column(rows, f, spec.input_csv))].min()
        for f in fields if np.isfinite(_column(rows, f, spec.input_csv)).any()
    ]), 1e-300)
    for s in spec.slopes:
        style = _SLOPE_STYLES.get(int(round(s)), ":")
        scale = ref_base / anchor_h[0] ** s
        line, = ax.loglog(anchor_h, [scale * h**s for h in anchor_h],
                          style, color="0.4", linewidth=1.0)
        line.set_gid(f"ref-slope-{s:g}")
        line.set_label(f"slope {s:g}")
    ax.set_xlabel("mesh size h")
    ax.set_ylabel("error")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    return fig


def _boxplot_figure(spec, rows):
    path = spec.input_csv
    if "value" in rows[0]:
        groups = {}
        for r in rows:
            key = " ".join(str(r[k]) for k in ("mesh", "u") if k in r) or "values"
            groups.setdefault(key, []).append(float(r["value"]))
        stats = [_box_stat(np.array(v), k) for k, v in groups.items()]
    elif "J_median" in rows[0]:
        stats = []
        for r in rows:
            q1, q3 = float(r["J_q1"]), float(r["J_q3"])
            iqr = q3 - q1
            stats.append({
                "label": f"{r['mesh']} u={r['u']}",
                "q1": q1, "med": float(r["J_median"]), "q3": q3,
                "whislo": max(float(r["J_min"]), q1 - 1.5 * iqr),
                "whishi": min(float(r["J_max"]), q3 + 1.5 * iqr),
                "fliers": np.array([float(r["J_min"]), float(r["J_max"])]),
            })
    else:
        raise SchemaError(f"{path}: missing column 'value' (or 'J_median')")
    fig, ax = plt.subplots(figsize=(1.5 + 1.5 * len(stats), 4.5))
    ax.bxp(stats, showfliers=True)
    ax.set_ylabel("projected Jacobian determinant")
    ax.axhline(1.0, color="0.6", linewidth=0.8, linestyle=":")
    fig.tight_layout()
    return fig


def _deflection_figure(spec, rows):
    n = _column(rows, "n", spec.input_csv)
    ux = _column(rows, "ux_A", spec.input_csv)
    uy = _column(rows, "uy_A", spec.input_csv)
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.plot(n, ux, "o-", label="tip u_x")
    ax.plot(n, uy, "s-", label="tip u_y")
    ax.set_xlabel("cells per side n")
    ax.set_ylabel("tip deflection")
    ax.legend()
    ax.grid(True, alpha=0.25)
    fig.tight_layout()
    return fig


def build_figure(spec):
    """The matplotlib figure for a spec (rendering goes through render)."""
    rows = _read_csv(spec.input_csv)
    builder = {"convergence": _convergence_figure,
               "boxplot": _boxplot_figure,
               "deflection": _deflection_figure}[spec.kind]
    return builder(spec, rows)


def render(spec):
    """Render the spec to its output image (SVG by default, PNG by
    extension); the input CSV is never modified. Returns the output path."""
    fig = build_figure(spec)
    try:
        out_dir = os.path.dirname(spec.output)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
        fig.savefig(spec.output, metadata=_no_timestamp(spec.output))
    finally:
        plt.close(fig)
    return spec.output


def _no_timestamp(path):
    if path.lower().endswith(".svg"):
        return {"Date": None}
    return None
