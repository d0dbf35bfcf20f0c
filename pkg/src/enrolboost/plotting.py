"""Matplotlib figures written next to the CSV outputs.

SVGs are made reproducible: fixed hash salt for element ids and no date
metadata, so identical inputs give identical bytes.
"""

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "enrolboost",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

PRETTY = {
    "gender": "Gender",
    "hs_macroregion": "HS macroregion",
    "hs_type": "Public/Private",
    "hs_curriculum": "HS curriculum",
    "hs_ses": "School SES",
    "math_score": "Math score",
    "italian_score": "Italian score",
}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_roc(roc, path, title="ROC curve"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 4))
        ax.plot(roc.fpr, roc.tpr, lw=1.5, label=f"AUC = {roc.auc:.3f}")
        ax.plot([0, 1], [0, 1], ls="--", lw=0.8, color="grey")
        ax.set_xlabel("1 - specificity")
        ax.set_ylabel("Sensitivity")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_title(title)
        ax.legend(loc="lower right", frameon=False)
        _save(fig, path)


def plot_influence(table, path, title="Relative influence"):
    ranked = table.ranked()[::-1]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.barh([PRETTY.get(f, f) for f, _ in ranked], [100 * v for _, v in ranked],
                color="steelblue")
        ax.set_xlabel("Relative influence (%)")
        ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def plot_ale(curve, path, title=None, scale="raw"):
    y = curve.centered if scale == "raw" else curve.centered_probability
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.plot(curve.boundaries, y, lw=1.5)
        ax.axhline(0 if scale == "raw" else float(np.mean(y)), lw=0.6, color="grey")
        ax.set_xlabel(PRETTY.get(curve.feature, curve.feature))
        ax.set_ylabel("ALE (log-odds)" if scale == "raw" else "ALE (probability)")
        ax.set_title(title or f"ALE: {PRETTY.get(curve.feature, curve.feature)}")
        fig.tight_layout()
        _save(fig, path)


def plot_pdp(surfaces, path, title="Partial dependence"):
    """One heatmap panel per facet with the hull outline; masked cells blank."""
    if not surfaces:
        return
    n = len(surfaces)
    ncols = min(3, n)
    nrows = math.ceil(n / ncols)
    a_name, b_name = surfaces[0].pair
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(nrows, ncols, figsize=(3.4 * ncols + 1, 3.0 * nrows),
                                 squeeze=False, layout="constrained")
        for ax in axes.ravel()[n:]:
            ax.set_visible(False)
        for ax, s in zip(axes.ravel(), surfaces):
            vals = np.ma.masked_array(s.values, mask=s.masked)
            im = ax.pcolormesh(s.axis_a, s.axis_b, vals.T, shading="nearest",
                               cmap="viridis", vmin=0, vmax=1, rasterized=False)
            if len(s.hull) >= 3:
                h = np.vstack([s.hull, s.hull[:1]])
                ax.plot(h[:, 0], h[:, 1], color="white", lw=0.8)
            ax.set_title(", ".join(str(v) for v in s.facet.values()) or "all rows", fontsize=8)
            ax.set_xlabel(PRETTY.get(a_name, a_name))
            ax.set_ylabel(PRETTY.get(b_name, b_name))
        fig.colorbar(im, ax=axes.ravel().tolist(), shrink=0.8, label="Predicted probability")
        fig.suptitle(title)
        _save(fig, path)
