"""SVG timeline: observations with regime colour bands over a posterior-intensity strip."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from switchseg.synth import boundaries_from_labels  # noqa: E402

_PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c")


def timeline_svg(path, values, labels, gamma=None, truth=None, title: str = "") -> None:
    """Write a deterministic SVG.

    Top panel: the series with the decoded regimes as coloured background
    bands. Bottom panel (when ``gamma`` is given): one gray-intensity row per
    regime, darker meaning higher posterior probability. ``truth`` adds a thin
    band of true regimes above the strip.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        values = values[:, 0]
    labels = np.asarray(labels)
    T = values.shape[0]
    n_rows = 2 if gamma is not None else 1
    with plt.rc_context({"svg.hashsalt": "switchseg", "svg.fonttype": "none", "path.simplify": False}):
        fig, axes = plt.subplots(n_rows, 1, figsize=(10, 2.2 * n_rows), sharex=True, squeeze=False,
                                 gridspec_kw={"height_ratios": [3, 1][:n_rows]})
        ax = axes[0, 0]
        starts = boundaries_from_labels(labels)
        ends = np.append(starts[1:], T)
        for a, b in zip(starts, ends):
            ax.axvspan(a - 0.5, b - 0.5, color=_PALETTE[int(labels[a]) % len(_PALETTE)], alpha=0.25, lw=0)
        ax.plot(np.arange(T), values, color="black", lw=0.6)
        ax.set_xlim(-0.5, T - 0.5)
        ax.set_ylabel("v")
        if title:
            ax.set_title(title)
        if gamma is not None:
            g = np.asarray(gamma, dtype=float)
            sx = axes[1, 0]
            sx.imshow(g.T, aspect="auto", cmap="gray_r", vmin=0.0, vmax=1.0, interpolation="nearest",
                      extent=(-0.5, T - 0.5, g.shape[1] - 0.5, -0.5))
            if truth is not None:
                truth = np.asarray(truth)
                ts = boundaries_from_labels(truth)
                te = np.append(ts[1:], T)
                for a, b in zip(ts, te):
                    sx.axvspan(a - 0.5, b - 0.5, ymin=0.92, ymax=1.0,
                               color=_PALETTE[int(truth[a]) % len(_PALETTE)], lw=0)
            sx.set_yticks(range(g.shape[1]))
            sx.set_ylabel("regime")
        axes[-1, 0].set_xlabel("t")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
