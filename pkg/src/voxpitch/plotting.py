"""Report figures (PNG) for feature tensors and evaluated pitch tracks."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dsp import CHANNELS, FeatureTensor  # noqa: E402

_RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 110,
    "savefig.bbox": "tight",
}


def _save(fig, path) -> None:
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_features(features: FeatureTensor, path, title: str | None = None) -> None:
    """One panel per channel, time on x and bin/lag on y."""
    data = features.data
    t = features.frame_times
    extent = [t[0] if t.size else 0.0, t[-1] if t.size else 1.0, 0, data.shape[2] - 1]
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(4, 1, figsize=(7.0, 7.5), sharex=True)
        for c, (ax, name) in enumerate(zip(axes, CHANNELS)):
            img = data[:, c, :].T
            if name == "amplitude":
                img = np.log1p(img)
                name = "log(1 + amplitude)"
            im = ax.imshow(img, origin="lower", aspect="auto", extent=extent,
                           interpolation="nearest", cmap="magma")
            ax.set_ylabel("lag" if c == 2 else "bin")
            ax.set_title(name, loc="left")
            fig.colorbar(im, ax=ax, pad=0.01)
        axes[-1].set_xlabel("time (s)")
        if title:
            fig.suptitle(title)
        _save(fig, path)


def plot_tracks(pred, truth, path, errors=None, title: str | None = None) -> None:
    """Reference vs predicted MIDI over time, plus the cents-error histogram."""
    p = np.where(pred.midi > 0, pred.midi, np.nan)
    r = np.where(truth.midi > 0, truth.midi, np.nan)
    with plt.rc_context(_RC):
        fig, (ax, hx) = plt.subplots(
            1, 2, figsize=(9.0, 3.2), gridspec_kw={"width_ratios": [3, 1]})
        ax.plot(truth.frame_times, r, lw=2.0, color="0.7", label="reference")
        ax.plot(pred.frame_times, p, lw=0.9, color="C3", label="prediction")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("MIDI")
        ax.legend(loc="upper right", frameon=False)
        if errors is not None and len(errors):
            clipped = np.clip(errors, 0, 200)
            hx.hist(clipped, bins=40, range=(0, 200), color="C0")
            hx.axvline(50, ls="--", color="k", lw=0.8)
        hx.set_xlabel("|error| (cents, clipped at 200)")
        hx.set_ylabel("frames")
        if title:
            fig.suptitle(title)
        _save(fig, path)
