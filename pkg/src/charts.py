"""Altair chart specifications for loss curves and 2-D code scatter plots."""

from pathlib import Path

import altair as alt
import numpy as np
import pandas as pd

from .settings import EMOTION_CLASSES

# Stable colours for the canonical emotion classes
CLASS_COLORS = ["#4C78A8", "#E45756", "#72B7B2", "#F58518"]
LOSS_COLORS = {"disc_loss": "#E45756", "gen_loss": "#4C78A8", "reconstruction_loss": "#54A24B"}


def loss_curve_chart(history, title: str = "GAN losses") -> alt.Chart:
    """
    Discriminator and generator loss per epoch, one panel per split.

    Args:
        history: gan.LossHistory

    Returns:
        Altair chart object
    """
    df = history.to_frame().melt(
        id_vars=["step", "split"], value_vars=["disc_loss", "gen_loss"], var_name="loss", value_name="value"
    )
    color_scale = alt.Scale(domain=["disc_loss", "gen_loss"],
                            range=[LOSS_COLORS["disc_loss"], LOSS_COLORS["gen_loss"]])
    return alt.Chart(df).mark_line().encode(
        x=alt.X("step:Q", title="Epoch"),
        y=alt.Y("value:Q", title="Loss"),
        color=alt.Color("loss:N", scale=color_scale, legend=alt.Legend(title="Loss")),
        tooltip=[
            alt.Tooltip("step:Q", title="Epoch"),
            alt.Tooltip("loss:N", title="Loss"),
            alt.Tooltip("value:Q", title="Value", format=".4f"),
        ],
    ).properties(
        width=320,
        height=220,
    ).facet(
        column=alt.Column("split:N", title=None),
    ).properties(
        title=title,
    )


def aae_loss_chart(history, title: str = "AAE losses") -> alt.Chart:
    """Reconstruction, latent-discriminator and encoder-adversarial losses per epoch."""
    df = history.to_frame().melt(id_vars=["epoch"], var_name="loss", value_name="value")
    color_scale = alt.Scale(domain=list(LOSS_COLORS), range=list(LOSS_COLORS.values()))
    return alt.Chart(df).mark_line().encode(
        x=alt.X("epoch:Q", title="Epoch"),
        y=alt.Y("value:Q", title="Loss"),
        color=alt.Color("loss:N", scale=color_scale, legend=alt.Legend(title="Loss")),
    ).properties(
        width=420,
        height=260,
        title=title,
    )


def code_scatter_chart(points, labels, title: str = "2-D codes") -> alt.Chart:
    """Scatter of 2-D points coloured by class."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError(f"Scatter needs (n, 2) points, got shape {points.shape}")
    labels = [str(label) for label in labels]
    if len(labels) != points.shape[0]:
        raise ValueError(f"{points.shape[0]} points but {len(labels)} labels")
    df = pd.DataFrame({"x": points[:, 0], "y": points[:, 1], "class": labels})

    color = alt.Color("class:N", legend=alt.Legend(title="Class"))
    if set(labels) <= set(EMOTION_CLASSES):
        domain = [c for c in EMOTION_CLASSES if c in set(labels)]
        palette = [CLASS_COLORS[EMOTION_CLASSES.index(c)] for c in domain]
        color = alt.Color("class:N", scale=alt.Scale(domain=domain, range=palette),
                          legend=alt.Legend(title="Class"))
    return alt.Chart(df).mark_circle(size=18, opacity=0.6).encode(
        x=alt.X("x:Q", title="code 1"),
        y=alt.Y("y:Q", title="code 2"),
        color=color,
        tooltip=["class:N", alt.Tooltip("x:Q", format=".3f"), alt.Tooltip("y:Q", format=".3f")],
    ).properties(
        width=360,
        height=360,
        title=title,
    )


def save_chart(chart: alt.Chart, path: str | Path) -> Path:
    """Write a chart as standalone HTML or Vega-Lite JSON, chosen by the file suffix."""
    path = Path(path)
    if path.suffix not in (".html", ".json"):
        raise ValueError(f"Charts are saved as .html or .json, got '{path.suffix}'")
    path.parent.mkdir(parents=True, exist_ok=True)
    chart.save(str(path))
    return path
