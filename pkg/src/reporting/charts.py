"""Interval chart data and plotly renderings"""

import importlib.util
import logging
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from analysis.bootstrap import BootstrapResult
from analysis.estimators import Metric

logger = logging.getLogger(__name__)

PLOT_COLUMNS = ["voucher", "metric", "group", "point", "lower_ci_lo", "lower_ci_hi", "upper_ci_lo", "upper_ci_hi"]

COLORS = {"lower": "#3498db", "upper": "#e74c3c"}


def plot_data(results: Sequence[BootstrapResult]) -> pd.DataFrame:
    """One row per voucher, metric and group with both bound intervals"""
    rows = []
    for result in results:
        for region in result.regions:
            rows.append(
                {
                    "voucher": region.voucher.value,
                    "metric": region.metric.value,
                    "group": region.group_label,
                    "point": region.estimate.point,
                    "lower_ci_lo": region.ci_lower.lo,
                    "lower_ci_hi": region.ci_lower.hi,
                    "upper_ci_lo": region.ci_upper.lo,
                    "upper_ci_hi": region.ci_upper.hi,
                }
            )
    return pd.DataFrame(rows, columns=PLOT_COLUMNS)


def interval_chart(data: pd.DataFrame, metric: Metric) -> go.Figure:
    """One panel per voucher, lower- and upper-bound intervals side by side for each group."""
    subset = data[data["metric"] == metric.value]
    vouchers = list(dict.fromkeys(subset["voucher"]))
    fig = make_subplots(rows=max(len(vouchers), 1), cols=1, subplot_titles=vouchers, shared_xaxes=False)

    for row, voucher in enumerate(vouchers, 1):
        part = subset[subset["voucher"] == voucher]
        for side in ("lower", "upper"):
            lo = part[f"{side}_ci_lo"]
            hi = part[f"{side}_ci_hi"]
            mid = (lo + hi) / 2
            fig.add_trace(
                go.Scatter(
                    x=part["group"],
                    y=mid,
                    mode="markers",
                    name=f"{side} bound CI",
                    legendgroup=side,
                    showlegend=row == 1,
                    marker_color=COLORS[side],
                    error_y=dict(type="data", symmetric=False, array=hi - mid, arrayminus=mid - lo),
                    hovertemplate="<b>%{x}</b><br>%{y:.3f}<extra></extra>",
                ),
                row=row,
                col=1,
            )

    fig.update_layout(
        title_text=f"{metric.title} Rate: confidence intervals by group",
        height=320 * max(len(vouchers), 1),
        showlegend=True,
    )
    return fig


def write_charts(data: pd.DataFrame, out_dir, svg: bool = False) -> List[Path]:
    """Write one interval chart per metric as HTML, and SVG on request"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for metric in Metric:
        if not (data["metric"] == metric.value).any():
            continue
        fig = interval_chart(data, metric)
        html = out_dir / f"intervals_{metric.value}.html"
        fig.write_html(html, include_plotlyjs="cdn", div_id=f"intervals-{metric.value}")
        paths.append(html)
        if svg:
            image = _write_svg(fig, out_dir / f"intervals_{metric.value}.svg")
            if image is not None:
                paths.append(image)
    return paths


def _write_svg(fig: go.Figure, path: Path) -> Optional[Path]:
    """SVG export through kaleido when it is installed"""
    if importlib.util.find_spec("kaleido") is None:
        logger.warning(f"SVG export skipped for {path.name}: the kaleido package is not installed")
        return None
    fig.write_image(path, format="svg")
    return path
