"""
PerturbKit - Streamlit dashboard
Browse sweep results and inspect checkpoints

Features:
- Pick a results JSON from an output directory
- Table of (location, λ, mean, std, Δ vs the none/0 baseline)
- Bar chart of the mean metric per cell
- Pick a checkpoint and list its tensors (name / kind / zone / shape / σ)

Run from PROJECT ROOT: streamlit run ui/app.py
"""

import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import streamlit as st

# Add the project root to the path so `streamlit run ui/app.py` can import the packages
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from harness.results import BASELINE_LOCATION, RunResult, aggregate_table, checkpoint_table, load_results
from params.checkpoint import CheckpointError, CheckpointIOError, read_checkpoint

logger = logging.getLogger(__name__)


# ============================================================================
# CONSTANTS & STYLES
# ============================================================================

DEFAULT_RESULTS_DIR = "results"

DELTA_STYLES = {
    "gain": {"color": "#28a745", "symbol": "▲"},
    "loss": {"color": "#dc3545", "symbol": "▼"},
    "flat": {"color": "#888888", "symbol": "="},
}

CSS_STYLES = """
    <style>
    .perturbkit-baseline-box {
        background-color: #f0f2f6;
        padding: 12px;
        border-radius: 8px;
        margin: 8px 0;
        border-left: 4px solid #0099cc;
        color: #1a1a1a !important;
    }
    .perturbkit-best-box {
        background-color: #e8f8e8;
        padding: 12px;
        border-radius: 8px;
        margin: 8px 0;
        border-left: 4px solid #28a745;
        color: #1a1a1a !important;
    }
    </style>
"""


# ============================================================================
# DATA HELPERS
# ============================================================================


def find_files(root: str, pattern: str) -> List[Path]:
    """Files under `root` matching `pattern`, sorted; empty when root is missing."""
    base = Path(root)
    if not base.is_dir():
        return []
    return sorted(base.rglob(pattern))


def find_result_files(root: str) -> List[Path]:
    """Results JSON mirrors (skip checkpoint sidecars)."""
    return [p for p in find_files(root, "*.json") if not p.with_suffix(".pkpt").exists()]


def delta_style(delta: Optional[float]) -> Dict[str, str]:
    if delta is None or abs(delta) < 1e-12:
        return DELTA_STYLES["flat"]
    return DELTA_STYLES["gain" if delta > 0 else "loss"]


def cell_label(row: Dict[str, Any]) -> str:
    return f"{row['location']} @ {row['lambda']:g}"


def display_rows(rows: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """Aggregate rows scaled to % for display."""
    out = []
    for row in rows:
        delta = row["delta"]
        out.append({
            "Noise added to": row["location"],
            "λ": row["lambda"],
            "mean %": round(100 * row["mean"], 3),
            "std %": round(100 * row["std"], 3),
            "Δ %": None if delta is None else round(100 * delta, 3),
            "runs": row["runs"],
        })
    return out


def best_row(rows: List[Dict[str, Any]]) -> Optional[Dict[str, Any]]:
    """Highest-mean row other than the baseline."""
    candidates = [r for r in rows if r["location"] != BASELINE_LOCATION]
    return max(candidates, key=lambda r: r["mean"]) if candidates else None


# ============================================================================
# RENDERING FUNCTIONS
# ============================================================================


def render_header():
    st.title("🔬 PerturbKit")
    st.subheader("Localized parameter-noise sweeps")
    st.divider()


def render_results(results: List[RunResult]):
    """Aggregate table, baseline/best summary and bar chart."""
    rows = aggregate_table(results)
    metric = rows[0]["metric"] if rows else "metric"
    st.subheader(f"📊 {metric} per noise location")

    baseline = next((r for r in rows if r["location"] == BASELINE_LOCATION and r["lambda"] == 0.0), None)
    best = best_row(rows)
    col1, col2 = st.columns(2)
    with col1:
        if baseline:
            st.markdown(
                f'<div class="perturbkit-baseline-box">Baseline (no noise): '
                f'<b>{100 * baseline["mean"]:.3f}%</b> ± {100 * baseline["std"]:.3f}</div>',
                unsafe_allow_html=True,
            )
        else:
            st.warning("No 'none' λ=0 baseline row in these results")
    with col2:
        if best:
            style = delta_style(best["delta"])
            delta = "" if best["delta"] is None else f' {style["symbol"]} {100 * best["delta"]:+.3f}'
            st.markdown(
                f'<div class="perturbkit-best-box">Best: <b>{cell_label(best)}</b> '
                f'{100 * best["mean"]:.3f}%<span style="color: {style["color"]}">{delta}</span></div>',
                unsafe_allow_html=True,
            )

    st.dataframe(display_rows(rows), use_container_width=True, hide_index=True)
    st.bar_chart(
        {"cell": [cell_label(r) for r in rows], "mean": [r["mean"] for r in rows]},
        x="cell",
        y="mean",
    )

    with st.expander("Per-seed values"):
        for res in sorted(results, key=RunResult.sort_key):
            values = ", ".join(f"{v:.4f}" for v in res.values)
            st.markdown(f"**{res.location} @ {res.lam:g}**: {values}")
    st.divider()


def render_checkpoint(path: Path):
    """Tensor table of one checkpoint."""
    st.subheader(f"🧱 {path.name}")
    try:
        store = read_checkpoint(path)
    except (CheckpointError, CheckpointIOError) as e:
        logger.error(f"Cannot read checkpoint {path}: {e}")
        st.error(f"Cannot read checkpoint: {e}")
        return
    st.caption(f"{len(store)} tensors, {store.total_elements()} elements")
    st.dataframe(checkpoint_table(store), use_container_width=True, hide_index=True)


# ============================================================================
# MAIN APP
# ============================================================================


def main():
    st.set_page_config(page_title="PerturbKit", page_icon="🔬", layout="wide")
    st.markdown(CSS_STYLES, unsafe_allow_html=True)

    if "results_dir" not in st.session_state:
        st.session_state.results_dir = DEFAULT_RESULTS_DIR

    render_header()

    with st.sidebar:
        st.session_state.results_dir = st.text_input("Output directory", st.session_state.results_dir)
        result_files = find_result_files(st.session_state.results_dir)
        checkpoints = find_files(st.session_state.results_dir, "*.pkpt")
        chosen_result = st.selectbox("Results", result_files, format_func=str) if result_files else None
        chosen_ckpt = st.selectbox("Checkpoint", checkpoints, format_func=str) if checkpoints else None

    if chosen_result is None:
        st.info(f"No results JSON under '{st.session_state.results_dir}'. Run `python -m harness sweep` first.")
    else:
        try:
            render_results(load_results(chosen_result))
        except (OSError, ValueError) as e:
            logger.error(f"Cannot load results {chosen_result}: {e}")
            st.error(f"Cannot load results: {e}")

    if chosen_ckpt is not None:
        render_checkpoint(chosen_ckpt)


if __name__ == "__main__":
    main()
