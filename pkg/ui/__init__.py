"""
PerturbKit UI - Streamlit dashboard.

- app.py: results tables/charts and checkpoint inspection

Run from the project root: streamlit run ui/app.py
"""
