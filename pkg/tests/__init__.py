"""
PerturbKit Tests - Unit and integration tests.

Structure:
- test_params.py: store and checkpoint format
- test_selector.py: selector grammar and presets
- test_noise.py: RNG substreams and the noise engine
- test_metrics.py: adjusted F1 and ROUGE
- test_autodiff.py: autodiff ops and gradient checks
- test_models.py: tagger, seq2seq, optimizer, training I/O
- test_data.py: synthetic datasets and eval adapters
- test_harness.py: configs, grids, results and sweeps
- test_cli.py: command-line entry point
- test_ui.py: dashboard helpers

Run tests:
    pytest tests/ -v
    pytest tests/ -m "not slow"   # skip long training runs
"""
