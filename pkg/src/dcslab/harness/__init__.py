"""Experiment harness: CLI scenarios, metrics output, and the classifier
used to score reconstructions."""

from .classify import train_classifier  # noqa: F401
from .metrics import METRIC_COLUMNS, MetricsRecord, emit_metrics  # noqa: F401
