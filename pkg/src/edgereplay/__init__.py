"""Online MLP training with error-prioritized replay for thermal anomaly detection."""

__version__ = "0.1.0"
