"""Budget-constrained white-box L-infinity attacks with an exact-accounting benchmark harness."""

from .budget import BudgetLedger, Status, usage_report
from .data import ImageBatch, load_dataset, save_dataset
from .errors import AdvCompError, BudgetExceeded, ConfigurationError, LoadError, QuotaViolation
from .losses import LossSpec
from .models import MLP, LinearModel, load_model, save_model
from .threat import ThreatModel, is_feasible, parse_epsilon, project

__all__ = [
    "AdvCompError", "BudgetExceeded", "BudgetLedger", "ConfigurationError", "ImageBatch", "LinearModel",
    "LoadError", "LossSpec", "MLP", "QuotaViolation", "Status", "ThreatModel", "is_feasible", "load_dataset",
    "load_model", "parse_epsilon", "project", "save_dataset", "save_model", "usage_report",
]
