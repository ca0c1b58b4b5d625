"""Backpropagation engines, loss, optimizer and gradient verification."""
from .engines import (
    ENGINES,
    GradReport,
    MemReport,
    backward_naive,
    backward_reversible,
    get_engine,
    mse_grad,
    mse_loss,
)
from .gradcheck import FiniteDifferenceReport, finite_difference_check, gradient_parity, sample_parameters
from .ledger import ActivationLedger
from .optim import BASE_LR, Adam, AdamState, adam_step, lr_schedule

__all__ = [
    "ENGINES",
    "ActivationLedger",
    "Adam",
    "AdamState",
    "BASE_LR",
    "FiniteDifferenceReport",
    "GradReport",
    "MemReport",
    "adam_step",
    "backward_naive",
    "backward_reversible",
    "finite_difference_check",
    "get_engine",
    "gradient_parity",
    "lr_schedule",
    "mse_grad",
    "mse_loss",
    "sample_parameters",
]
