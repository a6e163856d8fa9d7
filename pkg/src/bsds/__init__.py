"""Budget-sensitive evaluation of candidate-selection strategies.

The core metric scores a budgeted selection S (with optional abstentions A)
against true hits H as ``HR - lam * FDR - gamma * (1 - coverage)``; DQS is its
mean over a grid of budget fractions.
"""

from .errors import ArgumentError, BsdsError, ContractViolation, InputError, StructuralError, TrainingError
from .metrics import (
    DEFAULT_BUDGET_FRACTIONS,
    BsdsParams,
    BudgetGrid,
    ComponentRates,
    CoverageMode,
    LabeledPool,
    Selection,
    abstain_threshold,
    auxiliary_metrics,
    bayes_abstain_dominated,
    bsds,
    component_rates,
    dqs,
    expected_random_bsds,
    oracle_selection,
)

__version__ = "0.1.0"
