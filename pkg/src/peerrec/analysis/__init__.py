"""Effect estimation, effect sizes, power analysis and group comparisons."""
from .estimators import (ConvergenceError, EffectEstimate, RankDeficientError, doubly_robust_effect,
                         estimate, irls_logistic, ols_effect, raw_effect)
from .groups import cles, format_group_report, group_difference_report
from .outcomes import OUTCOME_KINDS, SCHEMAS, ActionIndex, build_outcome_panel, fabricate_event_times
from .panel import OutcomePanel, PanelError
from .power import (PowerRequest, achieved_power, effect_size, effect_size_from_samples, pooled_sd,
                    required_sample_size)

__all__ = ["ActionIndex", "ConvergenceError", "EffectEstimate", "OUTCOME_KINDS", "OutcomePanel", "PanelError",
           "PowerRequest", "RankDeficientError", "SCHEMAS", "achieved_power", "build_outcome_panel", "cles",
           "doubly_robust_effect", "effect_size", "effect_size_from_samples", "estimate", "fabricate_event_times",
           "format_group_report", "group_difference_report", "irls_logistic", "ols_effect", "pooled_sd",
           "raw_effect", "required_sample_size"]
