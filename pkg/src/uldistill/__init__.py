"""Cross-tokenizer distillation with a closed-form Wasserstein logit loss.

The package trains tiny causal language models on a synthetic QA corpus and
distills a subword teacher into a character-level student whose vocabulary
differs from the teacher's. Submodules:

``distributions``  temperature softmax, padding and sorting of probability vectors
``losses``         cross-entropy, KL and the sorted-mass W1 term with their gradients
``ot``             exact transport, Sinkhorn, oracles, cost matrices and a scaling bench
``tokenizer``      character and pair-merge tokenizers, overlap, edit distance
``autodiff``       reverse-mode tape over numpy arrays
``model``          the transformer, greedy decoding, checkpoints
``distill``        corpus-to-student training pipeline and evaluation
``cli``            the ``uld`` command
"""

from .distributions import pad_to, softmax_temp, sort_desc
from .errors import (
    AbsoluteContinuityError,
    CompatibilityError,
    ConfigError,
    DegenerateInputError,
    FormatError,
    InputError,
    ParameterError,
    ScaleError,
    SupportError,
    UldError,
)
from .losses import DEFAULT_LAMBDA, DEFAULT_TAU, ce_step, kl_step, step_loss, uld_w1_step
from .ot import CostMatrix, TransportPlan, exact_ot, sinkhorn, uniform01_cost

__version__ = "0.1.0"

__all__ = [
    "AbsoluteContinuityError",
    "CompatibilityError",
    "ConfigError",
    "CostMatrix",
    "DEFAULT_LAMBDA",
    "DEFAULT_TAU",
    "DegenerateInputError",
    "FormatError",
    "InputError",
    "ParameterError",
    "ScaleError",
    "SupportError",
    "TransportPlan",
    "UldError",
    "ce_step",
    "exact_ot",
    "kl_step",
    "pad_to",
    "sinkhorn",
    "softmax_temp",
    "sort_desc",
    "step_loss",
    "uld_w1_step",
    "uniform01_cost",
]
