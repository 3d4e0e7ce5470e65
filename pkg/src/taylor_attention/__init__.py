"""Softmax attention as a truncated sum of recurrent networks.

The exponential of the query-key inner product expands into Kronecker-power
recurrences; this package implements the direct (quadratic-time) and
recurrent (linear-time) forms, the gate/norm denominator replacements, their
gradients, and the verification and benchmark harnesses that tie them
together.
"""

from .config import (ALL_DENOMINATOR_MODES, EXACT, GATE, GATE_SEQ, L2_NORM,
                     L2_PLUS_SEQ, LAYER_NORM, NONE, RMS_NORM, SEQ_NORM,
                     AttentionConfig, DenomKind, DenominatorMode,
                     FeatureMapKind, GatePair, Mode, apply_feature_map)
from .core import (ResourceLimitError, SplitMix64, TensorFormatError,
                   clamp_logit, generate_inputs, rel_err, taylor_weights,
                   tensor_read, tensor_write)
from .grad import (GradReport, GradTriple, finite_diff_check,
                   finite_diff_grads, recurrent_attention_backward,
                   recurrent_attention_backward_scan,
                   softmax_attention_backward)
from .kron import decomposed_inner_power, kron_outer_accumulate, kron_power
from .recurrent import (RecurrentState, bidirectional_recurrent_attention,
                        linear_attention_recurrent,
                        quadratic_attention_recurrent, readout,
                        recurrent_attention, state_elements, state_init,
                        state_update)
from .reference import (gated_attention_matrix, linear_attention_matrix,
                        softmax_attention, taylor_attention_direct)

__version__ = "0.1.0"
