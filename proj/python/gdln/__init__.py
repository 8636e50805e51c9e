"""Gated deep linear network laboratory.

Thin wrapper over the compiled extension.  Main entry points:

- task builders: ``xor_task``, ``contextual_task``, ``routing_task``
- training: ``train``, ``loss``, ``gradient_gap``
- closed forms and reductions: ``xor_analytic``, ``xor_time_to_reach``,
  ``xor_transition_width``, ``hierarchy_spectrum``, ``routing_ode``,
  ``race_ode``, ``steady_state_ratio``
- checks: ``verify``
"""

from ._gdln import *  # noqa: F401,F403
from ._gdln import __doc__ as _core_doc  # noqa: F401
