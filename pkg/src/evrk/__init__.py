"""Electric-vehicle energy estimation with a multi-branch CNN and a bagged-tree fine tuner.

Modules: ``core`` (domain types), ``simgen`` (synthetic vehicle data),
``prep`` (windowing and normalisation), ``pce`` (the CNN), ``bdt`` (the
fine tuner), ``pipeline`` (inference with SOC feedback), ``baselines``,
``evaluation`` and ``cli``.
"""

__version__ = "0.1.0"
