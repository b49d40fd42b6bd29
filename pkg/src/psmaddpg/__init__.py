"""Multi-agent DDPG with parameter-sharing actor/critic variants, on numpy.

Modules: ``diffnet`` (dense nets, backprop, Adam), ``memory`` (replay ring
buffer), ``envs`` (particle tasks), ``trainers`` (maddpg, v0, v1, v2),
``evaluation`` and ``cli``.
"""

__version__ = "0.1.0"
