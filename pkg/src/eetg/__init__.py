"""Environment-specialized trajectory-generator priors + residual policy modulation.

The pipeline: a multi-task MAP-Elites evolves one open-loop foot-trajectory
generator per (terrain type, variation) cell of an 80-cell environment grid,
then a single residual policy is trained with ARS to modulate those priors.
Baselines cover fixed and CMA-ES-learnt single/per-cell priors.
"""

__version__ = "0.1.0"
