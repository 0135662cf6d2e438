"""funlong: a simulation and estimation workbench for continuous-time
longitudinal causal inference on partition grids."""

__version__ = "0.1.0"
