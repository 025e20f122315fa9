"""Learning-based compliant peg-in-hole insertion in a quasi-static simulator.

Modules
-------
contact   rigid peg on a plate with a hole: equilibrium pose and wrench
gac       accommodation controller and the batched closed loop
dmp       discrete movement primitives learned from one demonstration
gp        exact Gaussian-process regression and sign models
pipeline  data collection, training and corrective insertion campaigns
config    experiment configuration file
cli       command-line front end
"""

__version__ = "0.1.0"
