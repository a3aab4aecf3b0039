"""Slip-control workbench for a rear-driven electric race car.

Longitudinal plant simulation, an analytically solved receding-horizon
slip-velocity tracker with integral action, extremum-seeking estimation of
the optimal slip reference, PID and sliding-mode baselines, scripted
maneuvers with metric extraction, and a preference-driven hyper-parameter
tuning service.
"""

__version__ = "0.1.0"
