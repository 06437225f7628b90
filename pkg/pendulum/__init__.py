"""
Rotary inverted pendulum control experiments.

This package handles:
- The pendulum plant model and its structural analysis
- Fuzzy approximators on triangular partitions
- Classical feedback linearization and adaptive fuzzy controllers
- Closed-loop simulation with parameter schedules
- Scenario files, result files and the command line front end
"""
