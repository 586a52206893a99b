"""Simulation toolkit for contamination attacks and trust-based defense on
multi-agent communication topologies.

Subpackages cover the directed agent graph, the nonlinear taint spread model
with attack-path planning, nested payload construction, the visual lure
probability model, a discrete-time trial harness, the runtime defense
pipeline, and a metrics suite with CSV reporting.
"""

__version__ = "0.1.0"
