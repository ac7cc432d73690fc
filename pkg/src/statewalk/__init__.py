"""statewalk: explore web applications into state graphs and generate tests from them."""

from .graph import KnowledgeGraph, StateNode, TransitionEdge
from .state import Action, ActionType, FingerprintConfig, Observation, StateFingerprint, fingerprint

__version__ = "0.1.0"

__all__ = [
    "Action", "ActionType", "FingerprintConfig", "KnowledgeGraph", "Observation",
    "StateFingerprint", "StateNode", "TransitionEdge", "fingerprint", "__version__",
]
