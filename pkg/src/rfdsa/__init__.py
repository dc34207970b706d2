"""Deep-learning RF signal classification and classification-driven DSA scheduling."""

from rfdsa.sigsynth import ModulationKind, SignalClass, class_of

__version__ = "0.1.0"

__all__ = ["ModulationKind", "SignalClass", "class_of", "__version__"]
