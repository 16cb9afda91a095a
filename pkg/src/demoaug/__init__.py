"""demoaug: collect, augment, and train on kinematic manipulation demonstrations."""

__version__ = "0.1.0"
