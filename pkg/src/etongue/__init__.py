"""Software twin of a portable potentiometric electronic tongue.

Four ion-selective electrodes in differential readout, an edge agent
speaking a small binary frame protocol, preprocessing into concatenated
baseline-subtracted transients, a from-scratch random forest with
proximity-based similarity, an HTTP training/inference service, and a
CLI tying the workflow together.
"""

__version__ = "0.1.0"
