"""spheroview: desk-scale stereo televisualization pipeline.

Wide-angle stereo capture (simulated), hand-eye calibration, spherical
reprojection rendering decoupled from a lagging robot head, and a
timestamped pose/frame streaming layer with latency accounting.
"""

__version__ = "0.1.0"
