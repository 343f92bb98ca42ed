"""voxtok: training-free volumetric zero-shot anomaly detection.

Multi-axis 2D slice features become cubic 3D patch tokens (pool, random
projection, view fusion), tokens are scored by cross-sample mutual
similarity, and coarse score grids become voxel-level anomaly maps with a
full evaluation report.
"""

__version__ = "0.1.0"
