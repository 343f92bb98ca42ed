"""Slice-feature extraction from frozen 2D vision transformers.

Bridges preprocessed cubic MRI volumes into the voxtok pipeline: runs a
frozen encoder over axial/coronal/sagittal slices and writes per-layer
SliceFeatureStack containers plus brain masks in the .vxtk format.
"""

__version__ = "0.1.0"
