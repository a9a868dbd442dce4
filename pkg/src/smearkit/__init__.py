"""Toolkit for object detection on stained blood-smear microscopy images.

Covers the non-neural parts of a detection study end to end: an annotation
data model with JSON file formats, balanced training-crop generation, a
segmentation + hand-crafted-feature + random-forest baseline detector,
greedy IoU matching of detections to annotations, count/confusion/F1
metrics with inter-annotator agreement, and exact t-SNE feature plots.

Hot numeric kernels run on a compiled Cython backend when it was built,
and on a numpy fallback otherwise; ``smearkit.KERNEL_BACKEND`` tells which
one is active.
"""

from smearkit._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
