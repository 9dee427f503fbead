"""Audio-conditioned affordance segmentation.

Given one image and one action-sound clip, predict a pixel-level function
region mask (the part directly manipulated) and a dependency region mask
(the part that supports the action).
"""

__version__ = "0.1.0"
