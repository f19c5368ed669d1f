"""Light-field saliency detection with dual local pixel graphs.

Layers of the package, bottom up:

- ``rng`` / ``tensor`` / ``optim`` / ``gradcheck`` / ``serialize``: numeric
  substrate (deterministic RNG, autodiff tensors, Adam, checkpoint format).
- ``netpbm`` / ``lfdata``: synthetic light-field scenes and bit-exact image IO.
- ``encoder`` / ``graph`` / ``recip`` / ``model``: the network (dual-stream
  encoder, dual local graph attention, reciprocative fusion, decoder).
- ``metrics`` / ``trainer`` / ``config`` / ``cli``: evaluation measures,
  training and ablation loops, and the command-line surface.
"""

from .rng import SeededRng
from .tensor import Parameter, Tensor, backward, no_grad

__all__ = ["SeededRng", "Tensor", "Parameter", "backward", "no_grad"]
