"""Skeleton extraction with scale-associated deep side outputs.

Submodules:
  geometry     -- groundtruth scale maps, quantization, augmentation
  nn           -- conv/pool/upsample primitives with exact backward passes
  net          -- multi-stage network assembly, receptive fields, fusion
  losses       -- weighted multi-class softmax losses and gradients
  trainer      -- momentum SGD, checkpoints, training logs
  inference    -- skeleton responses, predicted scales, NMS thinning
  evaluation   -- matching-based precision/recall and max F-measure
  applications -- part segmentation, objectness rescoring
  synth        -- synthetic shape datasets with analytic groundtruth
  fileio       -- PGM / .f32map / checkpoint formats
  cli          -- command-line pipelines
"""

__version__ = "0.1.0"
