"""Desk-scale workbench for ethnicity-aware micro-expression recognition.

Subpackages:
    flowcore  -- optical flow, optical strain, the 3-channel flow image
    corpus    -- annotated joint manifest, label maps, synthetic corpus
    model     -- dual-branch fusion network, losses, training, Grad-CAM
    protocol  -- LOSO planning, macro-F1, prima facie study, benchmark
"""

__version__ = "0.1.0"
