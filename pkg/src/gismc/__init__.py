"""Global iterative sliding mode contouring control of a flexure-linked biaxial gantry.

Submodules: :mod:`plant` (dynamics), :mod:`sim` (closed loop), :mod:`control`
(SMC laws), :mod:`ilc` (iteration-domain learning), :mod:`contours`,
:mod:`metrics`, :mod:`config`, :mod:`experiment` and :mod:`cli`.
"""

__version__ = "0.1.0"
