"""spherelab: minimal surfaces in round spheres, measured and flowed.

Subpackages are deliberately flat: ``sphere`` (ambient geometry), ``mesh``
(combinatorics and discrete metrics), ``extrinsic`` (curvature recovery),
``functionals`` (area/Willmore-type energies and the sigma invariant),
``zoo`` (builders for the classical examples), ``flow`` (area-preserving
conformal uniformization), ``ambient`` (tube-localized ambient flow) and
``cli``.
"""

__version__ = "0.1.0"
