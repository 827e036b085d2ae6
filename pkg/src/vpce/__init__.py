"""Visual place cell encoding toolkit.

A deterministic pipeline from synthetic arena exploration to place-cell
activation analysis: POV images are rendered by a column raycaster,
turned into visual feature vectors, clustered into receptive-field
centers, and activated through radial basis functions; the analysis
layer evaluates how well the resulting activation patterns track spatial
proximity, walls, and environment changes.
"""

__version__ = "0.1.0"
