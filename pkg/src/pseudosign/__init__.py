"""Meshing unsigned distance fields by iterative per-cell sign classification.

Subpackages map onto the pipeline stages:

* :mod:`~pseudosign.field` - distance sources, noise and grid sampling
* :mod:`~pseudosign.signconfig` - 128 flip-invariant corner sign categories
* :mod:`~pseudosign.nnet` - the MLP classifier, backprop, Adam, weight files
* :mod:`~pseudosign.trainer` - dataset construction and unrolled training
* :mod:`~pseudosign.refiner` - active-cell selection and iterative inference
* :mod:`~pseudosign.mesher` - marching cubes on pseudo-signs, OBJ I/O
* :mod:`~pseudosign.metrics` - Chamfer and F1
* :mod:`~pseudosign.cli` - the ``pseudosign`` command
"""

__version__ = "0.1.0"
