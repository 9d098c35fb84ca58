"""purisim: purification dynamics of hybrid measurement-unitary quantum systems.

Subpackages cover Haar random-matrix sampling (``randmat``), dense
density-matrix trajectories under random rank-N/2 measurements
(``manybody``), closed-form purity moments with Monte Carlo verification
(``moments``), low-rank eigenvalue diffusion (``dyson``), Gaussian
free-fermion dynamics with a dense Fock oracle (``fermion``, ``fock``),
a stabilizer toy model (``stabilizer``), and the experiment harness/CLI
(``harness``, ``cli``).
"""

__version__ = "0.1.0"

from .rng import RngStream

__all__ = ["RngStream", "__version__"]
