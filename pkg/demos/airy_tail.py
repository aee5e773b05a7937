"""Summability of the oversampling series for H = diag(1, x) on [0, 1].

For each boundary angle, fits the decay exponent of the q = 1 tail terms in n
and reports the share of the total contributed beyond n = 200.
"""

import math

from dbsampling.airy import airy_spectrum
from dbsampling.hamiltonian import Hamiltonian
from dbsampling.kernels import TaperWeight
from dbsampling.reconstruct import default_grid, tail_diagnostic


def main(n_max=400):
    H = Hamiltonian.airy(1.0)
    taper = TaperWeight(0.4, 0.7, 1.0)
    z = default_grid(n_re=11, n_im=3)
    for gamma in (0.0, math.pi / 4, math.pi / 2):
        spec = airy_spectrum(1.0, gamma, n_max)
        tr = tail_diagnostic(H, taper, spec, z, fit=(20, n_max), fit_by="n")
        print(f"gamma={gamma:.4f}  exponent={tr.decay_exponent:.3f}  "
              f"tail beyond n=200: {100 * tr.tail_fraction(200):.3f}%")


if __name__ == "__main__":
    main()
