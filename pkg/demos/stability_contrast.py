"""Oversampled vs Nyquist-rate reconstruction under adversarial l_inf noise.

Constant Hamiltonian on [0, 2], taper (0.8, 1.4, 2.0), F = K_0.8(., 0.3+0.2i).
Prints the sup error over [-5,5] x [-1,1] for growing truncation N.
"""

import math

from dbsampling.hamiltonian import Hamiltonian
from dbsampling.kernels import TaperWeight
from dbsampling.reconstruct import (KernelSection, NoiseSpec, default_grid, make_samples, perturb,
                                    reconstruct_oversampling, reconstruct_sampling)
from dbsampling.spectrum import eigenvalues


def main(eps=0.1, sizes=(50, 100, 200, 400)):
    H = Hamiltonian.constant(0.0, 2.0)
    taper = TaperWeight(0.8, 1.4, 2.0)
    grid = default_grid()
    full = eigenvalues(H, None, 0.0, -max(sizes), max(sizes))
    print(f"{'N':>5} {'oversampled':>12} {'sampling':>10}")
    for N in sizes:
        samples = make_samples(H, full.window(N), KernelSection(taper.a, 0.3 + 0.2j))
        over = perturb(samples, NoiseSpec(math.inf, eps, "adversarial", z0=0.5), taper)
        plain = perturb(samples, NoiseSpec(math.inf, eps, "adversarial", z0=0.5, target="sampling"))
        e1 = reconstruct_oversampling(H, taper, over, grid, N).sup_error
        e2 = reconstruct_sampling(plain, grid, N).sup_error
        print(f"{N:5d} {e1:12.4f} {e2:10.4f}")


if __name__ == "__main__":
    main()
