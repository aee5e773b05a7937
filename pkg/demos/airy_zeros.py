"""Refined zeros of wi(-x) and w(beta, x) against their leading asymptotics."""

import numpy as np

from dbsampling.airy import zero_model, zeros


def main(n_max=50):
    n = np.arange(5, n_max + 1)
    for kind, beta in (("wi", 0.0), ("w", 1.0), ("w", -1.0)):
        vals = zeros(kind, beta, n_max).values[n]
        dev = np.abs(vals / zero_model(kind, n, beta) - 1)
        slope = np.polyfit(np.log(n), np.log(dev), 1)[0]
        print(f"{kind:>2} beta={beta:+.1f}  n=5..7: {vals[:3].round(6)}  deviation slope {slope:.2f}")


if __name__ == "__main__":
    main()
