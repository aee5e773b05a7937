"""Sampling and oversampling in de Branges spaces of canonical systems.

Submodules are loaded on first attribute access so that the command line
can set thread limits before numpy is imported.
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "hamiltonian": ["Hamiltonian", "ConstantDiagonal", "PolynomialDiagonal", "DiagonalFunction",
                    "GridGeneral", "SingularInterval", "validate", "trace_normalize",
                    "exponential_type", "detect_singular_intervals"],
    "solver": ["fundamental_solution", "solve", "transfer_matrix", "prufer_flow", "norm_squared"],
    "spectrum": ["Spectrum", "eigenvalues", "detect_exceptional", "counting_check"],
    "kernels": ["TaperWeight", "reproducing_kernel", "oversampling_kernel", "pw_kernels",
                "calibrate_pw_normalization"],
    "reconstruct": ["SampleSet", "KernelSection", "StepCoefficient", "NoiseSpec", "make_samples",
                    "perturb", "reconstruct_sampling", "reconstruct_oversampling", "tail_diagnostic"],
    "airy": ["wi_eval", "w_beta", "zeros", "airy_spectrum", "airy_norm"],
}
_WHERE = {name: mod for mod, names in _EXPORTS.items() for name in names}

__all__ = sorted(_WHERE) + list(_EXPORTS)


def __getattr__(name):
    if name in _WHERE:
        return getattr(import_module(f".{_WHERE[name]}", __name__), name)
    if name in _EXPORTS or name in ("cli", "errors"):
        return import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
