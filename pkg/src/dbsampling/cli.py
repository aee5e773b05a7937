"""Batch front end: ``dbsampling <command> --config path.json [--out prefix]``.

Commands and the columns of ``<prefix>.csv``:

  spectrum     n, lambda, k_diag
  kernel       re_z, im_z, re_val, im_val         (kernel slice K(., w) or J(., w))
  reconstruct  z_re, z_im, ref_re, ref_im, rec_re, rec_im, abs_err
  stability    z_re, z_im, ref_re, ref_im, rec_re, rec_im, abs_err   (perturbed, oversampled)
  airy         n, value, residual                 (zero table)
  calibrate    re_z, im_z, re_val, im_val         (calibrated G_ab reconstruction)

``<prefix>.json`` holds the run summary.  Exit codes: 0 success, 2 invalid
configuration (nothing written), 3 numerical failure.  ``SAMPLER_THREADS``
caps the BLAS thread pools.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")

_NUMBER = {"type": "number"}
_COMPLEX = {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2}
_POS_INT = {"type": "integer", "minimum": 0}

SCHEMA = {
    "type": "object",
    "required": ["command"],
    "properties": {
        "command": {"enum": ["spectrum", "kernel", "reconstruct", "stability", "airy", "calibrate"]},
        "hamiltonian": {"type": "array", "minItems": 1, "items": {
            "type": "object", "required": ["type", "from", "to"],
            "properties": {"type": {"enum": ["constant_diagonal", "polynomial_diagonal",
                                             "diagonal_function", "grid_general"]},
                           "from": _NUMBER, "to": _NUMBER}}},
        "gamma": {"type": "number", "minimum": 0, "exclusiveMaximum": math.pi},
        "b": {"type": "number", "exclusiveMinimum": 0},
        "taper": {"type": "object", "required": ["a"],
                  "properties": {"a": {"type": "number", "exclusiveMinimum": 0}, "c": _NUMBER}},
        "grid": {"type": "object", "properties": {
            "re_min": _NUMBER, "re_max": _NUMBER, "im_min": _NUMBER, "im_max": _NUMBER,
            "n_re": {"type": "integer", "minimum": 1}, "n_im": {"type": "integer", "minimum": 1}}},
        "truncation": _POS_INT,
        "n_range": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
        "n_max": {"type": "integer", "minimum": 1},
        "noise": {"type": "object", "required": ["p", "epsilon"], "properties": {
            "p": {"oneOf": [{"type": "number", "exclusiveMinimum": 2}, {"const": "inf"}]},
            "epsilon": {"type": "number", "minimum": 0},
            "mode": {"enum": ["random", "adversarial"]},
            "seed": {"type": "integer"},
            "z0": _COMPLEX}},
        "source": {"type": "object", "required": ["type"], "properties": {
            "type": {"enum": ["kernel_section", "step"]},
            "l": {"type": "number", "exclusiveMinimum": 0}, "w0": _COMPLEX,
            "knots": {"type": "array", "items": _NUMBER},
            "values": {"type": "array", "items": _COMPLEX},
            "a": _NUMBER}},
        "formula": {"enum": ["sampling", "oversampling"]},
        "kernel": {"enum": ["reproducing", "oversampling"]},
        "w": _COMPLEX,
        "beta": _NUMBER,
        "kind": {"enum": ["wi", "w"]},
        "a_pw": {"type": "number", "exclusiveMinimum": 0},
        "b_pw": {"type": "number", "exclusiveMinimum": 0},
        "output": {"type": "string"},
    },
    "allOf": [
        {"if": {"properties": {"command": {"enum": ["spectrum", "kernel", "reconstruct", "stability"]}}},
         "then": {"required": ["hamiltonian"]}},
        {"if": {"properties": {"command": {"const": "stability"}}},
         "then": {"required": ["taper", "noise"]}},
        {"if": {"properties": {"command": {"const": "calibrate"}}},
         "then": {"required": ["a_pw", "b_pw"]}},
    ],
}


class ConfigError(Exception):
    pass


def _cplx(v, default=0j):
    return default if v is None else complex(v[0], v[1])


def _grid(cfg):
    from .reconstruct import default_grid

    g = cfg.get("grid", {})
    re = (g.get("re_min", -5.0), g.get("re_max", 5.0))
    im = (g.get("im_min", -1.0), g.get("im_max", 1.0))
    if re[0] > re[1] or im[0] > im[1]:
        raise ConfigError("grid bounds are reversed")
    return default_grid(re, im, g.get("n_re", 51), g.get("n_im", 11))


def _hamiltonian(cfg):
    from .hamiltonian import Hamiltonian, validate

    try:
        H = Hamiltonian.from_records(cfg["hamiltonian"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"hamiltonian: malformed segment record ({exc})") from exc
    validate(H)
    return H


def _taper(cfg, H):
    from .kernels import TaperWeight

    t = cfg["taper"]
    if "c" in t:
        return TaperWeight(t["a"], t["c"], H.b)
    return TaperWeight.midpoint(t["a"], H.b)


def _spectrum_window(cfg, H, N):
    from .spectrum import eigenvalues

    return eigenvalues(H, cfg.get("b"), cfg.get("gamma", 0.0), -N, N)


def _source(cfg, H, spec):
    from .reconstruct import KernelSection, StepCoefficient, make_samples

    src = cfg.get("source", {"type": "kernel_section"})
    if src["type"] == "kernel_section":
        default_l = cfg["taper"]["a"] if "taper" in cfg else spec.b
        source = KernelSection(src.get("l", default_l), _cplx(src.get("w0"), 0.3 + 0.2j))
    else:
        if "knots" not in src or "values" not in src:
            raise ConfigError("step source needs knots and values")
        source = StepCoefficient(tuple(src["knots"]), tuple(map(tuple, src["values"])), src.get("a"))
    return make_samples(H, spec, source)


def _noise(cfg, formula_target="oversampling"):
    from .reconstruct import NoiseSpec

    nz = cfg["noise"]
    p = math.inf if nz["p"] == "inf" else float(nz["p"])
    return NoiseSpec(p, nz["epsilon"], nz.get("mode", "random"), nz.get("seed", 0),
                     _cplx(nz.get("z0"), 0.5 + 0j), formula_target)


def _kernel_csv(z, values):
    from .kernels import kernel_slice_csv

    return kernel_slice_csv(z, values)


# commands -------------------------------------------------------------------

def cmd_spectrum(cfg):
    from .spectrum import eigenvalues

    H = _hamiltonian(cfg)
    lo, hi = cfg.get("n_range", [-20, 20])
    spec = eigenvalues(H, cfg.get("b"), cfg.get("gamma", 0.0), lo, hi)
    summary = {"b": spec.b, "gamma": spec.gamma, "n_lo": int(lo), "n_hi": int(hi),
               "lambda_min": float(spec.lambdas[0]), "lambda_max": float(spec.lambdas[-1])}
    return spec.to_csv(), summary


def cmd_kernel(cfg):
    from .kernels import oversampling_kernel, reproducing_kernel

    H = _hamiltonian(cfg)
    z = _grid(cfg)
    w = _cplx(cfg.get("w"))
    if cfg.get("kernel", "reproducing") == "oversampling":
        vals = oversampling_kernel(H, _taper(cfg, H), z, [w])[:, 0]
    else:
        vals = reproducing_kernel(H, cfg.get("b", H.b), z, [w])[:, 0]
    summary = {"kernel": cfg.get("kernel", "reproducing"), "w": [w.real, w.imag],
               "max_abs": float(max(abs(vals)))}
    return _kernel_csv(z, vals), summary


def cmd_reconstruct(cfg):
    from .reconstruct import reconstruct_oversampling, reconstruct_sampling, tail_diagnostic

    H = _hamiltonian(cfg)
    N = cfg.get("truncation", 200)
    spec = _spectrum_window(cfg, H, N)
    samples = _source(cfg, H, spec)
    grid = _grid(cfg)
    if cfg.get("formula", "oversampling" if "taper" in cfg else "sampling") == "oversampling":
        taper = _taper(cfg, H)
        rep = reconstruct_oversampling(H, taper, samples, grid, N)
        tail = tail_diagnostic(H, taper, spec, grid[:: max(1, len(grid) // 33)], 1.0)
    else:
        rep = reconstruct_sampling(samples, grid, N)
        tail = tail_diagnostic(H, None, spec, grid[:: max(1, len(grid) // 33)], 1.0, kernel="sampling")
    summary = rep.summary()
    summary["decay_exponent"] = tail.decay_exponent
    return rep.to_csv(), summary


def cmd_stability(cfg):
    from .reconstruct import perturb, reconstruct_oversampling, reconstruct_sampling, tail_diagnostic

    H = _hamiltonian(cfg)
    taper = _taper(cfg, H)
    N = cfg.get("truncation", 200)
    grid = _grid(cfg)
    rows = {}
    for n in (N, 2 * N):
        spec = _spectrum_window(cfg, H, n)
        samples = _source(cfg, H, spec)
        over = reconstruct_oversampling(H, taper, perturb(samples, _noise(cfg), taper), grid, n)
        plain = reconstruct_sampling(perturb(samples, _noise(cfg, "sampling")), grid, n)
        rows[n] = (over, plain, spec)
    eps = cfg["noise"]["epsilon"]
    over, plain, spec = rows[N]
    tail = tail_diagnostic(H, taper, rows[2 * N][2], grid[:: max(1, len(grid) // 33)], 1.0)
    summary = {
        "N": N, "epsilon": eps,
        "sup_error": over.sup_error,
        "sup_error_2N": rows[2 * N][0].sup_error,
        "stability_constant": over.sup_error / eps if eps > 0 else 0.0,
        "bound": eps * float(over.tail_sums[-1]),
        "tail_sum": float(over.tail_sums[-1]),
        "tail_sum_2N": float(rows[2 * N][0].tail_sums[-1]),
        "sampling_sup_error": plain.sup_error,
        "sampling_sup_error_2N": rows[2 * N][1].sup_error,
        "decay_exponent": tail.decay_exponent,
    }
    return over.to_csv(), summary


def cmd_airy(cfg):
    from .airy import X_SWITCH, branch_mismatch, zeros

    n_max = cfg.get("n_max", 50)
    kind = cfg.get("kind")
    if kind is None:
        gamma = cfg.get("gamma", 0.0)
        b = cfg.get("b", 1.0)
        kind = "wi" if gamma == 0 else "w"
        beta = 0.0 if gamma == 0 else 1 / math.tan(gamma) / math.sqrt(b)
    else:
        beta = cfg.get("beta", 0.0)
    table = zeros(kind, beta, n_max)
    summary = {"kind": kind, "beta": table.beta, "n_max": n_max,
               "max_residual": float(table.residuals.max()),
               "x_switch": X_SWITCH, "branch_mismatch": branch_mismatch()}
    return table.to_csv(), summary


def cmd_calibrate(cfg):
    from .kernels import calibrate_pw_normalization, pw_kernels, reproducing_kernel

    a_pw, b_pw = cfg["a_pw"], cfg["b_pw"]
    if not a_pw < b_pw:
        raise ConfigError("calibrate needs a_pw < b_pw")
    N = cfg.get("truncation", 200)
    grid = _grid(cfg) if "grid" in cfg else None
    cal = calibrate_pw_normalization(a_pw, b_pw, N=N, grid=grid)
    # the calibrated reconstruction itself, for plotting
    import numpy as np
    lam = np.arange(-N, N + 1) * math.pi / b_pw
    w0 = 0.3 + 0.2j
    samples = np.sin(a_pw * (lam - np.conj(w0))) / np.where(lam == np.conj(w0), 1, lam - np.conj(w0))
    vals = pw_kernels(a_pw, b_pw, cal.grid, lam)[1] @ samples / cal.factor
    summary = {"a_pw": a_pw, "b_pw": b_pw, "N": N, "factor": cal.factor,
               "variation": cal.variation, "sup_error": cal.sup_error}
    return _kernel_csv(cal.grid, vals), summary


COMMANDS = {"spectrum": cmd_spectrum, "kernel": cmd_kernel, "reconstruct": cmd_reconstruct,
            "stability": cmd_stability, "airy": cmd_airy, "calibrate": cmd_calibrate}


# plumbing -------------------------------------------------------------------

def _finite(obj):
    """Drop non-finite numbers so the JSON summary never carries NaN or Inf."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items() if not (isinstance(v, float) and not math.isfinite(v))}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if hasattr(obj, "item"):
        return _finite(obj.item())
    return obj


def load_config(path: str, command: str) -> dict:
    import jsonschema

    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if isinstance(cfg, dict):
        cfg.setdefault("command", command)
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config: {exc.message}") from exc
    if cfg["command"] != command:
        raise ConfigError(f"config is for '{cfg['command']}', not '{command}'")
    return cfg


def run(command: str, config_path: str, out: str | None = None) -> int:
    from .errors import ConfigurationError, NumericalFailure

    try:
        cfg = load_config(config_path, command)
        prefix = out or cfg.get("output") or os.path.splitext(config_path)[0]
        data, summary = COMMANDS[command](cfg)
    except (ConfigError, ConfigurationError) as exc:
        print(f"{command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"{command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    summary = _finite({"command": command, **summary})
    with open(prefix + ".csv", "w") as fh:
        fh.write(data)
    with open(prefix + ".json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return 0


def main(argv=None) -> int:
    threads = os.environ.get("SAMPLER_THREADS")
    if threads:
        for var in _THREAD_VARS:
            os.environ[var] = threads
    parser = argparse.ArgumentParser(prog="dbsampling", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", help="output prefix (default: config 'output' or config path stem)")
    args = parser.parse_args(argv)
    return run(args.command, args.config, args.out)


if __name__ == "__main__":
    sys.exit(main())
