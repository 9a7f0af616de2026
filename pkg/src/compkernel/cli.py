"""Command-line reports for compositional kernels.

Every command is deterministic given its flags: all randomness flows from
``--seed`` and outputs are written with ``repr`` floats and sorted keys.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, branching, duality, features, hermite, kernel, memorization, rng, spectral, sphere
from .duality import Pgf
from .errors import ConvergenceError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3

_FAMILY = re.compile(r"^(poisson|geometric|binomial|uniform|point)\(([^)]*)\)$")


# --- activation parsing -------------------------------------------------------


def _parse_numbers(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _parse_ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:num`` for a linspace, or a comma-separated list."""
    if ":" in text:
        start, stop, num = text.split(":")
        return np.linspace(float(start), float(stop), int(num))
    return np.array(_parse_numbers(text))


def _family_pgf(name: str, args: list[float]) -> Pgf:
    if name == "poisson":
        return duality.poisson(args[0])
    if name == "geometric":
        return duality.geometric(args[0])
    if name == "binomial":
        return duality.binomial(int(args[0]), args[1])
    if name == "uniform":
        return duality.uniform(int(args[0]))
    return duality.point_mass(int(args[0]))


def resolve_spec(name: str, centered: bool, opts) -> hermite.ActivationSpec | None:
    """Activation spec for a built-in name, ``coeffs:`` list or spec file; ``None`` for PGF inputs."""
    if name.lower() in hermite.ACTIVATIONS:
        fn = hermite.get_activation(name)
        raw = hermite.estimate_coefficients(fn, opts.trunc_level, opts.mc_samples, opts.seed)
    elif name.startswith("coeffs:"):
        raw = hermite.ActivationSpec(_parse_numbers(name[len("coeffs:") :]), name="coeffs")
    elif name.startswith("pgf:") or _FAMILY.match(name):
        return None
    else:
        path = Path(name)
        if not path.exists():
            raise ValueError(f"unknown activation {name!r}: not a built-in, family or file")
        data = json.loads(path.read_text())
        if "degree_cap" in data:
            return None
        raw = hermite.ActivationSpec.from_dict(data)
    if centered:
        return hermite.center_and_normalize(raw)
    return raw if raw.is_normalized() else hermite.normalize(raw)


def resolve_pgf(name: str, centered: bool, opts) -> Pgf:
    """Dual PGF of any accepted activation or offspring-law description."""
    match = _FAMILY.match(name)
    if match:
        return _family_pgf(match.group(1), _parse_numbers(match.group(2)))
    if name.startswith("pgf:"):
        return duality.from_probabilities(_parse_numbers(name[len("pgf:") :]))
    spec = resolve_spec(name, centered, opts)
    if spec is None:
        return Pgf.from_json(Path(name).read_text())
    return duality.pgf_from_activation(spec)


# --- output -------------------------------------------------------------------


def _clean(value):
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if not math.isfinite(value):
            return repr(value)
        return value
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def provenance(opts) -> dict:
    return {
        "seed": opts.seed,
        "mc_samples": opts.mc_samples,
        "trunc_level": opts.trunc_level,
        "degree_cap": opts.degree_cap,
        "version": __version__,
    }


def _csv_cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (dict, list)):
        return json.dumps(_clean(value), sort_keys=True)
    return str(value)


def render(rows: list[dict], opts, paper_ref: str, meta: dict | None = None) -> str:
    prov = provenance(opts)
    if opts.format == "json":
        doc = {
            "command": opts.command,
            "paper_ref": paper_ref,
            "provenance": prov,
            "rows": rows,
        }
        if meta:
            doc["meta"] = meta
        return json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    columns = list(rows[0]) if rows else []
    writer.writerow(columns + list(prov))
    for row in rows:
        writer.writerow([_csv_cell(row[c]) for c in columns] + [_csv_cell(v) for v in prov.values()])
    return buf.getvalue()


def emit(text: str, opts) -> None:
    if opts.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(opts.out).write_text(text)


# --- commands -----------------------------------------------------------------


def cmd_phase_table(opts) -> str:
    rows = []
    for name in opts.activations:
        if name.lower() in hermite.ACTIVATIONS:
            for r in duality.phase_table([name], opts.trunc_level, opts.mc_samples, opts.seed):
                rows.append(
                    {
                        "activation": r.activation,
                        "centered": r.centered,
                        "mu": r.mean,
                        "mu_star": r.mustar,
                        "a1_squared": r.a1_squared,
                        "xi": r.extinction,
                        "mu_se": r.mean_se,
                        "mu_star_se": r.mustar_se,
                        "a1_squared_se": r.a1_squared_se,
                        "xi_se": r.extinction_se,
                    }
                )
            continue
        # Offspring laws have no separate centered form; their row reports p_0 == 0.
        is_law = resolve_spec(name, False, opts) is None
        for centered in (False,) if is_law else (False, True):
            g = resolve_pgf(name, centered, opts)
            rep = duality.classify_phase(g)
            rows.append(
                {
                    "activation": name,
                    "centered": bool(g.prob(0) == 0.0) if is_law else centered,
                    "mu": rep.mean,
                    "mu_star": rep.mustar,
                    "a1_squared": g.prob(1),
                    "xi": rep.extinction,
                    "mu_se": 0.0,
                    "mu_star_se": 0.0,
                    "a1_squared_se": 0.0,
                    "xi_se": 0.0,
                }
            )
    return render(rows, opts, "activation and dual PGF phase quantities: mu, E[Y log Y], a_1^2, extinction probability")


def cmd_limits(opts) -> str:
    g = resolve_pgf(opts.activation, opts.centered, opts)
    depths = _parse_ints(opts.depths)
    if opts.mode == "unscaled":
        grid = parse_grid(opts.grid or "-1:1:41")
        table = kernel.unscaled_limit_curve(g, depths, grid)
        ref = "unscaled compositional kernel limits"
    else:
        grid = parse_grid(opts.grid or "0:5:26")
        table = kernel.rescaled_limit_curve(g, grid, depths, opts.trials, opts.seed)
        ref = "rescaled compositional kernel limits and the Kesten-Stigum Laplace prediction"
    rows = [
        {"L": depth, table.x_name: x, "value": v, "prediction": p}
        for depth, x, v, p in table.records
    ]
    return render(rows, opts, ref, meta=table.notes)


def _dataset_from_opts(opts):
    if opts.dataset:
        return sphere.SphereDataset.load(opts.dataset)
    if opts.n is None or opts.d is None:
        if getattr(opts, "regime", None) == "packing" and opts.d is not None:
            return sphere.greedy_polarized_packing(opts.d, opts.radius, opts.seed, opts.max_rejections)
        raise ValueError("give --dataset or both --n and --d")
    if getattr(opts, "regime", "uniform") == "packing":
        return sphere.greedy_polarized_packing(opts.d, opts.radius, opts.seed, opts.max_rejections, max_points=opts.n)
    return sphere.sample_uniform_sphere(opts.n, opts.d, opts.seed)


def cmd_depth(opts) -> str:
    g = resolve_pgf(opts.activation, opts.centered, opts)
    dataset = _dataset_from_opts(opts)
    if (opts.kappa is None) == (opts.epsilon is None):
        raise ValueError("give exactly one of --kappa or --epsilon")
    if opts.kappa is not None:
        report = memorization.memorization_depth_bounds(g, dataset, opts.kappa)
        ref = "kappa-memorization depth with path-depth, small- and large-correlation bounds"
    else:
        report = memorization.epsilon_closeness_depth(g, dataset, opts.epsilon)
        ref = "epsilon-closeness depth with path-depth, chain, small- and large-correlation bounds"
    data = report.to_dict()
    data["dataset"] = dataset.source
    if opts.format == "json":
        return render([data], opts, ref)
    flat = {k: v for k, v in data.items() if k not in ("components", "warnings")}
    flat["components"] = data["components"]
    flat["warnings"] = data["warnings"]
    return render([flat], opts, ref)


def cmd_spectrum(opts) -> str:
    g = resolve_pgf(opts.activation, opts.centered, opts)
    gen = branching.exact_generation_distribution(g, opts.depth, opts.degree_cap)
    report = spectral.eigenvalues(opts.kmax, opts.dim, gen)
    quad = spectral.eigenvalues_by_quadrature(
        kernel.CompositionalKernel(g, opts.depth), opts.kmax, opts.dim, opts.nodes
    )
    rows = []
    for k in range(opts.kmax + 1):
        lam = float(report.eigenvalues[k])
        rows.append(
            {
                "k": k,
                "lambda_k": lam,
                "N_k_d": report.multiplicities[k],
                "lambda_times_mult": lam * report.multiplicities[k],
                "lambda_quadrature": float(quad[k]),
                "abs_diff": abs(lam - float(quad[k])),
            }
        )
    meta = {"trace_check": report.trace_check, "mass_above_kmax": report.tail_residual}
    return render(rows, opts, "eigenvalues of the compositional kernel on the sphere with quadrature cross-check", meta)


def cmd_features(opts) -> str:
    g = resolve_pgf(opts.activation, opts.centered, opts)
    dataset = _dataset_from_opts(opts)
    target = kernel.build_kernel_matrix(g, dataset, opts.depth).entries
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if opts.algorithm == "1":
            expansion = spectral.legendre_expand(kernel.CompositionalKernel(g, opts.depth), dataset.d, opts.trunc_level)
            fm = features.legendre_features(dataset, expansion, opts.m, opts.seed)
        else:
            spec = features.compressed_activation(g, opts.depth, opts.trunc_level, opts.degree_cap)
            noise = spec.tail_mass if opts.algorithm == "2-noised" else None
            fm = features.hermite_features(dataset, spec, opts.m, opts.seed, noise=noise)
    if opts.matrix_out:
        Path(opts.matrix_out).write_bytes(fm.to_bytes())
    err = np.abs(fm.gram() - target)
    se = fm.gram_stderr()
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, err / se, np.where(err > 0, np.inf, 0.0))
    gen = branching.exact_generation_distribution(g, opts.depth, opts.degree_cap)
    decomposition = features.truncation_decomposition(dataset, gen, opts.trunc_level).to_dict()
    row = {
        "algorithm": opts.algorithm,
        "n": dataset.n,
        "m": opts.m,
        "depth": opts.depth,
        "max_abs_gram_error": float(err.max()),
        "max_standardized_error": float(z.max()),
        "generator": fm.generator,
        "remainder_op_norm": decomposition["remainder_op_norm"],
        "remainder_bound": decomposition["remainder_bound"],
        "regularization_mass": decomposition["regularization_mass"],
    }
    return render([row], opts, "random-feature Gram error and degree-truncation decomposition", {"decomposition": decomposition})


def cmd_condition(opts) -> str:
    dataset = _dataset_from_opts(opts)
    depths = _parse_ints(opts.depths)
    rows = []
    for name in opts.activations:
        g = resolve_pgf(name, opts.centered, opts)
        for r in features.condition_number_vs_depth(dataset, g, depths, opts.trunc_level, opts.m, opts.seed, opts.degree_cap):
            rows.append({"activation": name, **r})
    return render(rows, opts, "condition number of the noised truncated feature Gram matrix versus depth")


# --- parser -------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=rng.DEFAULT_SEED)
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--trunc-level", type=int, default=20, help="Hermite truncation iota")
    p.add_argument("--degree-cap", type=int, default=branching.DEFAULT_DEGREE_CAP, help="power-series degree cap D")
    p.add_argument("--mc-samples", type=int, default=10**6, help="Monte-Carlo samples for coefficient estimation")


def _add_activation(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--activation",
        required=True,
        help="built-in name, coeffs:a0,a1,..., pgf:p0,p1,..., a family such as poisson(2), or a JSON file",
    )
    p.add_argument("--centered", action="store_true", help="center the activation before normalizing")


def _add_dataset(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", help="CSV or binary (n, d) dataset file")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--regime", choices=("uniform", "packing"), default="uniform")
    p.add_argument("--radius", type=float, default=0.5, help="packing radius for --regime packing")
    p.add_argument("--max-rejections", type=int, default=10**5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compkernel", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phase-table", help="mu, E[Y log Y], a_1^2 and xi per activation")
    _add_common(p)
    p.add_argument("--activations", nargs="+", default=list(hermite.BUILTIN_TABLE_ACTIVATIONS))
    p.set_defaults(func=cmd_phase_table)

    p = sub.add_parser("limits", help="unscaled or rescaled kernel curves over depth")
    _add_common(p)
    _add_activation(p)
    p.add_argument("--mode", choices=("unscaled", "rescaled"), default="unscaled")
    p.add_argument("--depths", default="1,2,5,10,30")
    p.add_argument("--grid", default=None, help="start:stop:num or comma list; write --grid=-1:1:41 for negative starts")
    p.add_argument("--trials", type=int, default=10**5, help="branching trials for the rescaled prediction")
    p.set_defaults(func=cmd_limits)

    p = sub.add_parser("depth", help="closeness or memorization depth report")
    _add_common(p)
    _add_activation(p)
    _add_dataset(p)
    p.add_argument("--kappa", type=float)
    p.add_argument("--epsilon", type=float)
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("spectrum", help="kernel eigenvalues on the sphere")
    _add_common(p)
    _add_activation(p)
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--kmax", type=int, default=10)
    p.add_argument("--nodes", type=int, default=spectral.DEFAULT_NODES)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("features", help="random-feature Gram error and truncation summary")
    _add_common(p)
    _add_activation(p)
    _add_dataset(p)
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--m", type=int, default=10_000)
    p.add_argument("--algorithm", choices=("1", "2", "2-noised"), default="2")
    p.add_argument("--matrix-out", help="write the feature matrix here (binary, (n, m) header)")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("condition", help="condition number of the feature Gram matrix versus depth")
    _add_common(p)
    _add_dataset(p)
    p.add_argument("--activations", nargs="+", default=list(hermite.BUILTIN_TABLE_ACTIVATIONS))
    p.add_argument("--centered", action="store_true")
    p.add_argument("--depths", default="1,2,4,8")
    p.add_argument("--m", type=int, default=10_000)
    p.set_defaults(func=cmd_condition)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    opts = parser.parse_args(argv)
    try:
        text = opts.func(opts)
    except ConvergenceError as exc:
        print(f"error: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    emit(text, opts)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
