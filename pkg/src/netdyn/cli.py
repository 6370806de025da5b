"""Command-line front end: one subcommand per experiment.

Every run reads its parameters from flags (optionally seeded from a
JSON config or a previous manifest via ``--config``), writes CSV
artifacts plus a ``manifest.json`` into the output directory, and is a
pure function of the manifest: re-running a manifest reproduces the
artifact bytes exactly, independently of ``--threads``.

CSV conventions: a header row, full-precision decimal floats (shortest
round-trip repr), ordered rows, and a trailing comment line with the
sha256 of the canonical parameter JSON.  Exit codes: 0 success, 1 usage
or file errors, 2 numeric failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import classify, constructions, core, entropy, lyapunov, meanfield

__all__ = ["main", "run"]


class UsageError(Exception):
    """Bad flags, missing files, malformed inputs."""


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _canonical_params(params: dict) -> str:
    hashed = {k: v for k, v in params.items() if k not in ("out", "threads")}
    return json.dumps(hashed, sort_keys=True, separators=(",", ":"))


def _params_hash(params: dict) -> str:
    return hashlib.sha256(_canonical_params(params).encode()).hexdigest()


def _write_csv(path: Path, header: list[str], rows: list[list], params: dict, comments: list[str] | None = None) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    for comment in comments or []:
        lines.append(f"# {comment}")
    lines.append(f"# manifest {_params_hash(params)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_manifest(out_dir: Path, subcommand: str, params: dict, artifacts: list[Path]) -> Path:
    manifest = {
        "subcommand": subcommand,
        "params": {k: v for k, v in params.items() if k != "out"},
        "params_sha256": _params_hash(params),
        "artifacts": {
            p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in artifacts
        },
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return path


def _parallel_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v != ""]


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v != ""]


def _log_grid(lo: float, hi: float, count: int) -> list[float]:
    return [float(v) for v in np.logspace(math.log10(lo), math.log10(hi), count)]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _run_scalar_sweep(params: dict, out: Path, threads: int) -> list[Path]:
    a_values = np.arange(params["a_min"], params["a_max"] + 1e-12, params["a_step"])
    b_values = np.arange(params["b_min"], params["b_max"] + 1e-12, params["b_step"])
    grid = lyapunov.scalar_tanh_lambda1_grid(a_values, b_values, params["x0"], params["steps"])
    rows = [
        [a_values[i], b_values[j], params["x0"], grid[i, j], params["steps"]]
        for i in range(len(a_values))
        for j in range(len(b_values))
    ]
    path = out / "scalar_sweep.csv"
    _write_csv(path, ["a", "b", "x0", "lambda1", "steps"], rows, params)
    return [path]


def _run_ensemble_sweep(params: dict, out: Path, threads: int) -> list[Path]:
    sigma2_list = params.get("sigma2_list") or _log_grid(params["sigma2_min"], params["sigma2_max"], params["sigma2_count"])
    cells = meanfield.ensemble_lyapunov_sweep(
        params["d_list"],
        sigma2_list,
        seeds=params["seeds"],
        steps=params["steps"],
        base_seed=params["seed"],
        scaling=params["scaling"],
        map_fn=(lambda fn, items: _parallel_map(fn, items, threads)) if threads > 1 else None,
    )
    agg_rows = [
        [c.d, c.sigma2, c.lambda1_mean, c.lambda1_std, c.eq19_literal, c.eq19_consistent]
        for c in cells
    ]
    agg_path = out / "ensemble_sweep.csv"
    _write_csv(agg_path, ["d", "sigma2", "lambda1_mean", "lambda1_std", "eq19_literal", "eq19_consistent"], agg_rows, params)
    seed_rows = [
        [c.d, c.sigma2, seed_index, lam, ent, c.steps]
        for c in cells
        for seed_index, lam, ent in c.per_seed
    ]
    seed_path = out / "ensemble_sweep_per_seed.csv"
    _write_csv(seed_path, ["d", "sigma2", "seed", "lambda1", "entropy", "steps"], seed_rows, params)
    return [agg_path, seed_path]


def _run_meanfield(params: dict, out: Path, threads: int) -> list[Path]:
    sigma_list = params.get("sigma_list") or _log_grid(params["sigma_min"], params["sigma_max"], params["sigma_count"])
    rows = []
    for d in params["d_list"]:
        for sigma in sigma_list:
            r = meanfield.chaos_condition(sigma, d)
            rows.append(
                [
                    r.sigma, r.d, r.h_value, r.R_bound, r.R_fixed, r.beta, r.chaotic_predicted,
                    r.chaotic_fixed, r.h_consistent, r.R_bound_consistent, r.beta_consistent, r.chaotic_consistent,
                ]
            )
    path = out / "meanfield.csv"
    _write_csv(
        path,
        [
            "sigma", "d", "h", "R_bound", "R_fixed", "beta", "predicate",
            "predicate_fixed", "h_consistent", "R_bound_consistent", "beta_consistent", "predicate_consistent",
        ],
        rows,
        params,
    )
    return [path]


def _run_norm_concentration(params: dict, out: Path, threads: int) -> list[Path]:
    def one(d: int):
        spec = core.EnsembleSpec(
            d=d,
            depth=1,
            entry_variance=params["entry_variance"],
            seed=params["seed"],
            scaling=params["scaling"],
        )
        return meanfield.norm_concentration(spec, params["steps"], params["seeds"])

    stats = _parallel_map(one, params["d_list"], threads)
    series_rows = [
        [s.d, t, float(s.time_series[t])]
        for s in stats
        for t in range(len(s.time_series))
    ]
    series_path = out / "norm_series.csv"
    _write_csv(series_path, ["d", "step", "normalized_norm_mean"], series_rows, params)
    stat_rows = [[s.d, s.stationary_mean, s.stationary_variance] for s in stats]
    stats_path = out / "norm_stats.csv"
    _write_csv(stats_path, ["d", "stationary_mean", "stationary_variance"], stat_rows, params)
    return [series_path, stats_path]


def _run_chaos_construct(params: dict, out: Path, threads: int) -> list[Path]:
    config = constructions.TanhChaosConfig.default(params["A"], params["r"], params["steps"])
    run = constructions.tanh_chaos_run(config)
    rows = [[t + 1, float(run.growth_log[t])] for t in range(params["steps"])]
    csv_path = out / "chaos_growth.csv"
    _write_csv(csv_path, ["t", "log2_growth_rate"], rows, params)
    net_path = out / "chaos_network.json"
    core.save_network(run.network, net_path)
    return [csv_path, net_path]


def _run_relu_angle(params: dict, out: Path, threads: int) -> list[Path]:
    config = constructions.ReluAngleConfig(
        a=params["a"], x0=params["x0"], t0=params["t0"], T=params["T"], c_bound=params["c_bound"]
    )
    net = constructions.relu_angle_network(config)
    x0_vec = np.array([params["x0"], params["x2_init"]])
    rows = []
    for T in range(1, params["T"] + 1):
        step = 1e-7 * params["x0"] * params["a"] ** (-max(T - 5, 0))
        grad = constructions.angle_gradient(net, x0_vec, T, step=step)
        rows.append([T, step, grad])
    csv_path = out / "angle_gradient.csv"
    _write_csv(csv_path, ["T", "fd_step", "angle_gradient"], rows, params)
    net_path = out / "relu_angle_network.json"
    core.save_network(net, net_path)
    return [csv_path, net_path]


def _load_or_generate_network(params: dict) -> core.LayeredNetwork:
    if params.get("network"):
        return core.load_network(params["network"])
    spec = core.EnsembleSpec(
        d=params["d"],
        depth=params["depth"],
        entry_variance=params["entry_variance"],
        seed=params["seed"],
        scaling=params["scaling"],
    )
    return core.generate_gaussian_network(spec)


def _run_procedure1(params: dict, out: Path, threads: int) -> list[Path]:
    from .rng import make_rng

    net = _load_or_generate_network(params)
    x0 = np.asarray(params["x0"]) if params.get("x0") else make_rng(params["seed"], 1).random(net.d) * 2.0 - 1.0
    estimate = lyapunov.procedure1_estimate(net, x0, params["trials"], params["scale"], seed=params["seed"])
    rows = [[t, float(estimate.d_values[t])] for t in range(params["trials"])]
    path = out / "procedure1.csv"
    comments = [
        f"max_abs {_fmt(estimate.max_abs)}",
        f"log_normalized {_fmt(estimate.log_normalized)}",
    ]
    _write_csv(path, ["trial", "d_t"], rows, params, comments=comments)
    return [path]


def _box_from_params(params: dict, d: int):
    lo, hi = params["box"]
    return [(lo, hi)] * d


def _run_entropy_table(params: dict, out: Path, threads: int) -> list[Path]:
    net = _load_or_generate_network(params)
    rows = entropy.entropy_table(
        net,
        _box_from_params(params, net.d),
        params["grid_step"],
        params["n_list"],
        params["eps_list"],
    )
    path = out / "entropy_table.csv"
    clipped = max(r["clipped_states"] for r in rows) if rows else 0
    _write_csv(
        path,
        ["n", "epsilon", "spanning", "separated", "H_s_spanning", "H_s_separated"],
        [[r["n"], r["epsilon"], r["spanning"], r["separated"], r["H_s_spanning"], r["H_s_separated"]] for r in rows],
        params,
        comments=[f"clipped_states {clipped}"],
    )
    return [path]


def _run_ensemble_entropy(params: dict, out: Path, threads: int) -> list[Path]:
    from .rng import make_rng, normals

    rng = make_rng(params["seed"])
    sigma = math.sqrt(params["sigma2"])
    sequences = []
    for _ in range(params["M"]):
        layers = tuple(
            core.AffineLayer(W=normals(rng, (params["d"], params["d"]), sigma), b=np.zeros(params["d"]), activation=core.ActivationKind.TANH)
            for _ in range(params["n"])
        )
        sequences.append(core.LayeredNetwork(layers=layers))
    z0 = normals(rng, (params["d"] * params["L"],), 0.5)
    path_set = entropy.ensemble_paths(sequences, z0, params["n"])
    labels = np.full(params["M"], -1, dtype=int)
    cluster = 0
    for i in range(params["M"]):
        if labels[i] < 0:
            members = [j for j in range(params["M"]) if labels[j] < 0 and path_set.pairwise_distances[i, j] <= params["epsilon"]]
            for j in members:
                labels[j] = cluster
            cluster += 1
    r_e = cluster
    h_e = math.log2(r_e) / params["n"]
    rows = [[m, int(labels[m])] for m in range(params["M"])]
    path = out / "ensemble_entropy.csv"
    _write_csv(path, ["m", "cluster_id"], rows, params, comments=[f"r_e {r_e}", f"H_e {_fmt(h_e)}"])
    return [path]


def _run_complexity(params: dict, out: Path, threads: int) -> list[Path]:
    dataset = classify.load_dataset(params["dataset"])
    rows = []
    for eps in params["eps_list"]:
        report = classify.classification_complexity(
            dataset, eps, params["offsets"], scale_floor=params.get("scale_floor"), seed=params["seed"]
        )
        rows.append([report.epsilon, report.hybrid_count, report.complexity_text, report.offsets_tried])
    path = out / "complexity.csv"
    _write_csv(path, ["epsilon", "hybrid_count", "complexity", "offsets_tried"], rows, params)
    return [path]


def _run_layer_bound(params: dict, out: Path, threads: int) -> list[Path]:
    if params.get("complexity") is not None:
        complexity = params["complexity"]
    else:
        dataset = classify.load_dataset(params["dataset"])
        report = classify.classification_complexity(dataset, params["epsilon"], params["offsets"], seed=params["seed"])
        if report.separated:
            raise UsageError("dataset is fully separated at this resolution: the layer bound does not apply")
        complexity = report.complexity
    if params.get("hs") is not None:
        hs = params["hs"]
    else:
        from .rng import make_rng

        net = _load_or_generate_network(params)
        x0 = make_rng(params["seed"], 1).random(net.d) * 2.0 - 1.0
        hs = lyapunov.benettin_spectrum(net, x0, params["repeat"]).entropy
    bound = classify.layer_lower_bound(complexity, hs)
    path = out / "layer_bound.csv"
    _write_csv(path, ["complexity", "entropy_rate", "layer_bound"], [[complexity, hs, bound]], params)
    return [path]


def _run_hausdorff(params: dict, out: Path, threads: int) -> list[Path]:
    dataset = classify.load_dataset(params["dataset"])
    value = classify.hausdorff_eps_delta(
        dataset, params["epsilon"], params["delta"], params["offsets"], seed=params["seed"]
    )
    report = classify.classification_complexity(dataset, params["epsilon"], params["offsets"], seed=params["seed"])
    path = out / "hausdorff.csv"
    _write_csv(
        path,
        ["epsilon", "delta", "hybrid_count", "hausdorff_dim"],
        [[params["epsilon"], params["delta"], report.hybrid_count, value]],
        params,
    )
    return [path]


_DEFAULT_SHATTER_POINTS = [[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0], [2.5, 0.5], [0.0, -3.0]]


def _run_shatter(params: dict, out: Path, threads: int) -> list[Path]:
    depth = params["depth"]
    if not 1 <= depth <= 3:
        raise UsageError("shatter supports depth 1, 2, or 3 (4, 5, or 6 points)")
    if params.get("points"):
        points = np.asarray(classify.load_dataset(params["points"]).points)
    else:
        points = np.asarray(_DEFAULT_SHATTER_POINTS)
    needed = depth + 3
    if points.shape[0] < needed:
        raise UsageError(f"depth {depth} needs {needed} points, got {points.shape[0]}")
    family = classify.shatter_four(points[:4])
    for i in range(4, needed):
        family = classify.shatter_extend(family, points[i])
    rows = []
    artifacts = []
    for index, labeling in enumerate(family.labelings()):
        net = family.networks[labeling]
        margin = net.margin(family.points)
        bits = "".join("1" if s > 0 else "0" for s in labeling)
        rows.append([bits, net.depth, margin])
        net_path = out / f"shatter_{bits}.json"
        core.save_network(net.network(), net_path)
        artifacts.append(net_path)
    csv_path = out / "shatter_verification.csv"
    _write_csv(csv_path, ["labeling_bits", "depth", "margin"], rows, params)
    return [csv_path] + artifacts


_SUBCOMMANDS = {
    "scalar-sweep": _run_scalar_sweep,
    "ensemble-sweep": _run_ensemble_sweep,
    "meanfield": _run_meanfield,
    "norm-concentration": _run_norm_concentration,
    "chaos-construct": _run_chaos_construct,
    "relu-angle": _run_relu_angle,
    "procedure1": _run_procedure1,
    "entropy-table": _run_entropy_table,
    "ensemble-entropy": _run_ensemble_entropy,
    "complexity": _run_complexity,
    "layer-bound": _run_layer_bound,
    "hausdorff": _run_hausdorff,
    "shatter": _run_shatter,
}


def run(subcommand: str, params: dict, out_dir, threads: int = 1) -> list[Path]:
    """Execute one subcommand; returns the written artifact paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = _SUBCOMMANDS[subcommand](params, out, threads)
    manifest = _write_manifest(out, subcommand, params, artifacts)
    return artifacts + [manifest]


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 on usage errors (argparse default is 2)
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="netdyn", description="Layered-network dynamics experiments")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", type=str, default=f"out/{name}")
        p.add_argument("--config", type=str, default=None, help="JSON file with params (a manifest works)")
        return p

    p = add("scalar-sweep", help="top exponent of x -> tanh(a x + b) over an (a, b) grid")
    p.add_argument("--a-min", type=float, default=-5.0)
    p.add_argument("--a-max", type=float, default=5.0)
    p.add_argument("--a-step", type=float, default=0.1)
    p.add_argument("--b-min", type=float, default=-1.0)
    p.add_argument("--b-max", type=float, default=1.0)
    p.add_argument("--b-step", type=float, default=0.1)
    p.add_argument("--x0", type=float, default=0.2)
    p.add_argument("--steps", type=int, default=1000)

    p = add("ensemble-sweep", help="exponent sweep over (d, sigma^2) with fresh Gaussian layers")
    p.add_argument("--d-list", type=_int_list, default=[1, 2, 10, 50])
    p.add_argument("--sigma2-list", type=_float_list, default=None)
    p.add_argument("--sigma2-min", type=float, default=0.01)
    p.add_argument("--sigma2-max", type=float, default=100.0)
    p.add_argument("--sigma2-count", type=int, default=13)
    p.add_argument("--seeds", type=int, default=8)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--scaling", choices=["raw", "one_over_d"], default="raw")

    p = add("meanfield", help="chaos predicate table over (sigma, d)")
    p.add_argument("--d-list", type=_int_list, default=[1, 2, 8, 10, 50])
    p.add_argument("--sigma-list", type=_float_list, default=None)
    p.add_argument("--sigma-min", type=float, default=0.01)
    p.add_argument("--sigma-max", type=float, default=100.0)
    p.add_argument("--sigma-count", type=int, default=21)

    p = add("norm-concentration", help="normalized state norm under fresh tanh layers")
    p.add_argument("--d-list", type=_int_list, default=[5, 20, 100])
    p.add_argument("--entry-variance", type=float, default=2.25)
    p.add_argument("--scaling", choices=["raw", "one_over_d"], default="one_over_d")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--seeds", type=int, default=32)

    p = add("chaos-construct", help="designed tanh layers with growing tangent")
    p.add_argument("--A", type=float, default=4.0)
    p.add_argument("--r", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=100)

    p = add("relu-angle", help="angle-gradient growth of the designed ReLU network")
    p.add_argument("--a", type=float, default=2.0)
    p.add_argument("--x0", type=float, default=1.0)
    p.add_argument("--x2-init", type=float, default=0.3)
    p.add_argument("--t0", type=int, default=50)
    p.add_argument("--T", type=int, default=25)
    p.add_argument("--c-bound", type=float, default=1.0)

    p = add("procedure1", help="perturbation-ratio exponent estimate")
    p.add_argument("--network", type=str, default=None, help="network JSON (otherwise generated)")
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--depth", type=int, default=20)
    p.add_argument("--entry-variance", type=float, default=0.25)
    p.add_argument("--scaling", choices=["raw", "one_over_d"], default="raw")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--scale", type=float, default=1e-4)
    p.add_argument("--x0", type=_float_list, default=None)

    p = add("entropy-table", help="spanning/separated orbit counts over (n, epsilon)")
    p.add_argument("--network", type=str, default=None)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--entry-variance", type=float, default=9.0)
    p.add_argument("--scaling", choices=["raw", "one_over_d"], default="raw")
    p.add_argument("--box", type=_float_list, default=[-1.0, 1.0])
    p.add_argument("--grid-step", type=float, default=1 / 64)
    p.add_argument("--n-list", type=_int_list, default=[1, 2, 4, 8])
    p.add_argument("--eps-list", type=_float_list, default=[0.125, 0.25])

    p = add("ensemble-entropy", help="distinct composite paths of M random layer sequences")
    p.add_argument("--M", type=int, default=8)
    p.add_argument("--L", type=int, default=2)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--sigma2", type=float, default=0.64)
    p.add_argument("--epsilon", type=float, default=1e-3)

    p = add("complexity", help="hybrid-cell classification complexity of a dataset")
    p.add_argument("--dataset", type=str, required=True)
    p.add_argument("--eps-list", type=_float_list, default=[0.5])
    p.add_argument("--offsets", type=int, default=8)
    p.add_argument("--scale-floor", type=float, default=None)

    p = add("layer-bound", help="depth lower bound (complexity + 1) / H_s")
    p.add_argument("--complexity", type=float, default=None)
    p.add_argument("--hs", type=float, default=None)
    p.add_argument("--dataset", type=str, default=None)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--offsets", type=int, default=8)
    p.add_argument("--network", type=str, default=None)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--entry-variance", type=float, default=0.5)
    p.add_argument("--scaling", choices=["raw", "one_over_d"], default="raw")
    p.add_argument("--repeat", type=int, default=100)

    p = add("hausdorff", help="(epsilon, delta) resolution-limited dimension")
    p.add_argument("--dataset", type=str, required=True)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--offsets", type=int, default=8)

    p = add("shatter", help="construct and verify all labelings of D + 3 points")
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--points", type=str, default=None, help="CSV of points (labels ignored)")

    return parser


def _collect_params(args: argparse.Namespace, argv: list[str]) -> dict:
    params = {k.replace("-", "_"): v for k, v in vars(args).items() if k not in ("subcommand", "config")}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from None
        if "params" in loaded:  # a manifest
            loaded = loaded["params"]
        explicit = _explicit_flags(argv)
        for key, value in loaded.items():
            if key in ("out", "threads"):
                continue
            if key not in explicit:
                params[key] = value
    return params


def _explicit_flags(argv: list[str]) -> set[str]:
    """Flag names the user typed on this invocation (they win over --config)."""
    explicit = set()
    for token in argv:
        if token.startswith("--"):
            explicit.add(token[2:].split("=", 1)[0].replace("-", "_"))
    return explicit


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        params = _collect_params(args, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        artifacts = run(args.subcommand, params, args.out, threads=args.threads)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, core.NetworkFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for path in artifacts:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
