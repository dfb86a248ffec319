"""Command-line interface: ``parampca synth | train | eval | rate-grid``.

Exit status is 0 on success, 1 on usage or input errors and 2 on numerical
failures (divergence, singular systems, degenerate bases).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import io
from .energy import Penalties
from .errors import NumericalError, PpcaError, UsageError
from .evaluation import GroundTruth, MetricRow, compare_methods, mean_rmse, ppca_projector
from .initialize import BACKWARD, FORWARD, InitConfig
from .model import BinGrid, Dataset
from .optim import CLOSED_FORM, GRADIENT_DESCENT, TrainConfig, train
from .synth import DEFAULT_THETAS, SynthSpec, default_grid, generate_dataset, random_thetas, true_bases, true_means
from .synth import mean_recovery_sse, subspace_recovery_error

log = logging.getLogger("parampca")

DEFAULT_SEED = 0
DEFAULT_RATES = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def parse_grid(spec: Optional[str], bins: Optional[int], value_range, thetas) -> BinGrid:
    """Explicit endpoints ``a,b,c``, ``lo:hi:bins``, or ``bins`` equal bins over a range."""
    if spec:
        if ":" in spec:
            parts = spec.split(":")
            if len(parts) != 3:
                raise UsageError(f"grid {spec!r} must look like lo:hi:bins")
            return BinGrid.equal(float(parts[0]), float(parts[1]), int(parts[2]))
        return BinGrid(_floats(spec))
    if bins is None:
        raise UsageError("give either --grid or --bins")
    lo, hi = value_range if value_range else (float(np.min(thetas)), float(np.max(thetas)))
    return BinGrid.equal(lo, hi, bins)


def _add_grid_args(p):
    p.add_argument("--grid", help="endpoints 'a,b,c,...' or equal bins 'lo:hi:bins'")
    p.add_argument("--bins", type=int, help="number of equal bins (with --range, default: data range)")
    p.add_argument("--range", type=_floats, dest="value_range", help="lo,hi for --bins")


def _add_train_args(p, sweep: bool = False):
    lam = _floats if sweep else float
    p.add_argument("--lambda-m", type=lam, default=[0.008] if sweep else 0.008)
    p.add_argument("--lambda-v", type=lam, default=[4.2] if sweep else 4.2)
    p.add_argument("--lambda-o", type=float, default=20.0)
    p.add_argument("--alpha-m", type=float, default=1e-3)
    p.add_argument("--alpha-v", type=float, default=1e-3)
    p.add_argument("--n-c", type=int, default=1000)
    p.add_argument("--n-m", type=int, default=100)
    p.add_argument("--n-v", type=int, default=500)
    p.add_argument("--mean-solver", choices=[CLOSED_FORM, GRADIENT_DESCENT], default=CLOSED_FORM)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)


def _config(args, lambda_m=None, lambda_v=None, alpha_m=None, alpha_v=None) -> TrainConfig:
    return TrainConfig(
        penalties=Penalties(
            args.lambda_m if lambda_m is None else lambda_m,
            args.lambda_v if lambda_v is None else lambda_v,
            args.lambda_o,
        ),
        n_c=args.n_c,
        n_m=args.n_m,
        n_v=args.n_v,
        alpha_m=args.alpha_m if alpha_m is None else alpha_m,
        alpha_v=args.alpha_v if alpha_v is None else alpha_v,
        mean_solver=args.mean_solver,
        rng_seed=args.seed,
    )


def _counts(args, grid: BinGrid):
    if args.counts:
        if len(args.counts) != grid.n_endpoints:
            raise UsageError(f"--counts needs {grid.n_endpoints} values, got {len(args.counts)}")
        return np.array(args.counts)
    return args.V


def _default_sidecar(path: str, suffix: str) -> Path:
    p = Path(path)
    return p.with_name(p.stem + suffix)


# -- commands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.thetas and args.random:
        raise UsageError("--thetas and --random are mutually exclusive")
    if args.thetas:
        thetas = np.array(args.thetas)
    elif args.random:
        thetas = random_thetas(args.random, args.seed + 1, per_bin=args.per_bin)
    else:
        thetas = DEFAULT_THETAS
    spec = SynthSpec(thetas=thetas, coeff_range=args.coeff, noise_range=args.noise, seed=args.seed)
    dataset, _ = generate_dataset(spec)
    io.write_dataset(args.out, dataset)
    truth_path = args.truth_out or _default_sidecar(args.out, ".truth.csv")
    io.write_truth(truth_path, dataset.theta, true_means(dataset.theta), true_bases(dataset.theta))
    print(f"wrote {dataset.n} observations to {args.out} and ground truth to {truth_path}")
    return 0


def cmd_train(args) -> int:
    dataset = io.read_dataset(args.data)
    grid = parse_grid(args.grid, args.bins, args.value_range, dataset.theta)
    masks = io.read_masks(args.masks, grid.n_endpoints, dataset.K) if args.masks else None
    config = _config(args)
    model, _, report = train(dataset, grid, _counts(args, grid), config, masks=masks,
                             init_config=InitConfig(reorder_direction=args.reorder))
    model = model.replace(metadata=io.training_metadata(config, report))
    io.save_model(args.out, model)
    trace_path = args.trace or _default_sidecar(args.out, ".trace.csv")
    io.write_trace(trace_path, report.energy_trace)
    e = report.final_energy
    print(
        f"cycles={report.cycles_run} rolled_back={report.rolled_back} "
        f"E_data={e.data:.6g} E_smo={e.smoothness:.6g} E_ortho={e.ortho:.6g} total={e.total:.6g}"
    )
    if report.rolled_back and args.strict:
        print("energy increased; rolled back (--strict)", file=sys.stderr)
        return 2
    return 0


EVAL_HEADER = ["method", "label", "per_bin", "n_train", "train_rmse", "test_rmse",
               "mean_sse", "subspace_error", "lambda_m", "lambda_v"]


def _eval_models(args, truth: Optional[GroundTruth]) -> int:
    dataset = io.read_dataset(args.data)
    rows = []
    for path in args.model:
        model = io.load_model(path)
        sse = sub = float("nan")
        if truth is not None:
            sse = mean_recovery_sse(model, truth.thetas, truth.means)
            sub = subspace_recovery_error(model, truth.thetas, truth.bases)
        rows.append([path, dataset.n, mean_rmse(dataset, ppca_projector(model)), sse, sub])
    io.write_table(args.out, ["model", "n", "mean_rmse", "mean_sse", "subspace_error"], rows)
    for r in rows:
        print(f"{r[0]}: mean_rmse={r[2]:.6g}")
    return 0


def cmd_eval(args) -> int:
    truth = io.read_truth(args.truth) if args.truth else None
    if args.model:
        return _eval_models(args, truth)
    train_set = io.read_dataset(args.data)
    test_set = io.read_dataset(args.test) if args.test else train_set
    grid = parse_grid(args.grid, args.bins, args.value_range, train_set.theta)
    configs = {}
    for lm in args.lambda_m:
        for lv in args.lambda_v:
            configs[f"ppca[lambda_m={lm!r},lambda_v={lv!r}]"] = _config(args, lambda_m=lm, lambda_v=lv)
    rows: List[MetricRow] = compare_methods(
        train_set, test_set, grid, args.V, configs, sizes=args.sizes, seed=args.seed,
        methods=args.methods, truth=truth,
    )
    io.write_table(args.out, EVAL_HEADER, ([getattr(r, h) for h in EVAL_HEADER] for r in rows))
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_rate_grid(args) -> int:
    dataset = io.read_dataset(args.data)
    grid = parse_grid(args.grid, args.bins, args.value_range, dataset.theta)
    masks = io.read_masks(args.masks, grid.n_endpoints, dataset.K) if args.masks else None
    rates_m = args.alpha_m_grid or DEFAULT_RATES
    rates_v = args.alpha_v_grid or DEFAULT_RATES
    cells = []
    for am in rates_m:
        for av in rates_v:
            config = _config(args, alpha_m=am, alpha_v=av)
            try:
                _, _, report = train(dataset, grid, _counts(args, grid), config, masks=masks)
                energy = report.final_energy.total
                diverged = not np.isfinite(energy)
                cells.append([am, av, energy, report.cycles_run, diverged])
            except NumericalError as exc:
                log.info("alpha_m=%g alpha_v=%g diverged: %s", am, av, exc)
                cells.append([am, av, float("nan"), 0, True])
    io.write_table(args.out, ["alpha_m", "alpha_v", "final_total", "cycles_run", "diverged"], cells)
    ok = [c for c in cells if not c[4]]
    if not ok:
        print("every learning-rate cell diverged", file=sys.stderr)
        return 2
    best = min(ok, key=lambda c: (c[2], c[1], c[0]))
    print(f"best alpha_m={float(best[0])!r} alpha_v={float(best[1])!r} final_total={float(best[2])!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="parampca", description="Parameterized PCA: training, evaluation and synthetic benchmarks.")
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate the synthetic benchmark dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--noise", type=float, default=1.5, help="noise drawn from U(-noise, noise)")
    p.add_argument("--coeff", type=float, default=1.0, help="coefficients drawn from U(-coeff, coeff)")
    p.add_argument("--thetas", type=_floats, help="explicit parameter values")
    p.add_argument("--random", type=int, help="draw this many parameter values at random instead")
    p.add_argument("--per-bin", action="store_true", help="with --random: that many per bin of the 14-bin grid")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit a PPCA model")
    p.add_argument("--data", required=True)
    _add_grid_args(p)
    p.add_argument("--V", type=int, default=2, help="basis vectors per endpoint")
    p.add_argument("--counts", type=_ints, help="per-endpoint basis counts (overrides --V)")
    p.add_argument("--masks", help="mask table with one row per endpoint")
    p.add_argument("--reorder", choices=[FORWARD, BACKWARD], default=FORWARD)
    _add_train_args(p)
    p.add_argument("--out", required=True, help="model file (JSON)")
    p.add_argument("--trace", help="energy trace table (default: <out>.trace.csv)")
    p.add_argument("--strict", action="store_true", help="exit 2 if training rolled back")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate models or compare PCA / IPCA / PPCA")
    p.add_argument("--data", required=True, help="dataset to evaluate on (training set when comparing)")
    p.add_argument("--model", action="append", help="evaluate saved model(s) on --data")
    p.add_argument("--test", help="held-out dataset for comparisons (default: --data)")
    p.add_argument("--truth", help="ground-truth table for recovery metrics")
    _add_grid_args(p)
    p.add_argument("--V", type=int, default=2)
    p.add_argument("--counts", type=_ints)
    p.add_argument("--methods", type=lambda s: [m for m in s.split(",") if m], default=["pca", "ipca", "ppca"])
    p.add_argument("--sizes", type=_ints, help="training examples per bin, e.g. 2,10,20")
    _add_train_args(p, sweep=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rate-grid", help="pick learning rates by final energy")
    p.add_argument("--data", required=True)
    _add_grid_args(p)
    p.add_argument("--V", type=int, default=2)
    p.add_argument("--counts", type=_ints)
    p.add_argument("--masks")
    _add_train_args(p)
    p.add_argument("--alpha-m-grid", type=_floats)
    p.add_argument("--alpha-v-grid", type=_floats)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rate_grid)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"parampca: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (PpcaError, OSError, ValueError) as exc:
        print(f"parampca: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
