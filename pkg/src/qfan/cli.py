"""Command-line entry point: ``qfan <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 internal
invariant violation. Every numeric result printed to the console is also
written to a JSON file next to the command's other outputs.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from ._validation import ConfigError, InvariantViolation, QFANError
from .data import Dataset, ShowerRecipe, load_dataset, save_csv, save_dataset, split, synth_showers
from .decoder import DEFAULT_RHO_MIN, fit_ridge, weight_norm_bound_check
from .evaluation import evaluate, noise_accumulation_check, scaling_table, write_plot_tables
from .generation import ModelBundle, generate_batch, provenance
from .sketch import SketchPlan, inner_product_estimate
from .training import (TrainConfig, TrainingProblem, block_bounds, build_cache, make_feature_map,
                       make_sketch, objective_bootstrap, spsa_step, step_circuit_count, train)

logger = logging.getLogger("qfan")

OUTPUT_ENV = "QFAN_OUTPUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _out_path(value, default_name) -> Path:
    """Relative outputs resolve against ``$QFAN_OUTPUT_DIR`` when it is set."""
    base = Path(os.environ.get(OUTPUT_ENV, "."))
    p = Path(value or default_name)
    return p if p.is_absolute() else base / p


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _save_images(Y, path: Path, meta: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    ds = Dataset(np.asarray(Y, float), meta)
    if path.suffix.lower() == ".csv":
        save_csv(ds, path)
        (path.with_suffix(".csv.json")).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return path
    return save_dataset(ds, path)


def _read_config(path) -> TrainConfig:
    if path is None:
        return TrainConfig()
    text = Path(path).read_text()
    if Path(path).suffix.lower() == ".json":
        return TrainConfig.from_dict(json.loads(text))
    return TrainConfig.from_text(text)


# ------------------------------------------------------------ commands

def cmd_gen_data(args) -> int:
    recipe = ShowerRecipe()
    if args.recipe:
        try:
            rec = json.loads(Path(args.recipe).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"recipe is not valid JSON: {exc}") from None
        if not isinstance(rec, dict):
            raise ConfigError("recipe must be a JSON object")
        recipe = ShowerRecipe.from_dict(rec)
    ds = synth_showers(recipe, d=args.d, n=args.n, seed=args.seed)
    out = _out_path(args.out, "showers.qfd")
    _save_images(ds.Y, out, ds.metadata)
    print(f"wrote {ds.n} x {ds.d} dataset to {out}")
    return 0


def _train_test(args, d_default=12):
    if args.data:
        ds = load_dataset(args.data)
    else:
        ds = synth_showers(d=d_default, n=args.n_train + args.n_test, seed=args.data_seed)
    if args.n_train + args.n_test > ds.n:
        raise ConfigError(f"dataset has {ds.n} rows, need {args.n_train} + {args.n_test}")
    return split(ds, args.n_train, args.n_test, seed=args.data_seed)


def cmd_train(args) -> int:
    config = _read_config(args.config)
    overrides = {}
    if args.exact:
        overrides["shots"] = None
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.steps is not None:
        overrides["steps"] = args.steps
    config = config.replace(**overrides) if overrides else config
    config.validate()
    ds = load_dataset(args.data)
    Y = ds.Y if args.n_train is None else ds.Y[:args.n_train]
    out = _out_path(args.out, "bundle")
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    with (out / "history.jsonl").open("w") as hist:
        result = train(config, Y, callback=lambda rec: hist.write(rec.to_json() + "\n"))
    wall = time.perf_counter() - t0
    bundle = ModelBundle.from_training(result)
    bundle.save(out)

    final, half = objective_bootstrap(result.problem, result.theta, result.eval_rows, result.eval_seed,
                                      n_boot=1000, seed=config.seed)
    expected = config.steps * step_circuit_count(config.batch_size)
    uses_circuits = getattr(result.feature_map, "uses_theta", True)
    report = {"initial_objective": result.initial_objective, "final_objective": final,
              "final_objective_ci95_half_width": half, "total_circuits": result.total_circuits,
              "expected_circuits": expected if uses_circuits else 0,
              "decoder_gain": [dec.gain for dec in result.decoders],
              "bundle_sha256": bundle.digest(), "config": config.to_dict(), "wall_time": wall}
    _write_json(out / "train_report.json", report)
    print(f"objective {result.initial_objective:.5g} -> {final:.5g} +/- {half:.2g} (95% bootstrap, 1000 resamples)")
    print(f"circuits {result.total_circuits} (2*T*G*n_b = {expected}); bundle in {out}")
    if uses_circuits and result.total_circuits != expected:
        raise InvariantViolation(f"ran {result.total_circuits} circuits, expected {expected}")
    return 0


def cmd_generate(args) -> int:
    bundle = ModelBundle.load(args.bundle)
    shots = None if args.exact else (args.shots if args.shots is not None else "default")
    Y = generate_batch(bundle, args.n, shots=shots, seed=args.seed, residuals_enabled=not args.no_residuals)
    out = _out_path(args.out, "generated.qfd")
    prov = provenance(bundle, args.seed, bundle.config.shots if shots == "default" else shots,
                      not args.no_residuals, args.n)
    _save_images(Y, out, {"d": bundle.d, "N": args.n, "generator": "qfan", **prov})
    _write_json(Path(str(out) + ".provenance.json"), prov)
    print(f"wrote {args.n} samples to {out}")
    return 0


def cmd_evaluate(args) -> int:
    truth = load_dataset(args.truth).Y
    gen = load_dataset(args.gen).Y
    block_size = math.ceil(truth.shape[1] / args.blocks) if args.blocks and args.blocks > 1 else None
    report = evaluate(truth, gen, block_size=block_size, config={"blocks": args.blocks})
    out = _out_path(args.out, "report.json")
    report.write(out)
    if args.tables:
        write_plot_tables(truth, gen, args.tables)
    print(f"W1 mean {report.w1_mean:.4g} median {report.w1_median:.4g} max {report.w1_max:.4g}")
    print(f"corr error {report.corr_error:.4g}  energy W1 {report.energy_w1:.4g}  MMD^2 {report.mmd2:.4g}")
    if report.boundary_profile:
        print("boundary profile " + " ".join(f"{v:.4g}" for v in report.boundary_profile))
    return 0


def cmd_ablate(args) -> int:
    from .baselines import SUITES, ablation_csv, run_ablation_suite

    train_ds, test_ds = _train_test(args)
    suites = SUITES if args.suite == "all" else (args.suite,)
    base = _read_config(args.config)
    rows = run_ablation_suite(train_ds.Y, test_ds.Y, base, suites, seeds=tuple(range(args.seeds)))
    out = _out_path(args.out, f"ablation_{args.suite}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(ablation_csv(rows))
    _write_json(out.with_suffix(".json"), rows)
    print(ablation_csv([r for r in rows if r["seed"] == "median"]), end="")
    return 0


def sketch_check(d=12, widths=(8, 32), n_plans=10_000, seed=0) -> list[dict]:
    """Monte Carlo over sketch plans: bias within 3 sigma, variance below ``4|y|^2|y'|^2/m``."""
    rng = np.random.default_rng(seed)
    y, y2 = rng.random(d), rng.random(d)
    truth = float(y @ y2)
    rows = []
    for m in widths:
        est = np.array([inner_product_estimate(SketchPlan(d, m, int(s)), y, y2)
                        for s in np.random.SeedSequence([seed, m]).generate_state(n_plans)])
        sem = est.std(ddof=1) / math.sqrt(n_plans)
        bound = 4.0 * (y @ y) * (y2 @ y2) / m
        rows.append({"m": m, "plans": n_plans, "truth": truth, "mean": float(est.mean()),
                     "z": float((est.mean() - truth) / sem), "variance": float(est.var(ddof=1)),
                     "variance_bound": float(bound),
                     "holds": bool(abs(est.mean() - truth) <= 3 * sem and est.var(ddof=1) <= bound)})
    return rows


def counts_check(ds=(12, 25, 48), n_blocks=(1, 2, 5), batch_sizes=(24, 128), seed=0) -> list[dict]:
    """Instrumented circuit count of one SPSA step across image sizes and block counts."""
    rows = []
    for B in n_blocks:
        for nb in batch_sizes:
            seen = {}
            for d in ds:
                Y = synth_showers(d=d, n=max(2 * nb, 64), seed=seed).Y
                config = TrainConfig(block_size=math.ceil(d / B), batch_size=nb, steps=1, shots=64, seed=seed)
                plan, mixer, projector = make_sketch(config, d)
                cache = build_cache(Y, plan, mixer, config.block_size)
                problem = TrainingProblem(config, Y, cache, block_bounds(d, config.block_size),
                                          make_feature_map(config, projector))
                _, _, _, rec = spsa_step(np.zeros(config.spec.n_params), 0, problem,
                                         np.random.default_rng(seed))
                seen[d] = (rec.circuits, rec.shots)
            expected = step_circuit_count(nb)
            counts = {c for c, _ in seen.values()}
            rows.append({"B": B, "n_b": nb, "expected": expected, "block_counts": sorted({len(block_bounds(d, math.ceil(d / B))) for d in ds}),
                         "circuits_by_d": {str(d): c for d, (c, _) in seen.items()},
                         "holds": counts == {expected} and len({s for _, s in seen.values()}) == 1})
    return rows


def ridge_check(seed=0, trials=50) -> list[dict]:
    rng = np.random.default_rng(seed)
    rows = []
    for t in range(trials):
        n, p, b = int(rng.integers(20, 200)), int(rng.integers(2, 20)), int(rng.integers(1, 8))
        F, Y = rng.normal(size=(n, p)), rng.random((n, b))
        alpha = float(10 ** rng.uniform(-4, 1))
        lhs, rhs, holds = weight_norm_bound_check(F, Y, alpha)
        W = fit_ridge(F, Y, alpha).W
        ref = np.linalg.lstsq(np.vstack([F, math.sqrt(alpha) * np.eye(p)]),
                              np.vstack([Y, np.zeros((p, b))]), rcond=None)[0]
        rows.append({"trial": t, "alpha": alpha, "norm": lhs, "bound": rhs,
                     "max_abs_vs_lstsq": float(np.abs(W - ref).max()),
                     "holds": bool(holds and np.allclose(W, ref, atol=1e-8))})
    return rows


def cmd_theory_check(args) -> int:
    if args.suite == "sketch":
        rows = sketch_check(n_plans=args.plans, seed=args.seed)
    elif args.suite == "counts":
        rows = counts_check(seed=args.seed)
    elif args.suite == "ridge":
        rows = ridge_check(seed=args.seed)
    else:
        if args.bundle:
            bundle = ModelBundle.load(args.bundle)
        else:
            train_ds, _ = _train_test(args)
            bundle = ModelBundle.from_training(train(TrainConfig(seed=args.seed), train_ds.Y))
        rows = noise_accumulation_check(bundle, repetitions=args.repetitions, seed=args.seed)
    out = _out_path(args.out, f"theory_{args.suite}.json")
    _write_json(out, rows)
    for r in rows:
        print("  ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    if not all(r["holds"] for r in rows):
        raise InvariantViolation(f"theory check {args.suite!r} failed; see {out}")
    return 0


def cmd_scale_table(args) -> int:
    rows = scaling_table(args.d, args.nq, rho_min=args.rho_min, n_train=args.n_train,
                         sketch_width=args.sketch_width)
    out = _out_path(args.out, "scale_table.json")
    _write_json(out, rows)
    cols = list(rows[0]) if rows else []
    print("\t".join(cols))
    for r in rows:
        print("\t".join(str(r[c]) for c in cols))
    return 0


# ------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qfan", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP worker threads")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="synthesize a shower dataset")
    g.add_argument("--d", type=int, default=12)
    g.add_argument("--n", type=int, default=7000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--recipe", help="JSON object overriding generator fields")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model bundle")
    t.add_argument("--data", required=True)
    t.add_argument("--config")
    t.add_argument("--out")
    t.add_argument("--exact", action="store_true", help="exact expectations instead of sampled shots")
    t.add_argument("--seed", type=int)
    t.add_argument("--steps", type=int)
    t.add_argument("--n-train", type=int, help="use only the first N rows")
    t.set_defaults(func=cmd_train)

    gen = sub.add_parser("generate", help="free-running samples from a bundle")
    gen.add_argument("--bundle", required=True)
    gen.add_argument("--n", type=int, default=1000)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--shots", type=int)
    gen.add_argument("--exact", action="store_true")
    gen.add_argument("--no-residuals", action="store_true")
    gen.add_argument("--out")
    gen.set_defaults(func=cmd_generate)

    e = sub.add_parser("evaluate", help="compare generated images with truth")
    e.add_argument("--truth", required=True)
    e.add_argument("--gen", required=True)
    e.add_argument("--blocks", type=int, default=1, help="number of autoregressive blocks")
    e.add_argument("--tables", help="directory for plot-ready CSV tables")
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    def data_flags(q):
        q.add_argument("--data", help="dataset file (default: synthetic d=12)")
        q.add_argument("--n-train", type=int, default=6000)
        q.add_argument("--n-test", type=int, default=1000)
        q.add_argument("--data-seed", type=int, default=0)

    a = sub.add_parser("ablate", help="ablation sweeps")
    a.add_argument("--suite", choices=("weight2", "blocksize", "rff", "all"), required=True)
    a.add_argument("--config")
    a.add_argument("--seeds", type=int, default=5)
    a.add_argument("--out")
    data_flags(a)
    a.set_defaults(func=cmd_ablate)

    th = sub.add_parser("theory-check", help="check counting identities and bounds")
    th.add_argument("--suite", choices=("sketch", "noise", "counts", "ridge"), required=True)
    th.add_argument("--seed", type=int, default=0)
    th.add_argument("--plans", type=int, default=10_000)
    th.add_argument("--repetitions", type=int, default=200)
    th.add_argument("--bundle")
    th.add_argument("--out")
    data_flags(th)
    th.set_defaults(func=cmd_theory_check)

    s = sub.add_parser("scale-table", help="block counts, feature counts and fidelity per size")
    s.add_argument("--d", type=int, nargs="+", required=True)
    s.add_argument("--nq", type=int, nargs="+", required=True)
    s.add_argument("--rho-min", type=float, default=DEFAULT_RHO_MIN)
    s.add_argument("--n-train", type=int, default=6000)
    s.add_argument("--sketch-width", type=int, help="default: chosen from d")
    s.add_argument("--out")
    s.set_defaults(func=cmd_scale_table)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"qfan: usage error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except InvariantViolation as exc:
        print(f"qfan: invariant violated: {exc}", file=sys.stderr)
        return 3
    except (QFANError, ValueError, OSError, KeyError) as exc:
        print(f"qfan: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
