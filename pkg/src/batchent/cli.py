"""Command-line front end: synthetic data generation, experiment runs,
strategy comparison, margin-normality diagnostics, and the annotation server.

Commands are deterministic given their config (timing columns excluded); all
plotting is out of process -- the CLI emits plot-ready CSV, never images.

Exit codes: 0 success, 2 usage or config error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import data as dat
from . import diagnostics, loop, model
from .diagnostics import DegenerateVariance, inverse_normal_cdf, normal_cdf  # noqa: F401
from .loop import ExperimentConfig

OUT_ENV = "BATCHENT_OUT"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config parsing


def _key_line(text: str, key: str) -> int:
    """1-based line of the first occurrence of a JSON key, for error messages."""
    needle = f'"{key}"'
    pos = text.find(needle)
    if pos < 0:
        return 1
    return text.count("\n", 0, pos) + 1


def _reject_unknown(obj: dict, allowed, where: str, path: str, text: str) -> None:
    for key in obj:
        if key not in allowed:
            line = _key_line(text, key)
            raise ConfigError(f"{path}:{line}: unknown key {key!r} in {where}")


def _require(obj: dict, keys, where: str, path: str, text: str) -> None:
    for key in keys:
        if key not in obj:
            line = _key_line(text, where) if where != "config" else 1
            raise ConfigError(f"{path}:{line}: {where} is missing required key {key!r}")


def load_config_text(path: str) -> tuple[dict, str]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}:1: top-level config must be a JSON object")
    return cfg, text


_SYNTH_KEYS = {"n", "d", "latent_dim", "nonlinearity", "noise", "seed", "pool", "test", "triplet_seed", "min_gap"}
_PATH_KEYS = {"features", "dissim", "pool", "test", "triplets", "test_count", "split_seed"}
_TOP_KEYS = {
    "dataset", "strategies", "rounds", "batch_size", "n_passes", "dropout_p",
    "lam", "min_norm", "init_pool", "seeds", "noise_rate", "candidate_cap",
    "hidden_layers", "embed_dim", "epochs", "pretrain_epochs", "sgd_batch",
    "lr", "out",
}


def build_dataset(spec: dict, path: str, text: str) -> dat.TripletDataset:
    if "synthetic" in spec:
        s = spec["synthetic"]
        _reject_unknown(s, _SYNTH_KEYS, "dataset.synthetic", path, text)
        _require(s, ("n", "d", "latent_dim", "pool", "test"), "synthetic", path, text)
        sp = dat.SyntheticSpec(
            n=int(s["n"]),
            d=int(s["d"]),
            latent_dim=int(s["latent_dim"]),
            nonlinearity=s.get("nonlinearity", "tanh"),
            noise=float(s.get("noise", 0.0)),
            seed=int(s.get("seed", 0)),
        )
        return dat.make_synthetic_dataset(
            sp,
            train_count=int(s["pool"]),
            test_count=int(s["test"]),
            triplet_seed=int(s.get("triplet_seed", 0)),
            min_gap=s.get("min_gap"),
        )
    if "paths" in spec:
        p = spec["paths"]
        _reject_unknown(p, _PATH_KEYS, "dataset.paths", path, text)
        _require(p, ("features", "dissim"), "paths", path, text)
        features = dat.load_features(p["features"])
        gt = dat.load_dissim(p["dissim"])
        if "pool" in p and "test" in p:
            pool = dat.load_triplets(p["pool"])
            test = dat.load_triplets(p["test"])
        elif "triplets" in p:
            _require(p, ("test_count",), "paths", path, text)
            everything = dat.load_triplets(p["triplets"])
            n_test = int(p["test_count"])
            if not 0 < n_test < len(everything):
                raise ConfigError(
                    f"{path}:{_key_line(text, 'test_count')}: test_count must be in (0, {len(everything)})"
                )
            frac = (len(everything) - n_test) / len(everything)
            pool, test = dat.split_triplets(everything, frac, seed=int(p.get("split_seed", 0)))
        else:
            raise ConfigError(
                f"{path}:{_key_line(text, 'paths')}: paths needs either pool+test or triplets+test_count"
            )
        return dat.TripletDataset(features=features, train_pool=pool, test=test, ground_truth=gt)
    raise ConfigError(f"{path}:{_key_line(text, 'dataset')}: dataset needs 'synthetic' or 'paths'")


def parse_experiment_config(path: str, seed_override: int | None = None) -> tuple[dict, ExperimentConfig]:
    cfg, text = load_config_text(path)
    _reject_unknown(cfg, _TOP_KEYS, "config", path, text)
    _require(cfg, ("dataset", "strategies", "rounds", "batch_size"), "config", path, text)

    strategies_raw = cfg["strategies"]
    if not isinstance(strategies_raw, list) or not strategies_raw:
        raise ConfigError(f"{path}:{_key_line(text, 'strategies')}: strategies must be a nonempty list")
    from .strategies import STRATEGY_NAMES

    for s in strategies_raw:
        if s not in STRATEGY_NAMES:
            raise ConfigError(
                f"{path}:{_key_line(text, 'strategies')}: unknown strategy {s!r}; expected one of {list(STRATEGY_NAMES)}"
            )

    def _check(name, value, ok, msg):
        if not ok:
            raise ConfigError(f"{path}:{_key_line(text, name)}: {name} {msg}, got {value!r}")
        return value

    rounds = _check("rounds", int(cfg["rounds"]), int(cfg["rounds"]) >= 0, "must be >= 0")
    batch = _check("batch_size", int(cfg["batch_size"]), int(cfg["batch_size"]) >= 1, "must be >= 1")
    n_passes = _check("n_passes", int(cfg.get("n_passes", 70)), int(cfg.get("n_passes", 70)) >= 2, "must be >= 2")
    dropout_p = _check(
        "dropout_p", float(cfg.get("dropout_p", 0.02)),
        0.0 <= float(cfg.get("dropout_p", 0.02)) < 1.0, "must be in [0, 1)",
    )
    noise = _check(
        "noise_rate", float(cfg.get("noise_rate", 0.0)),
        0.0 <= float(cfg.get("noise_rate", 0.0)) <= 1.0, "must be in [0, 1]",
    )
    seeds = cfg.get("seeds", [0])
    if seed_override is not None:
        seeds = [seed_override]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError(f"{path}:{_key_line(text, 'seeds')}: seeds must be a nonempty list")

    lam = cfg.get("lam")
    cap = cfg.get("candidate_cap", 5000)
    exp = ExperimentConfig(
        strategies=list(strategies_raw),
        rounds=rounds,
        batch_size=batch,
        seeds=[int(s) for s in seeds],
        n_passes=n_passes,
        dropout_p=dropout_p,
        lam=None if lam is None else float(lam),
        min_norm=float(cfg.get("min_norm", 1e-8)),
        init_pool=int(cfg.get("init_pool", 200)),
        noise_rate=noise,
        candidate_cap=None if cap is None else int(cap),
        hidden_layers=[int(h) for h in cfg.get("hidden_layers", [32, 16])],
        embed_dim=int(cfg.get("embed_dim", 8)),
        epochs=int(cfg.get("epochs", 200)),
        pretrain_epochs=int(cfg.get("pretrain_epochs", 300)),
        sgd_batch=int(cfg.get("sgd_batch", 500)),
        lr=float(cfg.get("lr", 1e-3)),
    )
    return cfg, exp


# ---------------------------------------------------------------------------
# CSV emission


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


RAW_HEADER = "strategy,round,seed,accuracy,batch_entropy,select_ms,train_ms"
AGG_HEADER = "strategy,round,mean_accuracy,std_accuracy"


def write_raw_csv(rows: list[dict], path: Path) -> None:
    lines = [RAW_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                _fmt(r[c])
                for c in ("strategy", "round", "seed", "accuracy", "batch_entropy", "select_ms", "train_ms")
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_raw_csv(path: Path) -> list[dict]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != RAW_HEADER:
        raise dat.ParseError(f"{path}: bad header")
    out = []
    for line in lines[1:]:
        if not line.strip():
            continue
        s, rnd, seed, acc, ent, sel, tr = line.split(",")
        out.append(
            {
                "strategy": s,
                "round": int(rnd),
                "seed": int(seed),
                "accuracy": float(acc),
                "batch_entropy": None if ent == "" else float(ent),
                "select_ms": float(sel),
                "train_ms": float(tr),
            }
        )
    return out


def write_aggregate_csv(rows: list[dict], path: Path) -> None:
    lines = [AGG_HEADER]
    for r in rows:
        lines.append(",".join(_fmt(r[c]) for c in ("strategy", "round", "mean_accuracy", "std_accuracy")))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUT_ENV) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_synth(args) -> int:
    if args.latent_dim > args.d:
        print(f"error: latent dim {args.latent_dim} exceeds feature dim {args.d}", file=sys.stderr)
        return 2
    try:
        spec = dat.SyntheticSpec(
            n=args.n, d=args.d, latent_dim=args.latent_dim,
            nonlinearity=args.nonlinearity, noise=args.noise,
            seed=args.seed if args.seed is not None else 0,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = _out_dir(args)
    features, gt = dat.generate_synthetic(spec)
    triplets = dat.triplets_from_matrix(gt, args.count, seed=spec.seed, min_gap=args.min_gap)
    dat.save_features(features, out / "features.csv")
    dat.save_dissim(gt, out / "dissim.csv")
    dat.save_triplets(triplets, out / "triplets.jsonl")
    if not args.quiet:
        print(f"wrote features.csv dissim.csv triplets.jsonl to {out}")
    return 0


def _run_experiment_cmd(args) -> int:
    if not args.config:
        print("error: --config is required", file=sys.stderr)
        return 2
    raw_cfg, exp = parse_experiment_config(args.config, seed_override=args.seed)
    seen = set()
    deduped = [s for s in exp.strategies if not (s in seen or seen.add(s))]
    if len(deduped) != len(exp.strategies):
        dropped = [s for s in exp.strategies if exp.strategies.count(s) > 1]
        print(f"warning: duplicate strategies deduplicated: {sorted(set(dropped))}", file=sys.stderr)
        exp.strategies = deduped
    if args.out is None and isinstance(raw_cfg.get("out"), str):
        args.out = raw_cfg["out"]
    out = _out_dir(args)
    dataset = build_dataset(raw_cfg["dataset"], args.config, Path(args.config).read_text(encoding="utf-8"))
    result = loop.run_experiment(dataset, exp)
    rows = result.rows()
    write_raw_csv(rows, out / "raw.csv")
    write_aggregate_csv(result.aggregate(), out / "aggregate.csv")
    if not args.quiet:
        last = max(r["round"] for r in rows)
        for agg in result.aggregate():
            if agg["round"] == last:
                print(
                    f"{agg['strategy']}: round {last} accuracy "
                    f"{agg['mean_accuracy']:.4f} +/- {agg['std_accuracy']:.4f}"
                )
        print(f"wrote raw.csv and aggregate.csv to {out}")
    return 0


def cmd_run(args) -> int:
    return _run_experiment_cmd(args)


def cmd_compare(args) -> int:
    return _run_experiment_cmd(args)


def cmd_diagnose(args) -> int:
    from . import posterior

    features = dat.load_features(args.features)
    triplets = dat.load_triplets(args.triplets)
    if not 0 <= args.triplet_index < len(triplets):
        print(f"error: triplet index {args.triplet_index} outside 0..{len(triplets) - 1}", file=sys.stderr)
        return 2
    seed = args.seed if args.seed is not None else 0
    hidden = [int(h) for h in args.hidden.split(",") if h.strip()]
    params = model.init_params([features.d, *hidden, args.embed_dim], seed=(seed, 12))
    if args.pretrain_epochs > 0:
        cfg = model.TrainConfig(epochs=args.pretrain_epochs, lr=args.lr, seed=(seed, 13))
        params, _ = model.train(params, triplets[: args.pretrain_limit], features.rows, cfg)
    target = triplets[args.triplet_index]
    msm = posterior.sample_margins(
        params, [target], features.rows, n_passes=args.passes, p=args.dropout, seed=(seed, 14)
    )
    samples = msm.samples[0]
    qq = diagnostics.qq_against_normal(samples)
    hist = diagnostics.margin_histogram(samples)
    out = _out_dir(args)
    qq_lines = ["theoretical,observed"] + [
        f"{repr(float(t))},{repr(float(o))}" for t, o in zip(qq.theoretical, qq.observed)
    ]
    (out / "qq.csv").write_text("\n".join(qq_lines) + "\n", encoding="utf-8")
    hist_lines = ["center,count,density,normal_density"] + [
        f"{repr(float(c))},{int(n)},{repr(float(dn))},{repr(float(g))}"
        for c, n, dn, g in zip(hist.centers, hist.counts, hist.densities, hist.normal_densities)
    ]
    (out / "histogram.csv").write_text("\n".join(hist_lines) + "\n", encoding="utf-8")
    summary = {
        "triplet": {"i": target.i, "j": target.j, "k": target.k},
        "n_passes": args.passes,
        "dropout_p": args.dropout,
        "slope": qq.slope,
        "intercept": qq.intercept,
        "r_squared": qq.r_squared,
        "mean": float(np.mean(samples)),
        "std": float(np.std(samples, ddof=1)),
    }
    (out / "diagnose.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    if not args.quiet:
        print(
            f"slope {qq.slope:.4f} intercept {qq.intercept:.4g} r^2 {qq.r_squared:.4f}; "
            f"wrote qq.csv histogram.csv diagnose.json to {out}"
        )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    datasets = {}
    if args.config:
        cfg, text = load_config_text(args.config)
        _reject_unknown(cfg, {"datasets", "port"}, "config", args.config, text)
        for name, spec in cfg.get("datasets", {}).items():
            ds = build_dataset(spec, args.config, text)
            ds.name = name
            datasets[name] = ds
    app = create_app(datasets, ui_dir=args.ui_dir)
    if not args.quiet:
        print(f"serving {sorted(datasets)} on port {args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a JSON config file")
    common.add_argument(
        "--out",
        help=f"output directory (default: ${OUT_ENV} if set, else current directory)",
    )
    common.add_argument("--seed", type=int, default=None, help="override the experiment seed")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    parser = argparse.ArgumentParser(
        prog="batchent",
        description="Batch active learning for perceptual embeddings from relative comparisons.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset on disk")
    p.add_argument("--n", type=int, required=True, help="number of objects")
    p.add_argument("--d", type=int, required=True, help="feature dimension")
    p.add_argument("--latent-dim", type=int, required=True, help="latent perceptual dimension")
    p.add_argument("--nonlinearity", choices=["tanh", "identity"], default="tanh")
    p.add_argument("--noise", type=float, default=0.0, help="feature noise scale")
    p.add_argument("--count", type=int, default=1000, help="number of triplets to sample")
    p.add_argument("--min-gap", type=float, default=None, help="minimum dissimilarity margin")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", parents=[common], help="run the experiment described by --config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", parents=[common], help="compare strategies (same schema as run)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("diagnose", parents=[common], help="margin-normality QQ/histogram data")
    p.add_argument("--features", required=True)
    p.add_argument("--triplets", required=True)
    p.add_argument("--triplet-index", type=int, default=0)
    p.add_argument("--passes", type=int, default=70, help="number of dropout passes")
    p.add_argument("--dropout", type=float, default=0.02)
    p.add_argument("--pretrain-epochs", type=int, default=0)
    p.add_argument("--pretrain-limit", type=int, default=500)
    p.add_argument("--hidden", default="32,16", help="comma-separated hidden widths")
    p.add_argument("--embed-dim", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("serve", parents=[common], help="start the HTTP annotation service")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui-dir", default=None, help="directory of built UI assets to mount at /ui")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (dat.ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
