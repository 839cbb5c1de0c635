"""``idp-guard`` command line: generate / train / bound / eval / baseline / grid.

Every command reads the artifacts of the one before it from disk, so a
pipeline can be stopped and resumed at any step. Settings come from an
optional JSON config (``--config``) with command-line flags taking precedence.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._random import stream
from .access import AccessGuard, naive_idp_query, naive_noise_query
from .bab import BoundResult, compute_bound
from .config import ConfigError, RunConfig
from .exceptions import ArtifactMissing, DatasetError, EncodingError, ShapeError, SolverError, TrainingError
from .hyper import build_hyper, compute_difference_intervals, propagate_bounds
from .milp import encode
from .network import Network, forward, load_dataset_csv, load_inputs_csv, save_dataset_csv
from .synthetic import export_boundary_grid, generate_synthetic_2d
from .training import LooFamily, train_loo_family

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_TIMEOUT = 4
EXIT_TRAINING = 5

log = logging.getLogger("idp_guard")


def _csv_ints(text):
    return tuple(int(t) for t in text.split(",") if t.strip())


def _require(path, producer):
    path = Path(path)
    if not path.exists():
        raise ArtifactMissing(path, producer)
    return path


def load_bounds(path) -> dict:
    """Read a bounds JSON file into ``{class: BoundResult}``."""
    doc = json.loads(_require(path, "bound").read_text())
    return {int(c): BoundResult.from_dict(int(c), entry) for c, entry in doc.items()}


def save_bounds(results: dict, path) -> None:
    doc = {str(c): results[c].to_dict() for c in sorted(results)}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _family_dir(args, cfg):
    return Path(args.family) if args.family else cfg.path("family")


def cmd_generate(args, cfg):
    out = Path(args.out) if args.out else Path(cfg.dataset or cfg.path("dataset.csv"))
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset_csv(generate_synthetic_2d(args.n, cfg.seed), out)
    log.info("wrote %d points to %s", args.n, out)
    return EXIT_OK


def cmd_train(args, cfg):
    if cfg.dataset is None:
        raise ConfigError("no dataset given (use --data or set 'dataset' in the config)")
    dataset = load_dataset_csv(_require(cfg.dataset, "generate"))
    out = _family_dir(args, cfg)
    family = train_loo_family(dataset, cfg.architecture, cfg.train_config(), workers=cfg.workers)
    family.save(out)
    log.info("saved family of %d networks to %s", len(family) + 1, out)
    return EXIT_OK


def _export_lp(family, c, cfg, directory):
    net = family.full
    hyper = build_hyper(family.members(sorted(family.omitted)))
    nb, hb = propagate_bounds(net), propagate_bounds(hyper)
    model = encode(net, hyper, c, (nb, hb), compute_difference_intervals(net, hyper, nb), cfg.tau)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"class_{c}.lp").write_text(model.to_lp())


def cmd_bound(args, cfg):
    family = LooFamily.load(_require(_family_dir(args, cfg) / "manifest.json", "train").parent)
    out = Path(args.out) if args.out else cfg.path("bounds.json")
    classes = cfg.classes if cfg.classes is not None else range(family.full.num_classes)
    results = load_bounds(out) if out.exists() and not args.force else {}
    bab_cfg = cfg.bab_config(deterministic=args.deterministic)
    timed_out = False
    for c in classes:
        if c in results and results[c].exact:
            log.info("class %d: exact bound already in %s, skipping", c, out)
            continue
        if args.export_lp:
            _export_lp(family, c, cfg, Path(args.export_lp))
        try:
            res = compute_bound(family, c, bab_cfg)
        except SolverError as exc:
            # keep the partial trace and last anytime bound on disk
            results[c] = exc.partial
            save_bounds(results, out)
            raise
        results[c] = res
        save_bounds(results, out)
        timed_out |= res.timed_out
        log.info("class %d: beta=%s exact=%s milps=%d", c, res.to_dict()["beta"], res.exact, res.milp_count)
    return EXIT_TIMEOUT if timed_out else EXIT_OK


def _bounds_for_guard(args, cfg):
    net = Network.load(_require(args.network or cfg.path("family") / "full.json", "train"))
    results = load_bounds(args.bounds or cfg.path("bounds.json"))
    return net, {c: r.beta for c, r in results.items()}


def cmd_eval(args, cfg):
    net, bounds = _bounds_for_guard(args, cfg)
    X = load_inputs_csv(_require(args.inputs, "generate"))
    guard = AccessGuard(net, bounds, cfg.epsilon, seed=cfg.seed)
    labels, paths = guard.query_batch(X)
    reference = np.argmax(forward(net, X), axis=1)
    out = Path(args.out) if args.out else cfg.path("eval.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index"] + [f"x{i + 1}" for i in range(X.shape[1])] + ["label", "path"])
        for i, (x, l, p) in enumerate(zip(X, labels, paths)):
            w.writerow([i] + [repr(float(v)) for v in x] + [int(l), p])
    counts = {p: paths.count(p) for p in sorted(set(paths))}
    print(f"queries={len(X)} paths={counts} agreement_with_network={np.mean(labels == reference):.4f}")
    return EXIT_OK


def cmd_baseline(args, cfg):
    family = LooFamily.load(_require(_family_dir(args, cfg) / "manifest.json", "train").parent)
    X = load_inputs_csv(_require(args.inputs, "generate"))
    reference = np.argmax(forward(family.full, X), axis=1)
    rng_noise = stream(cfg.seed, "naive-noise")
    rng_idp = stream(cfg.seed, "naive-idp")
    noise = np.array([naive_noise_query(family.full, x, cfg.epsilon, rng_noise) for x in X])
    idp = np.array([naive_idp_query(family, x, cfg.epsilon, rng_idp) for x in X])
    out = Path(args.out) if args.out else cfg.path("baseline.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "network", "naive_noise", "naive_idp"])
        for i in range(len(X)):
            w.writerow([i, int(reference[i]), int(noise[i]), int(idp[i])])
    print(f"queries={len(X)} naive_noise_agreement={np.mean(noise == reference):.4f} "
          f"naive_idp_agreement={np.mean(idp == reference):.4f}")
    return EXIT_OK


def cmd_grid(args, cfg):
    net, bounds = _bounds_for_guard(args, cfg)
    members = None
    fam_dir = _family_dir(args, cfg)
    if args.family or (fam_dir / "manifest.json").exists():
        members = LooFamily.load(_require(fam_dir / "manifest.json", "train").parent).networks()
    out = Path(args.out) if args.out else cfg.path("grid.csv")
    rows = export_boundary_grid(out, net, bounds, args.resolution, members)
    log.info("wrote %d grid rows to %s", rows, out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="idp-guard", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--output-dir", help="directory for default artifact paths")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic 2-D dataset")
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", parents=[common], help="train the full network and its leave-one-out family")
    t.add_argument("--data", dest="dataset")
    t.add_argument("--arch", dest="architecture", type=_csv_ints, help="layer sizes, e.g. 2,16,2")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", dest="learning_rate", type=float)
    t.add_argument("--workers", type=int)
    t.add_argument("--family", help="output directory for the family")
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("bound", parents=[common], help="compute per-class confidence bounds")
    b.add_argument("--family")
    b.add_argument("--classes", type=_csv_ints)
    b.add_argument("--tau", type=float)
    b.add_argument("--milp-time-limit", type=float)
    b.add_argument("--total-time-limit", type=float)
    b.add_argument("--workers", type=int)
    b.add_argument("--backend")
    b.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True,
                   help="omit timings from the output so reruns are byte-identical")
    b.add_argument("--export-lp", metavar="DIR", help="also write the full-set MILP per class as LP text")
    b.add_argument("--force", action="store_true", help="recompute classes already present in the output")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bound)

    for name, func, hlp in (("eval", cmd_eval, "answer queries through the guard"),
                            ("grid", cmd_grid, "export the 2-D decision-boundary grid")):
        e = sub.add_parser(name, parents=[common], help=hlp)
        e.add_argument("--network")
        e.add_argument("--bounds")
        e.add_argument("--out")
        if name == "eval":
            e.add_argument("--inputs", required=True)
            e.add_argument("--epsilon", type=float)
        else:
            e.add_argument("--family", help="family directory for the agreement column")
            e.add_argument("--resolution", type=int, default=300)
        e.set_defaults(func=func)

    n = sub.add_parser("baseline", parents=[common], help="run the naive noise baselines")
    n.add_argument("--family")
    n.add_argument("--inputs", required=True)
    n.add_argument("--epsilon", type=float)
    n.add_argument("--out")
    n.set_defaults(func=cmd_baseline)
    return p


_OVERRIDES = ("dataset", "architecture", "epochs", "batch_size", "learning_rate", "classes", "tau",
              "milp_time_limit", "total_time_limit", "workers", "epsilon", "backend", "seed", "output_dir")


def resolve_config(args) -> RunConfig:
    base = RunConfig.load(args.config, check_paths=args.command != "generate") if args.config else RunConfig()
    return base.with_overrides(**{k: getattr(args, k, None) for k in _OVERRIDES})


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # bound always logs one progress line per pop
    verbose = args.verbose or args.command == "bound"
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO if verbose else logging.WARNING)
    log.propagate = False
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except (ConfigError, ArtifactMissing, DatasetError, ShapeError, EncodingError, ValueError) as exc:
        print(f"idp-guard: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"idp-guard: solver failure: {exc} {exc.stats}", file=sys.stderr)
        return EXIT_SOLVER
    except TrainingError as exc:
        print(f"idp-guard: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    finally:
        log.removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
