"""Command-line driver: synth, extract, tune, evaluate, estimate-view.

Settings come from an optional ``--config`` file of ``key=value`` lines;
flags given on the command line override it.
"""
import argparse
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor

from gaitgts import dataset as ds
from gaitgts.errors import GaitError
from gaitgts.ga import GaConfig, HypothesisFitness, evolve, log_records, sequential_refine, view_seed
from gaitgts.imagecore import load_png
from gaitgts.segmentation import WHOLE_TEMPLATE, read_hypotheses, write_hypotheses
from gaitgts.synth import casia_like_specs, write_corpus
from gaitgts.templates import VIEW_ANGLES, TemplateKind
from gaitgts.viewest import (estimate_view_from_frames, fit_view_estimator, load_estimator,
                             save_estimator)

log = logging.getLogger("gaitgts")


@dataclasses.dataclass
class RunConfig:
    corpus: str = None
    template: str = "gei"
    seed: int = 0
    jobs: int = os.cpu_count() or 1
    out: str = "out"
    templates: str = None
    hypotheses: str = None
    knn: int = None
    tuning_size: int = 24
    population: int = 20
    generations: int = 15
    crossover: float = 0.6
    mutation: float = 0.03
    variance_target: float = 0.99
    threshold: int = 128
    whole_template: bool = False
    known_view: bool = False
    subjects: int = 10
    corpus_seed: int = 0

    def __post_init__(self):
        self.kind = TemplateKind.parse(self.template)

    @property
    def template_dir(self):
        return self.templates or os.path.join(self.out, "templates")

    def ga_config(self, view):
        return GaConfig(self.population, self.generations, self.crossover, self.mutation,
                        seed=view_seed(self.seed, view))


def _coerce(name, text):
    kind = {f.name: f.type for f in dataclasses.fields(RunConfig)}.get(name)
    if kind is None:
        raise ValueError(f"unknown config key {name!r}")
    if kind is bool:
        return str(text).strip().lower() in ("1", "true", "yes", "on")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return str(text).strip()


def read_config_file(path):
    values = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{n}: expected key=value")
            key, value = (p.strip() for p in line.split("=", 1))
            key = key.replace("-", "_")
            values[key] = _coerce(key, value)
    return values


def build_config(args):
    values = read_config_file(args.config) if args.config else {}
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return RunConfig(**values)


def _provenance(cfg, **extra):
    lines = [f"seed={cfg.seed}", f"template={cfg.kind.value}"]
    lines += [f"{k}={v}" for k, v in extra.items()]
    return "\n".join(lines)


# --- synth ---------------------------------------------------------------------

def cmd_synth(cfg):
    root = cfg.corpus or os.path.join(cfg.out, "corpus")
    specs = casia_like_specs(cfg.subjects, corpus_seed=cfg.corpus_seed)
    write_corpus(specs, root, jobs=cfg.jobs)
    print(f"wrote {len(specs)} sequences to {root}")
    return 0


# --- extract -------------------------------------------------------------------

def _extract_one(args):
    record, kind, threshold = args
    try:
        digest = ds.record_input_hash(record, extra=f"{kind.value}:{threshold}")
        template, features, span = ds.process_record(record, kind, threshold)
        return record.key, template, features, span, digest, None
    except (GaitError, OSError, ValueError) as exc:
        return record.key, None, None, None, None, f"{type(exc).__name__}: {exc}"


def cmd_extract(cfg):
    if not cfg.corpus:
        raise GaitError("extract needs --corpus")
    records, malformed = ds.scan_corpus(cfg.corpus)
    store = ds.TemplateStore(cfg.template_dir)
    os.makedirs(cfg.template_dir, exist_ok=True)
    os.makedirs(cfg.out, exist_ok=True)
    problems = [str(exc) for exc in malformed]
    todo = []
    for r in records:
        old = store.entries.get(r.key)
        if old is not None and old.input_hash == ds.record_input_hash(r, extra=f"{cfg.kind.value}:{cfg.threshold}"):
            continue
        todo.append((r, cfg.kind, cfg.threshold))
    if cfg.jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_extract_one, todo, chunksize=8))
    else:
        results = [_extract_one(t) for t in todo]
    for key, template, features, span, digest, err in results:
        if err:
            problems.append(f"{key}: {err}")
            continue
        store.put(template, features, span, digest, key)
    live = {r.key for r in records}
    for key in [k for k in store.entries if k not in live]:
        del store.entries[key]
    store.write_index()
    with open(os.path.join(cfg.out, "extract.log"), "w") as fh:
        for p in problems:
            fh.write(p + "\n")
    for p in problems:
        log.warning("%s", p)
    print(f"{len(store.entries)} templates in {cfg.template_dir} "
          f"({len(results)} computed, {len(problems)} problems)")
    return 0


# --- tune ----------------------------------------------------------------------

def _load_store(cfg):
    store = ds.TemplateStore(cfg.template_dir)
    if not store.entries:
        raise GaitError(f"no template store at {cfg.template_dir}; run extract first")
    return store


def _plan(cfg, store):
    return ds.make_split(list(store.entries.values()), cfg.seed, cfg.tuning_size)


def _tune_view(cfg, store, plan, view):
    tuning = ds.build_tuning_set(store, plan, view, cfg.variance_target)
    fitness = HypothesisFitness(tuning, knn=cfg.knn)
    result = evolve(cfg.ga_config(view), tuning, fitness=fitness)
    best = sequential_refine(result.best, fitness)
    return view, best, fitness(best), log_records(view, result)


def cmd_tune(cfg):
    store = _load_store(cfg)
    plan = _plan(cfg, store)
    os.makedirs(cfg.out, exist_ok=True)
    tuning = store.select(plan.tuning_subjects)
    estimator = fit_view_estimator([e.features for e in tuning], [e.view for e in tuning])
    save_estimator(estimator, os.path.join(cfg.out, "view_estimator.npz"))
    header = _provenance(cfg, tuning_subjects=" ".join(plan.tuning_subjects),
                         population=cfg.population, generations=cfg.generations,
                         crossover=cfg.crossover, mutation=cfg.mutation)
    if cfg.whole_template:
        hyps = {v: WHOLE_TEMPLATE for v in VIEW_ANGLES}
        write_hypotheses(os.path.join(cfg.out, "hypotheses.txt"), hyps, header + "\nwhole_template=1")
        return 0
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(lambda v: _tune_view(cfg, store, plan, v), VIEW_ANGLES))
    else:
        results = [_tune_view(cfg, store, plan, v) for v in VIEW_ANGLES]
    hyps = {}
    with open(os.path.join(cfg.out, "evolution.log"), "w") as fh:
        for view, best, report, lines in results:
            hyps[view] = best
            for line in lines:
                fh.write(line + "\n")
            fh.write(json.dumps({"view": view, "refined": dataclasses.astuple(best),
                                 "fitness": round(report.fitness, 10)}, sort_keys=True) + "\n")
            print(f"view {view:3d}: {best} fitness={report.fitness:.4f}")
    write_hypotheses(os.path.join(cfg.out, "hypotheses.txt"), hyps, header)
    return 0


# --- evaluate ------------------------------------------------------------------

def _estimator(cfg, store, plan):
    path = os.path.join(cfg.out, "view_estimator.npz")
    if os.path.exists(path):
        return load_estimator(path)
    tuning = store.select(plan.tuning_subjects)
    estimator = fit_view_estimator([e.features for e in tuning], [e.view for e in tuning])
    save_estimator(estimator, path)
    return estimator


def cmd_evaluate(cfg):
    store = _load_store(cfg)
    plan = _plan(cfg, store)
    os.makedirs(cfg.out, exist_ok=True)
    if cfg.whole_template:
        hyps = {v: WHOLE_TEMPLATE for v in VIEW_ANGLES}
    else:
        path = cfg.hypotheses or os.path.join(cfg.out, "hypotheses.txt")
        if not os.path.exists(path):
            raise GaitError(f"hypothesis file {path} not found; run tune or pass --hypotheses")
        hyps = read_hypotheses(path)
        missing = [v for v in VIEW_ANGLES if v not in hyps]
        if missing:
            raise GaitError(f"hypothesis file lacks views {missing}")
    estimator = None if cfg.known_view else _estimator(cfg, store, plan)
    table = ds.evaluate_view_invariant(store, plan, hyps, estimator, knn=cfg.knn,
                                       variance_target=cfg.variance_target,
                                       cache_dir=os.path.join(cfg.out, "models"))
    ds.save_table(table, cfg.out)
    print(table.to_text(), end="")
    return 0


# --- estimate-view -------------------------------------------------------------

def cmd_estimate_view(cfg, sequence=None):
    if sequence:
        path = os.path.join(cfg.out, "view_estimator.npz")
        if not os.path.exists(path):
            raise GaitError(f"{path} not found; run tune first")
        names = sorted(n for n in os.listdir(sequence) if n.lower().endswith(".png"))
        frames = [load_png(os.path.join(sequence, n)) >= cfg.threshold for n in names]
        print(estimate_view_from_frames(load_estimator(path), frames))
        return 0
    store = _load_store(cfg)
    plan = _plan(cfg, store)
    estimator = _estimator(cfg, store, plan)
    entries = store.select(plan.evaluation_subjects)
    rows = [(e.key, e.view, estimator.estimate(e.features)) for e in entries]
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "view_estimates.csv"), "w") as fh:
        fh.write("key,true_view,estimated_view\n")
        for row in rows:
            fh.write("%s,%d,%d\n" % row)
    correct = sum(t == p for _, t, p in rows)
    print(f"view estimation: {correct}/{len(rows)} correct ({100.0 * correct / max(len(rows), 1):.2f}%)")
    return 0


# --- entry point ---------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value settings file; flags override it")
    common.add_argument("--corpus", help="corpus root in CASIA-B layout")
    common.add_argument("--template", choices=[k.value for k in TemplateKind])
    common.add_argument("--seed", type=int, help="seed for the subject split and the GA")
    common.add_argument("--jobs", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--templates", help="template store (default OUT/templates)")
    common.add_argument("--hypotheses", help="fixed hypothesis file (skips the GA for evaluate)")
    common.add_argument("--knn", type=int, nargs="?", const=1, help="classify with kNN in LDA space (k, default 1)")
    common.add_argument("--tuning-size", type=int)
    common.add_argument("--population", type=int)
    common.add_argument("--generations", type=int)
    common.add_argument("--variance-target", type=float)
    common.add_argument("--threshold", type=int)
    common.add_argument("--whole-template", action="store_const", const=True,
                        help="use the unmasked template for every view")
    common.add_argument("--known-view", action="store_const", const=True,
                        help="route probes by their true view instead of the estimate")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gaitgts", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", parents=[common], help="write a synthetic corpus")
    p.add_argument("--subjects", type=int)
    p.add_argument("--corpus-seed", type=int)
    sub.add_parser("extract", parents=[common], help="compute templates and view features")
    sub.add_parser("tune", parents=[common], help="search per-view masks on the tuning subjects")
    sub.add_parser("evaluate", parents=[common], help="view-invariant CCR table")
    p = sub.add_parser("estimate-view", parents=[common], help="estimate walking direction")
    p.add_argument("--sequence", help="directory of frames of one walk")
    return parser


COMMANDS = {"synth": cmd_synth, "extract": cmd_extract, "tune": cmd_tune, "evaluate": cmd_evaluate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = build_config(args)
        if args.command == "estimate-view":
            return cmd_estimate_view(cfg, args.sequence)
        return COMMANDS[args.command](cfg)
    except (GaitError, OSError, ValueError) as exc:
        print(f"gaitgts {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
