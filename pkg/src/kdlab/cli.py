"""``kdlab`` command line: every pipeline as a subcommand with reproducible outputs."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from kdlab import __version__
from kdlab.reports import FORMATS, RunManifest, TableReport, dumps, emit_report

log = logging.getLogger("kdlab")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# -- shared helpers ---------------------------------------------------

class Run:
    """Collects outputs of one subcommand invocation."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = argv
        self.out = Path(args.out) if args.out else None
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []

    def input(self, path) -> str:
        from kdlab.corpus import digest
        p = str(path)
        if not Path(p).is_file():
            raise FileNotFoundError(f"input file not found: {p}")
        self.inputs[p] = digest(p)
        return p

    def artifact(self, name: str) -> Path | None:
        if self.out is None:
            return None
        self.outputs.append(name)
        return self.out / name

    def report(self, report, stem: str = "report") -> None:
        if self.out is None:
            sys.stdout.write(_report_text(report))
            return
        for fmt in self.args.format:
            for p in emit_report(report, fmt, self.out / f"{stem}.{fmt}"):
                self.outputs.append(p.name)

    def finish(self) -> None:
        if self.out is None:
            return
        config = {k: v for k, v in sorted(vars(self.args).items())
                  if k not in ("func", "out", "format")}
        config["format"] = list(self.args.format)
        RunManifest(self.args.command, self.argv, config, dict(sorted(self.inputs.items())),
                    self.args.seed, outputs=sorted(set(self.outputs))).save(self.out / MANIFEST)


def _report_text(report) -> str:
    from kdlab.reports import report_json
    return report_json(report)


def _load_corpus(run: Run, path, args):
    from kdlab.corpus import load_parallel
    return load_parallel(run.input(path), lowercase=getattr(args, "lowercase", False),
                         max_len=getattr(args, "max_len", None))


def _align_cfg(args):
    from kdlab.align import AlignConfig
    return AlignConfig(em_iters=args.iters, tension=args.tension, null_prob=args.null_prob,
                       update_tension=args.update_tension, add_alpha=args.add_alpha,
                       threads=args.threads)


def _alignments(run: Run, corpus, align_path, model_path, identity, args):
    from kdlab import align as al
    from kdlab.metrics import identity_alignments
    chosen = sum(bool(v) for v in (align_path, model_path, identity))
    if chosen > 1:
        raise UsageError("choose at most one of --align, --model, --identity")
    if identity:
        return identity_alignments(corpus), "identity"
    if align_path:
        return al.read_alignments(run.input(align_path), corpus), "viterbi"
    if model_path:
        model = al.AlignmentModel.load(run.input(model_path))
    else:
        model = al.train_alignment(corpus, _align_cfg(args))
    return al.align_corpus(model, corpus), "viterbi"


def _counts(corpus, alignments, mode):
    from kdlab.metrics import lex_counts
    return lex_counts(corpus, None if mode == "identity" else alignments, mode)


# -- subcommands ------------------------------------------------------

def cmd_align(run: Run, args) -> None:
    from kdlab import align as al
    corpus = _load_corpus(run, args.corpus, args)
    model = al.train_alignment(corpus, _align_cfg(args))
    links = al.align_corpus(model, corpus)
    aln = run.artifact("alignments.aln")
    if aln is None:
        sys.stdout.write("".join(a.pharaoh() + "\n" for a in links))
        return
    aln.parent.mkdir(parents=True, exist_ok=True)
    al.write_alignments(links, aln)
    model.save(run.artifact("model.json"))
    hist = list(model.log_likelihood)
    run.report(TableReport("alignment-training", ["iteration", "log_likelihood"],
                           [[i, v] for i, v in enumerate(hist)],
                           {"pairs": len(corpus), "tension": model.tension,
                            "null_prob": model.null_prob}))


def cmd_complexity(run: Run, args) -> None:
    from kdlab.metrics import complexity
    corpus = _load_corpus(run, args.corpus, args)
    links, mode = _alignments(run, corpus, args.align, args.model, args.identity, args)
    rep = complexity(_counts(corpus, links, mode), min_count=args.min_count,
                     corpus=corpus if args.sentences else None, bins=args.bins,
                     log_base=args.log_base)
    run.report(rep)


def cmd_entropy_hist(run: Run, args) -> None:
    from kdlab.metrics import complexity
    corpus = _load_corpus(run, args.corpus, args)
    links, mode = _alignments(run, corpus, args.align, args.model, args.identity, args)
    rng = tuple(args.range) if args.range else None
    rep = complexity(_counts(corpus, links, mode), corpus=corpus, bins=args.bins,
                     hist_range=rng, log_base=args.log_base)
    run.report(rep)


def cmd_faithfulness(run: Run, args) -> None:
    from kdlab.metrics import faithfulness
    real = _load_corpus(run, args.real, args)
    alt = _load_corpus(run, args.alt, args)
    rl, rm = _alignments(run, real, args.real_align, args.model, args.identity, args)
    xl, xm = _alignments(run, alt, args.alt_align, args.model, args.identity, args)
    run.report(faithfulness(_counts(real, rl, rm), _counts(alt, xl, xm), args.alpha,
                            mode=args.mode, log_base=args.log_base))


def cmd_reorder(run: Run, args) -> None:
    from kdlab.metrics import reordering
    corpus = _load_corpus(run, args.corpus, args)
    links, _ = _alignments(run, corpus, args.align, args.model, args.identity, args)
    run.report(reordering(links, corpus))


def _read_sentences(path, lowercase):
    with open(path, encoding="utf-8") as f:
        sents = [(line.lower() if lowercase else line).split() for line in f]
    return [s for s in sents if s]


def cmd_langid(run: Run, args) -> None:
    from kdlab.langid import fit_profiles, simplex_report
    corpora = {}
    for spec in args.lang:
        label, sep, path = spec.partition("=")
        if not sep or not label or not path:
            raise UsageError(f"--lang expects LABEL=FILE, got {spec!r}")
        corpora[label] = _read_sentences(run.input(path), args.lowercase)
    profiles = fit_profiles(corpora, args.alpha)
    sents = _read_sentences(run.input(args.input), args.lowercase)
    run.report(simplex_report(profiles, sents))


def cmd_hmm_gen(run: Run, args) -> None:
    from kdlab.hmmlab import random_hmm
    hmm = random_hmm(args.K, args.V, args.a, args.b, seed=args.seed)
    path = run.artifact("hmm.json")
    if path is None:
        sys.stdout.write(dumps(hmm.to_dict()))
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    hmm.save(path)


def _write_dataset(run: Run, ds, name: str) -> None:
    path = run.artifact(name)
    if path is None:
        for s in ds.seqs:
            sys.stdout.write(" ".join(map(str, s.x)) + " ||| " + " ".join(map(str, s.y)) + "\n")
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    ds.save(path)


def _load_hmm(run: Run, path):
    from kdlab.hmmlab import Hmm
    return Hmm.load(run.input(path))


def _load_dataset(run: Run, path, hmm):
    from kdlab.hmmlab import HmmDataset
    ds = HmmDataset.load(run.input(path), K=hmm.K, V=hmm.V)
    return ds


def cmd_hmm_sample(run: Run, args) -> None:
    from kdlab.hmmlab import sample_dataset
    hmm = _load_hmm(run, args.hmm)
    ds = sample_dataset(hmm, args.n, (args.min_len, args.max_len), seed=args.seed)
    _write_dataset(run, ds, "data.txt")


def cmd_hmm_distill(run: Run, args) -> None:
    from kdlab.hmmlab import DecodeStrategy, distill
    hmm = _load_hmm(run, args.hmm)
    ds = _load_dataset(run, args.data, hmm)
    strat = DecodeStrategy.parse(args.strategy)
    _write_dataset(run, distill(hmm, ds, strat, seed=args.seed, threads=args.threads),
                   "distilled.txt")


def cmd_hmm_reborn(run: Run, args) -> None:
    from kdlab.hmmlab import DecodeStrategy, reborn_loop
    hmm = _load_hmm(run, args.hmm)
    ds = _load_dataset(run, args.data, hmm)
    steps = reborn_loop(hmm, ds, args.iters, DecodeStrategy.parse(args.strategy),
                        args.smoothing, seed=args.seed)
    rows = [[s.iteration, s.complexity, s.faithfulness, s.agreement_with_real,
             s.agreement_with_true_seq] for s in steps]
    if args.save_datasets:
        for s in steps[1:]:
            _write_dataset(run, s.dataset, f"reborn-{s.iteration}.txt")
    run.report(TableReport("reborn-trace",
                           ["iteration", "C", "F", "agreement_real", "agreement_viterbi"], rows,
                           {"iters": args.iters, "strategy": args.strategy},
                           {"type": "bars", "labels": [str(r[0]) for r in rows],
                            "values": [r[1] for r in rows], "title": "C(d) per iteration"}))


def _load_config(path) -> dict:
    text = Path(path).read_bytes()
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:        # Python < 3.11
            import tomli as tomllib
        return tomllib.loads(text.decode("utf-8"))
    return json.loads(text)


EXPERIMENTS = ("winrate", "bayes-direction", "multimode", "strategies", "reborn",
               "interpolation")


def run_configured(cfg: dict, seed: int, threads: int):
    """Dispatch an experiment config (already parsed) to its driver."""
    from kdlab import experiments as ex
    from kdlab.student import ExperimentConfig, run_experiment
    cfg = dict(cfg)
    kind = cfg.pop("experiment", "winrate")
    cfg.setdefault("master_seed", seed)
    cfg.setdefault("threads", threads)
    if kind == "winrate":
        return run_experiment(ExperimentConfig.from_dict(cfg))
    if "len_range" in cfg:
        cfg["len_range"] = tuple(cfg["len_range"])
    drivers = {"bayes-direction": ex.bayes_direction, "multimode": ex.multimode_complexity,
               "strategies": ex.strategy_complexity, "reborn": ex.reborn_traces,
               "interpolation": ex.interpolation_overlap}
    if kind not in drivers:
        raise ValueError(f"unknown experiment {kind!r}; choose from {EXPERIMENTS}")
    try:
        return drivers[kind](**cfg)
    except TypeError as e:
        raise ValueError(f"bad {kind} config: {e}") from None


def cmd_hmm_experiment(run: Run, args) -> None:
    cfg = _load_config(run.input(args.config))
    if not isinstance(cfg, dict):
        raise ValueError("experiment config must be a table/object")
    run.report(run_configured(cfg, args.seed, args.threads))


def cmd_compare(run: Run, args) -> None:
    from kdlab.metrics import complexity, faithfulness, identity_alignments, reordering
    real = _load_corpus(run, args.real, args)
    real_links, real_mode = _alignments(run, real, args.real_align, None, args.identity, args)
    real_counts = _counts(real, real_links, real_mode)
    aligns = {}
    for spec in args.alt_align or []:
        name, sep, path = spec.partition("=")
        if not sep:
            raise UsageError(f"--alt-align expects NAME=FILE, got {spec!r}")
        aligns[name] = path
    entries = [("real", real, real_links, real_mode)]
    for spec in args.alt:
        name, sep, path = spec.partition("=")
        if not sep or not name or name == "real":
            raise UsageError(f"--alt expects NAME=FILE with NAME != real, got {spec!r}")
        c = _load_corpus(run, path, args)
        links, mode = _alignments(run, c, aligns.get(name), None, args.identity, args)
        entries.append((name, c, links, mode))
    rows = []
    for name, c, links, mode in entries:
        counts = real_counts if name == "real" else _counts(c, links, mode)
        cval = complexity(counts).value
        fval = 0.0 if name == "real" else faithfulness(real_counts, counts, args.alpha).value
        rval = reordering(links if mode != "identity" else identity_alignments(c), c).mean
        rows.append([name, cval, fval, rval])
    names = [r[0] for r in rows]
    report = TableReport("compare", ["corpus", "complexity", "faithfulness", "reordering"], rows,
                         {"corpora": names},
                         {"type": "panels", "title": "corpus comparison",
                          "panels": [("complexity", names, [r[1] for r in rows]),
                                     ("faithfulness", names, [r[2] for r in rows]),
                                     ("reordering", names, [r[3] for r in rows])]})
    run.report(report)


def cmd_replay(run: Run, args) -> int:
    from kdlab.corpus import digest
    man = RunManifest.load(args.manifest)
    for path, sha in man.inputs.items():
        if not Path(path).is_file() or digest(path) != sha:
            raise ValueError(f"input {path} is missing or changed since the recorded run")
    argv = list(man.argv)
    if args.threads is not None:
        argv = _set_flag(argv, "--threads", str(args.threads))
    out = args.out or str(Path(args.manifest).parent / "replay")
    code = main(argv + ["--out", out], _record_argv=argv)
    if code != EXIT_OK or not args.check:
        return code
    src_dir = Path(args.manifest).parent
    bad = [name for name in man.outputs
           if (src_dir / name).read_bytes() != (Path(out) / name).read_bytes()]
    if bad:
        log.error("replay differs in: %s", ", ".join(bad))
        return EXIT_DATA
    print(f"replay identical: {len(man.outputs)} files")
    return EXIT_OK


def _set_flag(argv, flag, value):
    argv = list(argv)
    if flag in argv:
        argv[argv.index(flag) + 1] = value
    else:
        argv += [flag, value]
    return argv


# -- parser -----------------------------------------------------------

def _common(p, *, corpus_opts=True, align_opts=False):
    p.add_argument("--seed", type=int, default=42, help="master seed (default 42)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="output directory (reports and manifest); stdout if omitted")
    p.add_argument("--format", type=_formats, default=["json"],
                   help="comma list of json,csv,svg (with --out)")
    if corpus_opts:
        p.add_argument("--lowercase", action="store_true")
        p.add_argument("--max-len", type=int, default=250, dest="max_len")
    if align_opts:
        g = p.add_argument_group("aligner")
        g.add_argument("--iters", type=int, default=5)
        g.add_argument("--tension", type=float, default=4.0)
        g.add_argument("--null-prob", type=float, default=0.08, dest="null_prob")
        g.add_argument("--add-alpha", type=float, default=0.01, dest="add_alpha")
        g.add_argument("--update-tension", action="store_true", dest="update_tension")


def _formats(text: str) -> list[str]:
    fmts = [f for f in text.split(",") if f]
    for f in fmts:
        if f not in FORMATS:
            raise argparse.ArgumentTypeError(f"unknown format {f!r}")
    return fmts


def _log_flags(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--log-base", default="e", dest="log_base", help="e (default), 2 or 10")
    g.add_argument("--log2", action="store_const", const="2", dest="log_base")


def _link_source(p):
    p.add_argument("--align", help="Pharaoh alignment file")
    p.add_argument("--model", help="alignment model JSON to align with")
    p.add_argument("--identity", action="store_true", help="link target j to source j")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="kdlab", description="Distillation data analysis toolkit.")
    ap.add_argument("--version", action="version", version=f"kdlab {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("align", help="train the aligner; emit Pharaoh links and model JSON")
    p.add_argument("--corpus", required=True)
    _common(p, align_opts=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("complexity", help="conditional entropy of aligned target words")
    p.add_argument("--corpus", required=True)
    _link_source(p)
    p.add_argument("--min-count", type=float, default=1, dest="min_count")
    p.add_argument("--sentences", action="store_true", help="include per-sentence entropies")
    p.add_argument("--bins", type=int, default=20)
    _log_flags(p)
    _common(p, align_opts=True)
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("entropy-hist", help="per-sentence entropy histogram")
    p.add_argument("--corpus", required=True)
    _link_source(p)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"))
    _log_flags(p)
    _common(p, align_opts=True)
    p.set_defaults(func=cmd_entropy_hist)

    p = sub.add_parser("faithfulness", help="KL of lexical distributions, real vs altered")
    p.add_argument("--real", required=True)
    p.add_argument("--alt", required=True)
    p.add_argument("--real-align", dest="real_align")
    p.add_argument("--alt-align", dest="alt_align")
    p.add_argument("--model", help="align both corpora with this model")
    p.add_argument("--identity", action="store_true")
    p.add_argument("--alpha", type=float, default=1e-3)
    p.add_argument("--mode", choices=("smooth", "restrict"), default="smooth")
    _log_flags(p)
    _common(p, align_opts=True)
    p.set_defaults(func=cmd_faithfulness)

    p = sub.add_parser("reorder", help="fuzzy reordering scores")
    p.add_argument("--corpus", required=True)
    _link_source(p)
    _common(p, align_opts=True)
    p.set_defaults(func=cmd_reorder)

    p = sub.add_parser("langid", help="language posteriors and simplex coordinates")
    p.add_argument("--lang", action="append", required=True, metavar="LABEL=FILE")
    p.add_argument("--input", required=True, help="sentences to score, one per line")
    p.add_argument("--alpha", type=float, default=0.5)
    _common(p)
    p.set_defaults(func=cmd_langid)

    p = sub.add_parser("hmm-gen", help="random HMM teacher")
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--V", type=int, default=10)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--b", type=float, default=1.0)
    _common(p, corpus_opts=False)
    p.set_defaults(func=cmd_hmm_gen)

    p = sub.add_parser("hmm-sample", help="sample a labeled dataset from an HMM")
    p.add_argument("--hmm", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--min-len", type=int, default=4, dest="min_len")
    p.add_argument("--max-len", type=int, default=10, dest="max_len")
    _common(p, corpus_opts=False)
    p.set_defaults(func=cmd_hmm_sample)

    p = sub.add_parser("hmm-distill", help="relabel a dataset with a decoding strategy")
    p.add_argument("--hmm", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--strategy", default="viterbi",
                   help="viterbi|tok|greedy|beam:W|sample|topk:K|interpolate:K")
    _common(p, corpus_opts=False)
    p.set_defaults(func=cmd_hmm_distill)

    p = sub.add_parser("hmm-reborn", help="iterated refit-and-distill trace")
    p.add_argument("--hmm", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--iters", type=int, default=8)
    p.add_argument("--strategy", default="viterbi")
    p.add_argument("--smoothing", type=float, default=0.0)
    p.add_argument("--save-datasets", action="store_true", dest="save_datasets")
    _common(p, corpus_opts=False)
    p.set_defaults(func=cmd_hmm_reborn)

    p = sub.add_parser("hmm-experiment", help="run an experiment from a TOML/JSON config")
    p.add_argument("--config", required=True)
    _common(p, corpus_opts=False)
    p.set_defaults(func=cmd_hmm_experiment)

    p = sub.add_parser("compare", help="complexity/faithfulness/reordering table across corpora")
    p.add_argument("--real", required=True)
    p.add_argument("--real-align", dest="real_align")
    p.add_argument("--alt", action="append", required=True, metavar="NAME=FILE")
    p.add_argument("--alt-align", action="append", dest="alt_align", metavar="NAME=FILE")
    p.add_argument("--identity", action="store_true")
    p.add_argument("--alpha", type=float, default=1e-3)
    _common(p, align_opts=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("replay", help="re-execute a run manifest")
    p.add_argument("manifest")
    p.add_argument("--out")
    p.add_argument("--threads", type=int)
    p.add_argument("--check", action="store_true", help="compare outputs byte by byte")
    p.set_defaults(func=cmd_replay, seed=None, format=["json"])
    return ap


def main(argv=None, _record_argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:            # --help / --version
        return EXIT_OK if not e.code else EXIT_USAGE
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("kdlab: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    record = _record_argv if _record_argv is not None else _strip_out(argv)
    run = Run(args, record)
    try:
        result = args.func(run, args)
        if args.command != "replay":
            run.finish()
        return result if isinstance(result, int) else EXIT_OK
    except UsageError as e:
        print(f"kdlab {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as e:
        print(f"kdlab {args.command}: data error: {e}", file=sys.stderr)
        return EXIT_DATA


def _strip_out(argv):
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        out.append(a)
    return out


if __name__ == "__main__":
    sys.exit(main())
