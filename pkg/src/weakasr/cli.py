"""Command-line entry point: one subcommand per pipeline stage.

Every command writes its outputs to the paths it is given and prints a
single JSON summary line on stdout. Exit codes: 0 ok, 2 bad input or
usage, 1 anything else.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import GlobalConfig, load_config
from .datagen import GenerationConfig, generate_label_set, read_labels, synthesize_labels, write_labels
from .endpoints import EndpointConfig, RecognizerClient, SpeechSynthClient, TextGenClient
from .errors import ConfigError, EmptyInputError, EmptyReferenceError, InputError, WeakASRError
from .filterstage import (
    FilterConfig,
    filter_dataset,
    samples_from_manifest,
    score_dataset,
    scored_manifest,
    sweep,
    threshold_grid,
    write_sweep,
)
from .lexicon import load_lexicon, save_lexicon, stats, synthesize_reference_lexicon
from .manifest import (
    DatasetManifest,
    ManifestMetadata,
    SampleRecord,
    duration_stats,
    export_trainer,
    merge,
    read_manifest,
    rebase_audio,
    write_manifest,
)
from .metrics import aggregate, audit_trace, evaluate
from .segmentation import SegmenterId, load_dictionary

log = logging.getLogger("weakasr")


def _summary(**fields) -> None:
    print(json.dumps(fields, ensure_ascii=False, sort_keys=True))


def _created() -> str | None:
    # null unless the caller pins a timestamp, so re-runs stay byte-identical
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if not epoch:
        return None
    try:
        return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    except ValueError:
        raise ConfigError(f"SOURCE_DATE_EPOCH must be an integer, got {epoch!r}") from None


def _seed(args, cfg: GlobalConfig, required: bool = False) -> int | None:
    seed = args.seed if args.seed is not None else cfg.seed
    if seed is None and required:
        raise ConfigError(f"'{args.command}' needs a seed: pass --seed or set it in the config")
    return seed


def _jobs(args, cfg: GlobalConfig) -> int:
    return args.jobs if args.jobs is not None else cfg.jobs


def _parse_kv(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise InputError(f"expected KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _endpoint(cfg: GlobalConfig, name: str, address: str | None, options, seed: int | None) -> EndpointConfig:
    ep = cfg.endpoint(name)
    if address is not None:
        ep = replace(ep, address=address)
    opts = {**ep.options, **_parse_kv(options)}
    if ep.is_mock and "seed" not in opts and seed is not None:
        opts["seed"] = seed
    return replace(ep, options=opts)


def _lexicon(args, cfg: GlobalConfig, required: bool = False):
    path = getattr(args, "lexicon", None) or cfg.lexicon
    if path is None:
        if required:
            raise InputError("a keyword lexicon is required (--lexicon or config 'lexicon')")
        return None
    return load_lexicon(path, cfg.policy)


def _dictionary(args, cfg: GlobalConfig) -> frozenset:
    path = getattr(args, "dictionary", None) or cfg.dictionary
    return load_dictionary(path) if path else frozenset()


def _segmenters(args, cfg: GlobalConfig) -> tuple[SegmenterId, ...]:
    if not args.segmenter:
        return cfg.segmenters
    try:
        return tuple(SegmenterId.from_dict(json.loads(s) if s.startswith("{") else {"kind": s, "name": s})
                     for s in args.segmenter)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad --segmenter: {exc}") from None


def _generation_config(cfg: GlobalConfig, seed: int, **overrides) -> GenerationConfig:
    gen = {**cfg.generation, **{k: v for k, v in overrides.items() if v is not None}}
    gen.setdefault("target_count", 1)
    return GenerationConfig(seed=seed, **gen)


# ------------------------------------------------------------------ eval

def _read_pairs(path: Path) -> list[tuple[str, str, str]]:
    pairs = []
    text = path.read_text(encoding="utf-8")
    if not text:
        return pairs
    for lineno, line in enumerate(text.removesuffix("\n").split("\n"), start=1):
        ref, sep, hyp = line.partition("\t")
        if not sep:
            raise InputError(f"{path}:{lineno}: expected 'reference<TAB>hypothesis'")
        if not ref.strip():
            raise EmptyReferenceError(f"{path}:{lineno}: empty reference")
        pairs.append((f"line-{lineno}", ref, hyp))
    return pairs


def _manifest_pairs(ref_path: Path, hyp_path: Path | None) -> list[tuple[str, str, str]]:
    ref = read_manifest(ref_path)
    if hyp_path is None:
        missing = [r.id for r in ref.records if r.scores is None]
        if missing:
            raise InputError(f"{ref_path}: records without scores.hyp: {missing[:5]}")
        return [(r.id, r.text, r.scores.hyp) for r in ref.records]
    hyp = read_manifest(hyp_path).by_id()
    missing = [r.id for r in ref.records if r.id not in hyp]
    if missing:
        raise InputError(f"{hyp_path}: no hypothesis for ids {missing[:5]}")
    return [(r.id, r.text, hyp[r.id].text) for r in ref.records]


def cmd_eval(args, cfg: GlobalConfig) -> dict:
    if args.pairs:
        pairs = _read_pairs(Path(args.pairs))
    elif args.ref_manifest:
        pairs = _manifest_pairs(Path(args.ref_manifest), Path(args.hyp_manifest) if args.hyp_manifest else None)
    else:
        raise InputError("give --pairs or --ref-manifest")
    if not pairs:
        raise EmptyInputError("no ref/hyp pairs to evaluate")
    lex = None if args.no_ier else _lexicon(args, cfg, required=args.ier)
    segs = _segmenters(args, cfg) if lex is not None else ()
    dictionary = _dictionary(args, cfg)
    cjk_dict = dictionary if args.cjk_words else None

    samples, reports = [], []
    for sid, ref, hyp in pairs:
        try:
            rep = evaluate(ref, hyp, lex, segs, dictionary, cfg.policy, cjk_dict)
        except EmptyReferenceError:
            raise EmptyReferenceError(f"sample {sid}: reference is empty after normalization") from None
        reports.append(rep)
        samples.append({"id": sid, **rep.to_dict()})
    agg = aggregate(reports)
    doc = {"samples": samples, "aggregate": agg.to_dict()}
    text = json.dumps(doc, ensure_ascii=False, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.audit:
        with open(args.audit, "w", encoding="utf-8") as fh:
            for sid, ref, hyp in pairs:
                trace = audit_trace(ref, hyp, lex, segs, dictionary, cfg.policy)
                fh.write(json.dumps({"id": sid, **trace}, ensure_ascii=False) + "\n")
    return {
        "samples": len(samples),
        "cer": agg.cer.value,
        "wer": agg.wer.value,
        "ier": agg.ier,
        "out": args.out,
    }


# ------------------------------------------------------------- datagen

def _read_real(path: Path) -> DatasetManifest:
    if path.suffix == ".txt":
        recs = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").split("\n"), start=1):
            if line.strip():
                recs.append(SampleRecord(f"real-{lineno:06d}", "", line.strip(), 1.0, "real"))
        return DatasetManifest(tuple(recs))
    return read_manifest(path)


def cmd_generate(args, cfg: GlobalConfig) -> dict:
    seed = _seed(args, cfg, required=True)
    gcfg = _generation_config(cfg, seed, target_count=args.count, s=args.s, i=args.i)
    real = _read_real(Path(args.real))
    lex = _lexicon(args, cfg, required=True)
    client = TextGenClient(_endpoint(cfg, "textgen", args.textgen, args.option, seed))
    name = args.name or Path(args.out).stem
    labels = generate_label_set(real, lex, gcfg, client, name)
    write_labels(labels, args.out)
    return {"labels": len(labels), "seed": seed, "out": args.out}


def cmd_synthesize(args, cfg: GlobalConfig) -> dict:
    seed = _seed(args, cfg, required=True)
    labels = read_labels(args.labels)
    if not labels:
        raise EmptyInputError(f"{args.labels}: no labels")
    gcfg = _generation_config(
        cfg, seed, target_count=len(labels), style_tags=args.style_tag or None, corpus=args.corpus
    )
    client = SpeechSynthClient(_endpoint(cfg, "synth", args.synth, args.option, seed))
    out_dir = Path(args.out_dir)
    name = args.name or Path(args.labels).stem
    meta = ManifestMetadata(name=name, created=_created(), seed=seed)
    manifest, rejected = synthesize_labels(labels, gcfg, client, out_dir, name, _jobs(args, cfg), meta)
    path = out_dir / f"{name}.jsonl"
    write_manifest(manifest, path)
    return {"records": len(manifest), "rejected": len(rejected), "out": str(path), **_stats(manifest)}


def _stats(m: DatasetManifest) -> dict:
    st = duration_stats(m)
    return {"mean_s": st["mean_s"], "std_s": st["std_s"], "total_min": st["total_min"]}


# ---------------------------------------------------------- filtering

def cmd_score(args, cfg: GlobalConfig) -> dict:
    src = Path(args.manifest)
    manifest = read_manifest(src)
    client = RecognizerClient(_endpoint(cfg, "recognizer", args.recognizer, args.option, _seed(args, cfg)))
    scored = score_dataset(manifest, client, src.parent, _jobs(args, cfg))
    out = Path(args.out)
    result = rebase_audio(scored_manifest(scored, manifest), src.parent, out.parent)
    write_manifest(result, out)
    n = sum(s.scored for s in scored)
    return {"scored": n, "unscored": len(scored) - n, "out": str(out)}


def cmd_filter(args, cfg: GlobalConfig) -> dict:
    src = Path(args.manifest)
    manifest = read_manifest(src)
    fcfg = FilterConfig(args.tau if args.tau is not None else cfg.tau)
    kept, rejected, report = filter_dataset(samples_from_manifest(manifest), fcfg, manifest.metadata)
    write_manifest(rebase_audio(kept, src.parent, Path(args.kept).parent), args.kept)
    if args.rejected:
        write_manifest(rebase_audio(rejected, src.parent, Path(args.rejected).parent), args.rejected)
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict(), ensure_ascii=False, indent=2) + "\n",
                                     encoding="utf-8")
    return {"tau": fcfg.tau, "kept": report.kept, "rejected": report.rejected, "unscored": report.unscored,
            "out": args.kept}


def cmd_sweep(args, cfg: GlobalConfig) -> dict:
    if args.grid:
        thresholds = threshold_grid(*args.grid)
    elif args.thresholds:
        try:
            thresholds = [float(t) for t in args.thresholds.split(",")]
        except ValueError:
            raise InputError(f"bad --thresholds {args.thresholds!r}") from None
    else:
        raise InputError("give --grid START STOP STEP or --thresholds a,b,c")
    table = sweep(samples_from_manifest(read_manifest(args.manifest)), thresholds)
    write_sweep(table, args.csv, args.json)
    return {"thresholds": len(table), "kept": [n for _, n in table], "out": args.csv}


# ------------------------------------------------------------ manifests

def cmd_merge(args, cfg: GlobalConfig) -> dict:
    out = Path(args.out)
    parts = [rebase_audio(read_manifest(p), Path(p).parent, out.parent) for p in args.manifests]
    merged = parts[0]
    for part in parts[1:]:
        merged = merge(merged, part, args.name)
    if args.name is not None:
        merged = replace(merged, metadata=replace(merged.metadata, name=args.name))
    write_manifest(merged, out)
    return {"records": len(merged), "parts": [len(p) for p in parts], "out": str(out)}


def cmd_export(args, cfg: GlobalConfig) -> dict:
    src = Path(args.manifest)
    res = export_trainer(read_manifest(src), args.out_dir, _parse_kv(args.set), src.parent)
    return {"records": sum(1 for _ in open(res.manifest_path, encoding="utf-8")),
            "manifest": str(res.manifest_path), "config": str(res.config_path)}


def cmd_lexicon_stats(args, cfg: GlobalConfig) -> dict:
    lex = _lexicon(args, cfg, required=True)
    counts = {cat.value: n for cat, n in stats(lex).items()}
    return {"total": len(lex), "categories": counts}


def cmd_make_lexicon(args, cfg: GlobalConfig) -> dict:
    lex = synthesize_reference_lexicon(seed=args.seed if args.seed is not None else (cfg.seed or 0))
    save_lexicon(lex, args.out)
    return {"total": len(lex), "out": args.out}


# --------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="run seed (overrides config)")
    common.add_argument("--jobs", type=int, help="worker threads for synthesis/scoring (default 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="weakasr", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, parents=[common], help=help)
        sp.set_defaults(func=fn)
        return sp

    sp = add("eval", cmd_eval, "score ref/hyp pairs (CER, WER, split rates, IER)")
    sp.add_argument("--pairs", help="TSV file, one 'reference<TAB>hypothesis' per line")
    sp.add_argument("--ref-manifest", help="reference manifest (uses scores.hyp unless --hyp-manifest)")
    sp.add_argument("--hyp-manifest", help="manifest whose text is the hypothesis, joined on id")
    sp.add_argument("--lexicon")
    sp.add_argument("--dictionary", help="word list for segmentation, one word per line")
    sp.add_argument("--segmenter", action="append",
                    help="builtin-fmm, builtin-bmm or a JSON segmenter spec; repeatable")
    group = sp.add_mutually_exclusive_group()
    group.add_argument("--ier", action="store_true", help="require IER (fails without a lexicon)")
    group.add_argument("--no-ier", action="store_true")
    sp.add_argument("--cjk-words", action="store_true", help="WER over dictionary words instead of characters")
    sp.add_argument("--out", help="report JSON path")
    sp.add_argument("--audit", help="per-sample alignment/unit trace JSONL path")

    sp = add("generate", cmd_generate, "generate synthetic text labels")
    sp.add_argument("--real", required=True, help="real-data manifest, or a .txt file of sentences")
    sp.add_argument("--lexicon")
    sp.add_argument("--count", type=int, help="number of labels (N_s)")
    sp.add_argument("--s", type=int, help="example sentences per prompt")
    sp.add_argument("--i", type=int, help="keywords per category per prompt")
    sp.add_argument("--textgen", help="text generator address (default from config, else mock:)")
    sp.add_argument("--option", action="append", help="endpoint option KEY=VALUE")
    sp.add_argument("--name")
    sp.add_argument("--out", required=True, help="labels JSONL path")

    sp = add("synthesize", cmd_synthesize, "synthesize audio for labels")
    sp.add_argument("--labels", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--name")
    sp.add_argument("--style-tag", action="append")
    sp.add_argument("--corpus")
    sp.add_argument("--synth", help="synthesizer address")
    sp.add_argument("--option", action="append", help="endpoint option KEY=VALUE")

    sp = add("score", cmd_score, "transcribe audio and attach CER scores")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--recognizer", help="recognizer address")
    sp.add_argument("--option", action="append", help="endpoint option KEY=VALUE")

    sp = add("filter", cmd_filter, "keep samples with CER <= tau")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--kept", required=True)
    sp.add_argument("--rejected")
    sp.add_argument("--report")

    sp = add("sweep", cmd_sweep, "kept counts over a threshold grid")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--grid", nargs=3, type=float, metavar=("START", "STOP", "STEP"))
    sp.add_argument("--thresholds", help="comma-separated ascending thresholds")
    sp.add_argument("--csv", required=True)
    sp.add_argument("--json")

    sp = add("merge", cmd_merge, "merge manifests with disjoint ids")
    sp.add_argument("manifests", nargs="+")
    sp.add_argument("--out", required=True)
    sp.add_argument("--name")

    sp = add("export", cmd_export, "write a trainer manifest and config")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--set", action="append", help="trainer option KEY=VALUE")

    sp = add("lexicon-stats", cmd_lexicon_stats, "keyword counts per category")
    sp.add_argument("--lexicon")

    sp = add("make-lexicon", cmd_make_lexicon, "write a lexicon fixture with the published category sizes")
    sp.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        summary = args.func(args, cfg)
    except (InputError, OSError) as exc:
        print(f"weakasr {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except WeakASRError as exc:
        print(f"weakasr {args.command}: failed: {exc}", file=sys.stderr)
        return 1
    except Exception:
        log.exception("internal error in %s", args.command)
        return 1
    _summary(command=args.command, ok=True, **summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
