"""Command-line entry point: ``voxeval <group> [<action>] [options]``.

Every subcommand takes ``--seed``, ``--threads``, ``--config`` (a key=value
file whose keys are option names) and ``--report`` (a JSON file listing every
resolved option plus the command's results). Command-line flags override the
config file; environment variables are never read.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import align, data, multitask, probe, report, speaker_eval, synth
from .errors import VoxEvalError

log = logging.getLogger("voxeval")

# these print their own one-line summary instead of the JSON result
_SUMMARY_GROUPS = ("probe", "sv", "diarize", "zsc", "report")


class UsageError(Exception):
    pass


# shared helpers

def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _load_records(args, path=None):
    recs = data.read_archive(path or args.archive)
    if getattr(args, "encoder", None):
        recs = multitask.encode_records(recs, multitask.load_encoder(args.encoder))
    return recs


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _pooled_pairs(args):
    """Pooled voice vectors aligned with caption token lists (by utt_id)."""
    recs = data.index_archive(_load_records(args))
    caps = [c for c in synth.read_captions(args.captions) if c["utt_id"] in recs]
    if not caps:
        raise VoxEvalError("no caption matches an utterance in the archive")
    voice = np.stack([data.mean_pool(recs[c["utt_id"]]) for c in caps])
    return voice, [c["tokens"] for c in caps], caps


# synth

def cmd_synth_gen(args):
    cfg = synth.SynthConfig(
        n_speakers=args.n_speakers, utts_per_speaker=args.utts_per_speaker, dim=args.dim,
        frames_per_utt=args.frames_per_utt, speaker_scale=args.speaker_scale,
        attribute_scale=args.attribute_scale, noise_sigma=args.noise_sigma, seed=args.seed,
        frame_rate_hz=args.frame_rate, emotion_set=args.emotion_set,
        caption_speaker=not args.no_caption_speaker)
    corpus = synth.generate_corpus(cfg)
    out = _out_dir(args.out)
    paths = synth.write_corpus(corpus, out)
    result = {"utterances": len(corpus.records), "trials": len(corpus.trials),
              "files": sorted(p.name for p in paths.values())}
    if args.diar_sessions > 0:
        sessions, refs = synth.generate_diar_sessions(
            cfg, args.diar_sessions, args.speakers_per_session, (args.seg_min, args.seg_max),
            args.segments_per_session)
        data.write_archive(sessions, out / "diar_sessions.audv")
        speaker_eval.write_rttm(refs, out / "diar_ref.rttm")
        result["sessions"] = len(sessions)
        result["files"] = sorted(result["files"] + ["diar_ref.rttm", "diar_sessions.audv"])
    return result


# pooling

def cmd_pool(args):
    recs = _load_records(args)
    pooled = data.pool_archive(recs)
    data.save_tensors(args.out, "pooled", {"embeddings": pooled},
                      {"utt_ids": [r.utt_id for r in recs]})
    return {"utterances": len(recs), "dim": int(pooled.shape[1])}


# probing

def cmd_probe_train(args):
    recs = _load_records(args)
    manifest = data.load_manifest(args.manifest)
    res = probe.probe_train(recs, manifest, args.task, epochs=args.epochs, lr=args.lr,
                            batch_size=args.batch_size, seed=args.seed)
    res.head.save(args.out)
    return {"task": args.task, "classes": len(res.head.classes), "final_loss": res.loss_trace[-1]}


def cmd_probe_eval(args):
    recs = _load_records(args)
    head = probe.ProbeHead.load(args.head)
    acc = probe.probe_eval(recs, data.load_manifest(args.manifest), head)
    print(f"accuracy {acc:.1f}")
    return {"task": head.task, "accuracy": acc}


# speaker verification

def cmd_sv_score(args):
    recs = data.index_archive(_load_records(args))
    scored = speaker_eval.score_trials(recs, speaker_eval.read_trials(args.trials),
                                       threads=args.threads)
    speaker_eval.write_scores(scored, args.out)
    return {"trials": len(scored)}


def cmd_sv_eer(args):
    scores, labels = speaker_eval.read_scores(args.scores)
    eer, thr = speaker_eval.compute_eer(scores, labels)
    print(f"EER {eer:.2f}")
    return {"eer": eer, "threshold": thr, "trials": int(len(scores))}


# diarization

def cmd_diarize_run(args):
    sessions = _load_records(args)
    params = speaker_eval.ClusteringParams(args.threshold, args.min_cluster_size)
    run = lambda sess: speaker_eval.diarize(sess, args.window, args.hop, params)  # noqa: E731
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as ex:
            per_session = list(ex.map(run, sessions))  # map keeps input order
    else:
        per_session = [run(sess) for sess in sessions]
    segs: List[speaker_eval.DiarSegment] = [seg for ss in per_session for seg in ss]
    speaker_eval.write_rttm(segs, args.out)
    return {"sessions": len(sessions), "segments": len(segs)}


def cmd_diarize_score(args):
    ref = speaker_eval.group_by_session(speaker_eval.read_rttm(args.ref))
    hyp = speaker_eval.group_by_session(speaker_eval.read_rttm(args.hyp))
    totals = {"miss": 0.0, "fa": 0.0, "confusion": 0.0, "scored_time": 0.0}
    for sid in sorted(ref):
        r = speaker_eval.compute_der(ref[sid], hyp.get(sid, []), args.collar)
        t = r["scored_time"]
        totals["scored_time"] += t
        for k in ("miss", "fa", "confusion"):
            totals[k] += r[k] * t / 100.0  # back to seconds before pooling
    if totals["scored_time"] <= 0:
        raise VoxEvalError("no scored reference speech")
    t = totals["scored_time"]
    out = {"der": 100.0 * (totals["miss"] + totals["fa"] + totals["confusion"]) / t,
           "miss": 100.0 * totals["miss"] / t, "fa": 100.0 * totals["fa"] / t,
           "confusion": 100.0 * totals["confusion"] / t, "sessions": len(ref)}
    print(f"DER {out['der']:.2f}")
    return out


def cmd_diarize_count(args):
    ref = speaker_eval.speaker_counts(speaker_eval.read_rttm(args.ref))
    hyp = speaker_eval.speaker_counts(speaker_eval.read_rttm(args.hyp))
    mae = speaker_eval.counting_mae(ref, hyp)
    print(f"MAE {mae:.3f}")
    return {"mae": mae, "sessions": len(ref)}


# contrastive alignment

def cmd_clap_train(args):
    voice, tokens, _ = _pooled_pairs(args)
    cfg = align.ClapConfig(epochs=args.epochs, lr=args.lr, batch_size=args.batch_size,
                           seed=args.seed, proj_dim=args.proj_dim, embed_dim=args.embed_dim,
                           init_std=args.init_std, learn_tau=not args.fixed_tau)
    extra = [t for p in align.DEFAULT_TEMPLATES for t in p if t != "{}"]
    model, trace = align.clap_train(voice, tokens, cfg, extra_tokens=extra)
    model.save(args.out)
    return {"pairs": len(tokens), "initial_loss": trace[0], "final_loss": trace[-1],
            "tau": model.tau}


def cmd_retrieval_eval(args):
    voice, tokens, _ = _pooled_pairs(args)
    model = align.ClapModel.load(args.model)
    ks = tuple(int(k) for k in args.ks.split(","))
    res = align.retrieval_eval(model.embed_voice(voice), model.embed_text(tokens), ks=ks,
                               subset_size=args.subset_size, n_subsets=args.n_subsets,
                               seed=args.seed)
    return {d: {str(k): v for k, v in r.items()} for d, r in res.items()}


def cmd_zsc_eval(args):
    recs = _load_records(args)
    manifest = [m for m in data.load_manifest(args.manifest) if m.label(args.task) is not None]
    by_id = data.index_archive(recs)
    manifest = [m for m in manifest if m.utt_id in by_id]
    if not manifest:
        raise VoxEvalError(f"no utterances labeled for task {args.task!r}")
    model = align.ClapModel.load(args.model)
    classes = data.label_space(args.task, manifest)
    classes, Z = align.prompt_ensemble(model.text_encoder, align.expand_templates(classes))
    V = model.embed_voice(np.stack([data.mean_pool(by_id[m.utt_id]) for m in manifest]))
    pred = align.zsc_predict(V, Z)
    truth = np.array([classes.index(m.label(args.task)) for m in manifest])
    acc = 100.0 * float(np.mean(pred == truth))
    print(f"accuracy {acc:.1f}")
    return {"task": args.task, "accuracy": acc, "classes": classes}


# multi-task training and adaptor

def cmd_multitask_train(args):
    recs = data.read_archive(args.archive)
    manifest = data.load_manifest(args.manifest)
    weights = {t: 1.0 for t in data.TASKS}
    for item in filter(None, args.weights.split(",")):
        task, _, w = item.partition("=")
        if task not in weights:
            raise VoxEvalError(f"unknown task {task!r} in --weights")
        weights[task] = float(w)
    cfg = multitask.MultitaskConfig(
        epochs=args.epochs, lr=args.lr, batch_size=args.batch_size, hidden=args.hidden,
        out_dim=args.out_dim, downsample=args.downsample, weights=weights,
        sid_loss=args.sid_loss, margin=args.margin, scale=args.scale,
        ge2e_speakers=args.ge2e_speakers, ge2e_utts=args.ge2e_utts,
        pseudo_labels=args.pseudo_labels, confidence_threshold=args.confidence_threshold,
        refresh_every=args.refresh_every, seed=args.seed)
    res = multitask.multitask_train(recs, manifest, cfg)
    res.save(args.out)
    if args.trace:
        multitask.write_trace_csv(res.trace, args.trace)
    return {"steps": len(res.trace), "final_loss": res.trace[-1]["loss"] if res.trace else None,
            "train_accuracy": multitask.training_accuracy(res, recs, manifest)}


def cmd_adaptor_run(args):
    recs = _load_records(args)
    if not recs:
        raise VoxEvalError("empty archive")
    ad = multitask.Adaptor.load(args.adaptor) if args.adaptor else multitask.Adaptor.init(
        recs[0].dim, args.hidden, args.llm_dim, args.factor, args.mode, args.seed)
    outs = [data.FrameEmbeddings(r.utt_id, multitask.adaptor_forward(r, ad),
                                 frame_rate_hz=r.frame_rate_hz / ad.factor) for r in recs]
    data.write_archive(outs, args.out)
    if args.save_adaptor:
        ad.save(args.save_adaptor)
    return {"utterances": len(outs), "llm_dim": int(ad.W2.shape[1]),
            "frame_rate_hz": recs[0].frame_rate_hz / ad.factor}


# report

def cmd_report_lp_avg(args):
    table = report.read_table_csv(args.table, default_direction=report.HIGHER)
    avgs = report.row_averages(table)
    for s in table.systems:
        v = avgs[s]
        print(f"{s}\t{'--' if v is None else f'{v:.1f}'}")
    return {"lp_avg": avgs}


def cmd_report_zs_avg(args):
    table = report.read_table_csv(args.table, default_direction=report.LOWER)
    avgs = report.zs_avg(table)
    for s in table.systems:
        v = avgs[s]
        print(f"{s}\t{'--' if v is None else f'{report.round_half_away(v):.1f}'}")
    return {"zs_avg": avgs}


def cmd_report_render(args):
    sections = []
    for path in args.table:
        t = report.read_table_csv(path, default_direction=args.direction, name=Path(path).stem)
        sections.append(report.ReportSection(t, report.default_aggregates(t)))
    js, md = report.render_report(sections, {"tables": [Path(p).name for p in args.table]})
    out = _out_dir(args.out)
    (out / "report.json").write_text(js, encoding="utf-8")
    (out / "report.md").write_text(md, encoding="utf-8")
    return {"tables": len(sections), "files": ["report.json", "report.md"]}


# parser

class _HelpFormatter(argparse.HelpFormatter):
    """Appends the default to option help unless it is None."""

    def _get_help_string(self, action):
        h = action.help or ""
        if (action.option_strings and action.default not in (None, argparse.SUPPRESS)
                and "%(default)" not in h):
            h += " (default: %(default)s)"
        return h


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("common")
    g.add_argument("--seed", type=int, default=0, help="root seed for all randomness (default: %(default)s)")
    g.add_argument("--threads", type=int, default=1, help="worker cap (default: %(default)s)")
    g.add_argument("--config", help="key=value file supplying option defaults")
    g.add_argument("--report", help="write resolved options and results as JSON here")


def _req(p, *flags, **kw):
    """An option that must be present on the command line or in --config."""
    kw.setdefault("help", "")
    kw["help"] = (kw["help"] + " (required)").strip()
    act = p.add_argument(*flags, **kw)
    p._voxeval_required = getattr(p, "_voxeval_required", []) + [act]
    return act


def build_parser():
    fmt = _HelpFormatter
    parser = argparse.ArgumentParser(
        prog="voxeval", description="Voice-representation evaluation and toy-scale training.")
    groups = parser.add_subparsers(dest="group", metavar="COMMAND")
    groups.required = True
    leaves: Dict[str, argparse.ArgumentParser] = {}

    def leaf(sub, name: str, fn: Callable, key: str, help_: str):
        p = sub.add_parser(name, help=help_, description=help_, formatter_class=fmt)
        _common(p)
        p.set_defaults(func=fn, command=key)
        leaves[key] = p
        return p

    def group(name: str, help_: str):
        g = groups.add_parser(name, help=help_)
        s = g.add_subparsers(dest="action", metavar="ACTION")
        s.required = True
        return s

    # synth
    p = leaf(group("synth", "synthetic corpora"), "gen", cmd_synth_gen, "synth gen",
             "generate a seeded synthetic corpus")
    _req(p, "-o", "--out", help="output directory")
    p.add_argument("--n-speakers", type=int, default=20)
    p.add_argument("--utts-per-speaker", type=int, default=50)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--frames-per-utt", type=int, default=20)
    p.add_argument("--speaker-scale", type=float, default=3.0)
    p.add_argument("--attribute-scale", type=float, default=1.0)
    p.add_argument("--noise-sigma", type=float, default=0.5)
    p.add_argument("--frame-rate", type=float, default=25.0)
    p.add_argument("--emotion-set", choices=sorted(data.EMOTION_SETS), default="crema6")
    p.add_argument("--no-caption-speaker", action="store_true",
                   help="leave the speaker id out of captions")
    p.add_argument("--diar-sessions", type=int, default=0, help="also write this many diarization sessions")
    p.add_argument("--speakers-per-session", type=int, default=2)
    p.add_argument("--seg-min", type=float, default=2.0, help="shortest segment, seconds")
    p.add_argument("--seg-max", type=float, default=4.0, help="longest segment, seconds")
    p.add_argument("--segments-per-session", type=int, default=4)

    # pool
    p = leaf(groups, "pool", cmd_pool, "pool", "mean-pool every utterance of an archive")
    _req(p, "--archive")
    _req(p, "-o", "--out", help="pooled tensor file")
    p.add_argument("--encoder", help="multitask model whose encoder is applied first")

    # probe
    s = group("probe", "linear probing")
    p = leaf(s, "train", cmd_probe_train, "probe train", "train a linear probe head")
    _req(p, "--archive")
    _req(p, "--manifest")
    _req(p, "-o", "--out", help="head file")
    p.add_argument("--task", choices=data.TASKS, default="sid")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--encoder")
    p = leaf(s, "eval", cmd_probe_eval, "probe eval", "accuracy of a trained probe head")
    _req(p, "--archive")
    _req(p, "--manifest")
    _req(p, "--head")
    p.add_argument("--encoder")

    # sv
    s = group("sv", "speaker verification")
    p = leaf(s, "score", cmd_sv_score, "sv score", "cosine-score a trial list")
    _req(p, "--archive")
    _req(p, "--trials")
    _req(p, "-o", "--out", help="score file")
    p.add_argument("--encoder")
    p = leaf(s, "eer", cmd_sv_eer, "sv eer", "equal error rate of a score file")
    _req(p, "--scores")

    # diarize
    s = group("diarize", "speaker diarization and counting")
    p = leaf(s, "run", cmd_diarize_run, "diarize run", "window, cluster and label sessions")
    _req(p, "--archive", help="session archive")
    _req(p, "-o", "--out", help="hypothesis RTTM")
    p.add_argument("--window", type=float, default=0.5, help="window length, seconds")
    p.add_argument("--hop", type=float, default=0.25, help="window hop, seconds")
    p.add_argument("--threshold", type=float, default=0.3, help="cosine-distance stopping threshold")
    p.add_argument("--min-cluster-size", type=int, default=3)
    p.add_argument("--encoder")
    p = leaf(s, "score", cmd_diarize_score, "diarize score", "DER of a hypothesis RTTM")
    _req(p, "--ref")
    _req(p, "--hyp")
    p.add_argument("--collar", type=float, default=0.0, help="collar, seconds")
    p = leaf(s, "count", cmd_diarize_count, "diarize count", "speaker-counting MAE")
    _req(p, "--ref")
    _req(p, "--hyp")

    # clap / retrieval / zsc
    p = leaf(group("clap", "contrastive voice-text alignment"), "train", cmd_clap_train,
             "clap train", "train voice and text projections")
    _req(p, "--archive")
    _req(p, "--captions")
    _req(p, "-o", "--out", help="model file")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--proj-dim", type=int, default=16)
    p.add_argument("--embed-dim", type=int, default=16)
    p.add_argument("--init-std", type=float, default=0.02)
    p.add_argument("--fixed-tau", action="store_true", help="freeze the temperature")
    p.add_argument("--encoder")
    p = leaf(group("retrieval", "cross-modal retrieval"), "eval", cmd_retrieval_eval,
             "retrieval eval", "recall@k in both directions")
    _req(p, "--archive")
    _req(p, "--captions")
    _req(p, "--model")
    p.add_argument("--ks", default="1,5,10")
    p.add_argument("--subset-size", type=int, default=568)
    p.add_argument("--n-subsets", type=int, default=5)
    p.add_argument("--encoder")
    p = leaf(group("zsc", "zero-shot classification"), "eval", cmd_zsc_eval, "zsc eval",
             "prompt-ensemble zero-shot accuracy")
    _req(p, "--archive")
    _req(p, "--manifest")
    _req(p, "--model")
    p.add_argument("--task", choices=[t for t in data.TASKS if t != "sid"], default="gender")
    p.add_argument("--encoder")

    # multitask / adaptor
    p = leaf(group("multitask", "multi-task encoder training"), "train", cmd_multitask_train,
             "multitask train", "train the toy encoder with task heads")
    _req(p, "--archive")
    _req(p, "--manifest")
    _req(p, "-o", "--out", help="model file")
    p.add_argument("--trace", help="per-step loss CSV")
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--out-dim", type=int, default=None, help="encoder output width (default: input width)")
    p.add_argument("--downsample", type=int, default=1)
    p.add_argument("--weights", default="", help="task=weight list, e.g. sid=1,emotion=0.5 (others 1)")
    p.add_argument("--sid-loss", choices=("ce", "margin", "ge2e"), default="ce")
    p.add_argument("--margin", type=float, default=0.2)
    p.add_argument("--scale", type=float, default=30.0)
    p.add_argument("--ge2e-speakers", type=int, default=8)
    p.add_argument("--ge2e-utts", type=int, default=4)
    p.add_argument("--pseudo-labels", action="store_true")
    p.add_argument("--confidence-threshold", type=float, default=0.9)
    p.add_argument("--refresh-every", type=int, default=0, help="steps between refreshes; 0 = every epoch")
    p = leaf(group("adaptor", "frame adaptor"), "run", cmd_adaptor_run, "adaptor run",
             "stack frames and map them through the adaptor MLP")
    _req(p, "--archive")
    _req(p, "-o", "--out", help="output archive")
    p.add_argument("--adaptor", help="saved adaptor; a seeded one is built when absent")
    p.add_argument("--save-adaptor")
    p.add_argument("--factor", type=int, default=4)
    p.add_argument("--mode", choices=("stack", "average"), default="stack")
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--llm-dim", type=int, default=32)
    p.add_argument("--encoder")

    # report
    s = group("report", "aggregate scores and reports")
    p = leaf(s, "lp-avg", cmd_report_lp_avg, "report lp-avg", "row means of an accuracy table")
    _req(p, "--table")
    p = leaf(s, "zs-avg", cmd_report_zs_avg, "report zs-avg", "min-max normalized score per row")
    _req(p, "--table")
    p = leaf(s, "render", cmd_report_render, "report render", "JSON and markdown report")
    _req(p, "--table", action="append", help="CSV table; repeatable")
    _req(p, "-o", "--out", help="output directory")
    p.add_argument("--direction", choices=(report.HIGHER, report.LOWER), default=report.HIGHER,
                   help="direction for tables without a #direction row")
    for p in leaves.values():
        for act in p._actions:
            if act.help is None and act.default not in (None, argparse.SUPPRESS):
                act.help = "(default: %(default)s)"
    return parser, leaves


# config handling

def _read_config(path) -> Dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}: line {lineno}: expected key=value")
            out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def _apply_config(p: argparse.ArgumentParser, values: Dict[str, str]) -> None:
    actions = {a.dest: a for a in p._actions}
    defaults = {}
    for key, raw in values.items():
        act = actions.get(key)
        if act is None or key in ("config", "help"):
            raise UsageError(f"config key {key!r} is not an option of this command")
        if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} needs a boolean")
            defaults[key] = raw.lower() in ("true", "1", "yes")
        elif isinstance(act, argparse._AppendAction):
            defaults[key] = [v.strip() for v in raw.split(",") if v.strip()]
        else:
            try:
                val = act.type(raw) if act.type else raw
            except ValueError:
                raise UsageError(f"config key {key!r}: bad value {raw!r}") from None
            if act.choices is not None and val not in act.choices:
                raise UsageError(f"config key {key!r}: {raw!r} not in {sorted(act.choices)}")
            defaults[key] = val
    p.set_defaults(**defaults)


def parse_args(argv: Sequence[str]):
    parser, leaves = build_parser()
    args = parser.parse_args(argv)
    leaf_parser = leaves[args.command]
    if args.config:
        try:
            _apply_config(leaf_parser, _read_config(args.config))
        except (UsageError, OSError) as exc:
            leaf_parser.error(str(exc))
        args = parser.parse_args(argv)
    missing = [a.option_strings[-1] for a in getattr(leaf_parser, "_voxeval_required", [])
               if getattr(args, a.dest) in (None, [])]
    if missing:
        leaf_parser.error("missing required option(s): " + ", ".join(missing))
    if args.threads < 1:
        leaf_parser.error("--threads must be >= 1")
    return args


def resolved_options(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "group", "action")}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        result = args.func(args)
        if args.report:
            doc = {"command": args.command, "options": resolved_options(args), "results": result}
            Path(args.report).write_text(_dump(doc), encoding="utf-8")
        elif result is not None and args.command.split()[0] not in _SUMMARY_GROUPS:
            sys.stdout.write(_dump(result))
    except (VoxEvalError, ValueError, OSError, KeyError) as exc:
        print(f"voxeval: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
