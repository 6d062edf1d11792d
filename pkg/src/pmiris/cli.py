"""Command-line entry point: ``pmiris <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import PipelineConfig, load_config, save_config

log = logging.getLogger("pmiris")

DEFAULT_SCHEDULE = {"10": 0.0, "24": 0.2, "96": 0.5, "240": 0.8}


def _common(p: argparse.ArgumentParser, manifest: bool = True):
    p.add_argument("--config", type=Path, help="pipeline config JSON")
    if manifest:
        p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--score-norm", choices=("on", "off"), help="override score normalization")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pmiris", description="Iris recognition with externally supplied masks.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _common(p, manifest=False)
    p.add_argument("--identities", type=int, default=20)
    p.add_argument("--sessions", type=int, default=5)
    p.add_argument("--schedule", help="JSON map hours -> decay level, or a path to one")
    p.add_argument("--session-hours", type=float, nargs="+")
    p.add_argument("--no-fine", action="store_true", help="do not write fine masks")

    p = sub.add_parser("segment", help="clean masks and fit boundary circles")
    _common(p)
    p.add_argument("--debug-fit", action="store_true", help="write Hough candidate diagnostics")

    p = sub.add_parser("encode", help="compute iris codes")
    _common(p)
    p.add_argument("--segmentation", type=Path, help="output of 'segment' (default: segment in memory)")

    p = sub.add_parser("match", help="score all pairs of codes, or one pair")
    _common(p, manifest=False)
    p.add_argument("--manifest", type=Path)
    p.add_argument("--codes", type=Path, help="output of 'encode' (all-pairs mode)")
    p.add_argument("--pair", type=Path, nargs=2, metavar=("A.irc", "B.irc"))

    p = sub.add_parser("evaluate", help="metrics report from scores, or end to end")
    _common(p)
    p.add_argument("--scores", type=Path, help="scores.csv from 'match' (default: run the pipeline)")
    p.add_argument("--external", type=Path, action="append", default=[],
                   help="external sample_a,sample_b,score CSV (repeatable)")
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("import-scores", help="label an external score CSV against a manifest")
    _common(p)
    p.add_argument("scores", type=Path)
    return ap


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if getattr(args, "score_norm", None):
        cfg = cfg.with_overrides(score_norm=args.score_norm == "on")
    return cfg.with_overrides(output_dir=str(args.out))


def _manifest(args):
    from .manifest import load_manifest

    m = load_manifest(args.manifest)
    for w in m.warnings:
        log.warning("%s", w)
    return m


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_synth(args) -> int:
    from .synth import gen_dataset

    if args.schedule is None:
        sched = DEFAULT_SCHEDULE
    elif Path(args.schedule).exists():
        sched = json.loads(Path(args.schedule).read_text())
    else:
        sched = json.loads(args.schedule)
    schedule = {float(k): float(v) for k, v in sched.items()}
    m = gen_dataset(args.out, args.identities, args.sessions, schedule, args.seed,
                    session_hours=args.session_hours, write_fine=not args.no_fine)
    _emit({"manifest": str(Path(args.out) / "manifest.csv"), "samples": len(m)})
    return 0


def cmd_segment(args) -> int:
    from .pipeline import run_segment, write_segment_stage

    cfg, m = _config(args), _manifest(args)
    res, skipped = run_segment(m, cfg, args.workers, debug=args.debug_fit)
    path = write_segment_stage(args.out, res, skipped, cfg)
    save_config(cfg, Path(args.out) / "config.json")
    _emit({"circles": str(path), "segmented": len(res), "skipped": [s.to_dict() for s in skipped]})
    return 0


def cmd_encode(args) -> int:
    from .pipeline import read_segment_stage, run_encode, run_segment, write_encode_stage

    cfg, m = _config(args), _manifest(args)
    if args.segmentation:
        res, skipped = read_segment_stage(args.segmentation, m, cfg)
    else:
        res, skipped = run_segment(m, cfg, args.workers)
    codes = run_encode(m, res, cfg, args.workers)
    path = write_encode_stage(args.out, codes, skipped, cfg)
    _emit({"index": str(path), "encoded": len(codes), "skipped": [s.to_dict() for s in skipped]})
    return 0


def cmd_match(args) -> int:
    from .encoding import read_code
    from .evaluation import ComparisonRow, pair_label, write_score_csv
    from .matching import match_codes
    from .pipeline import StageError, read_encode_stage, run_match, write_match_stage

    cfg = _config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    if args.pair:
        gc, pw = cfg.bank.grid_cols, cfg.bank.polar_width
        a, b = (read_code(p, gc, pw) for p in args.pair)
        if args.manifest:
            ids = _manifest(args).by_id()
            label = pair_label(ids[a.sample_id], ids[b.sample_id])
        elif a.sample_id == b.sample_id:
            label = "genuine"
        else:
            raise StageError("--manifest is required to label a pair of different samples")
        res = match_codes(a, b, cfg.max_shift)
        path = write_score_csv([ComparisonRow(a.sample_id, b.sample_id, label, res)], args.out / "pair_scores.csv")
        _emit({"scores": str(path), "hd_raw": res.hd_raw, "best_shift": res.best_shift, "n": res.n})
        return 0
    if not args.manifest or not args.codes:
        raise StageError("all-pairs mode needs --manifest and --codes (or use --pair)")
    m = _manifest(args)
    codes, skipped = read_encode_stage(args.codes, cfg)
    rows, N = run_match(m, codes, cfg)
    path = write_match_stage(args.out, rows, N, skipped, cfg)
    _emit({"scores": str(path), "comparisons": len(rows), "N": N})
    return 0


def cmd_evaluate(args) -> int:
    from .evaluation import import_external_scores
    from .pipeline import read_match_stage, run_all, write_match_stage
    from .report import build_report, write_report

    cfg, m = _config(args), _manifest(args)
    if args.scores:
        rows, skipped = read_match_stage(args.scores, cfg)
    else:
        rows, N, _, skipped = run_all(m, cfg, args.workers)
        write_match_stage(args.out, rows, N, skipped, cfg)
    external = None
    if args.external:
        if len(args.external) > 1:
            raise ValueError("one external score file per report")
        external = import_external_scores(args.external[0], m)
    report, curves = build_report(m, rows, cfg, skipped, external)
    path = write_report(args.out, report, curves, plots=not args.no_plots)
    _emit({"report": str(path), "comparisons": report["internal"]["comparisons"],
           "skipped": len(report["samples"]["skipped"])})
    return 0


def cmd_import_scores(args) -> int:
    from .evaluation import import_external_scores, write_external_scoreset

    m = _manifest(args)
    sc = import_external_scores(args.scores, m)
    args.out.mkdir(parents=True, exist_ok=True)
    path = write_external_scoreset(sc, args.out / "external_scores.csv")
    _emit({"scores": str(path), **sc.counts()})
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "segment": cmd_segment,
    "encode": cmd_encode,
    "match": cmd_match,
    "evaluate": cmd_evaluate,
    "import-scores": cmd_import_scores,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 with usage on unknown commands
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes a JSON error
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        for attr in ("line", "sample_id"):
            if getattr(exc, attr, None) is not None:
                err[attr] = getattr(exc, attr)
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        if args.verbose:
            log.exception("stage failed")
        return 1


if __name__ == "__main__":
    sys.exit(main())
