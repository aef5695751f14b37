#!/usr/bin/env python3
"""
STTC-AF command-line interface.

Subcommands:
- analyze: per-event spectra, PEP bounds, union bound and design score
- search: rank label tables under the design rule
- simulate: Monte Carlo BER/FER sweep with a diversity fit
- list-codes: show the built-in codes
- replay: re-run a command from its manifest
- defaults: show or set user defaults

Every command that writes a CSV also writes ``<out>.manifest.json``.
Exit status is 2 for usage errors and 3 for numerical failures.
"""

import argparse
import math
import os
import sys
from typing import List, Optional

from sttcaf import __version__
from sttcaf.analysis import pep, score_code, score_max_len, spectra
from sttcaf.manifest import RunManifest, load_manifest, replay_params, write_manifest
from sttcaf.model import RelayLinkConfig
from sttcaf.preferences import DEFAULT_PREFS, load_prefs, set_pref
from sttcaf.search import (
    DEFAULT_BUDGET,
    SearchSpace,
    search_codes,
    write_catalogs,
    write_ranking_csv,
)
from sttcaf.sim import SimConfig, SimResult, run_point, sweep, sweep_trailer, write_sweep_csv
from sttcaf.trellis import (
    DEDUP_MODES,
    builtin_codes,
    default_max_len,
    enumerate_error_events,
    get_code,
)
from sttcaf.utils import format_db, format_number, write_csv

EXIT_USAGE = 2
EXIT_NUMERICAL = 3

DEFAULT_CODE = "qpsk4_m2_tarokh"
DEFAULT_ES_N0_DB = [0.0, 5.0, 10.0, 15.0, 20.0]
DEFAULT_SNR_DB = [8.0, 12.0, 16.0, 20.0, 24.0]


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="Master seed (default: from preferences)")
    common.add_argument("--out", help="Output CSV path")
    common.add_argument(
        "--antennas-rx",
        "-N",
        type=int,
        default=1,
        dest="N",
        help="Destination antennas N (default: 1)",
    )
    common.add_argument(
        "--max-event-len",
        type=int,
        help="Longest error event in branches (default: preferences, else set by M)",
    )
    common.add_argument(
        "--quiet", action="store_true", help="No progress bars or status lines"
    )
    return common


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments.

    Returns:
        Parsed arguments with ``command`` naming the subcommand
    """
    parser = argparse.ArgumentParser(
        prog="sttcaf",
        description="Space-time trellis codes for amplify-and-forward relay channels",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_parser()

    analyze = sub.add_parser("analyze", parents=[common], help="Analyze a code")
    analyze.add_argument("--code", default=DEFAULT_CODE, help="Built-in name or catalog file")
    analyze.add_argument(
        "--es-n0-db",
        type=float,
        nargs="+",
        default=DEFAULT_ES_N0_DB,
        help="E_s/N0 grid of the pairwise analysis in dB",
    )
    analyze.add_argument(
        "--frame-len",
        type=int,
        default=1,
        help="Event start positions per frame for the union bound (default: 1)",
    )
    analyze.add_argument(
        "--dedup", choices=DEDUP_MODES, default="gram", help="Event deduplication"
    )

    search = sub.add_parser("search", parents=[common], help="Search label tables")
    search.add_argument("--antennas-tx", "-M", type=int, default=2, dest="M")
    search.add_argument("--states", type=int, default=4)
    search.add_argument("--inputs", type=int, default=4)
    search.add_argument(
        "--mode",
        choices=["random", "exhaustive", "listed"],
        help="Candidate space (default: listed with --code, else random)",
    )
    search.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    search.add_argument(
        "--code",
        "--candidates",
        nargs="+",
        default=[],
        dest="candidates",
        help="Built-in names or catalog files scored in listed mode",
    )
    search.add_argument("--top-k", type=int, default=10)
    search.add_argument(
        "--no-first-row-identity", action="store_true", help="Let the 0/0 label vary"
    )
    search.add_argument(
        "--allow-duplicate-rows", action="store_true", help="Keep tables with equal rows"
    )
    search.add_argument("--catalog-dir", help="Where to write the ranked catalog files")

    simulate = sub.add_parser("simulate", parents=[common], help="Monte Carlo sweep")
    simulate.add_argument("--code", default=DEFAULT_CODE, help="Built-in name or catalog file")
    simulate.add_argument("--snr-db", type=float, nargs="+", default=DEFAULT_SNR_DB)
    simulate.add_argument("--frame-len", type=int, default=100)
    simulate.add_argument("--max-frames", type=int, default=100_000)
    simulate.add_argument("--target-frame-errors", type=int, default=100)
    simulate.add_argument(
        "--noise-model", choices=["exact_whitened", "paper_white"], default="exact_whitened"
    )
    simulate.add_argument("--alpha", type=float, default=1.0, help="Relay gain")
    simulate.add_argument(
        "--noiseless", action="store_true", help="Simulate a noiseless link"
    )

    sub.add_parser("list-codes", help="Show the built-in codes")

    replay = sub.add_parser("replay", help="Re-run a command from its manifest")
    replay.add_argument("manifest", help="Path to a .manifest.json file")
    replay.add_argument("--out", help="Write to this path instead of the recorded one")
    replay.add_argument("--quiet", action="store_true")

    defaults = sub.add_parser("defaults", help="Show or set user defaults")
    defaults.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", dest="assignments"
    )

    return parser.parse_args(argv)


def _default_event_len(args: argparse.Namespace) -> int:
    """Event length for the code at hand when no flag or preference sets one."""
    if args.command == "search":
        M = get_code(args.candidates[0]).M if args.candidates else args.M
        return score_max_len(M)
    return default_max_len(get_code(args.code).M)


def validate_args(args: argparse.Namespace) -> None:
    """Validate and complete parsed arguments in place.

    Raises:
        ValueError: If any argument is invalid
    """
    if args.command not in ("analyze", "search", "simulate"):
        return
    prefs = load_prefs()
    if args.seed is None:
        args.seed = int(prefs["seed"])
    if args.command == "search" and args.mode is None:
        args.mode = "listed" if args.candidates else "random"
    if args.max_event_len is None:
        stored = prefs["max_event_len"]
        args.max_event_len = _default_event_len(args) if stored is None else int(stored)
    if args.seed < 0:
        raise ValueError(f"Seed must be non-negative, but got {args.seed}")
    if args.N < 1:
        raise ValueError(f"Antennas at the destination must be at least 1, but got {args.N}")
    if args.max_event_len < 2:
        raise ValueError(f"max-event-len must be at least 2, but got {args.max_event_len}")

    if args.command == "analyze":
        if not args.es_n0_db or not all(math.isfinite(x) for x in args.es_n0_db):
            raise ValueError("E_s/N0 grid must hold finite values")
        if args.frame_len < 1:
            raise ValueError(f"frame-len must be at least 1, but got {args.frame_len}")
    elif args.command == "search":
        if args.budget < 1:
            raise ValueError(f"budget must be at least 1, but got {args.budget}")
        if args.top_k < 1:
            raise ValueError(f"top-k must be at least 1, but got {args.top_k}")
        if args.mode == "listed" and not args.candidates:
            raise ValueError("listed mode needs --candidates")
    elif args.command == "simulate":
        if args.max_frames < 1:
            raise ValueError(f"max-frames must be at least 1, but got {args.max_frames}")

    if args.out is None:
        label = os.path.splitext(os.path.basename(getattr(args, "code", "") or "search"))[0]
        args.out = os.path.join(prefs["out_dir"], f"{args.command}_{label}_N{args.N}.csv")


def _say(args: argparse.Namespace, message: str) -> None:
    if not getattr(args, "quiet", False):
        print(message)


def _record(args: argparse.Namespace) -> str:
    params = {k: v for k, v in vars(args).items() if k not in ("func",)}
    manifest = RunManifest(
        command=args.command, params=params, seed=args.seed, tool_version=__version__
    )
    return write_manifest(manifest, args.out)


def cmd_analyze(args: argparse.Namespace) -> None:
    code = get_code(args.code)
    events = enumerate_error_events(code, args.max_event_len, reference="all", dedup=args.dedup)
    if not events:
        raise ValueError(f"Code '{code.name}' has no error events up to length {args.max_event_len}")
    specs = spectra(events)
    grid = [10 ** (db / 10) for db in args.es_n0_db]
    labels = [format_db(db) for db in args.es_n0_db]

    header = ["event_id", "L", "count", "multiplicity"]
    header += [f"lambda_{i + 1}" for i in range(code.M)]
    header += ["rank"] + [f"craig@{x}dB" for x in labels] + [f"chernoff@{x}dB" for x in labels]
    rows = []
    union = [0.0] * len(grid)
    for i, (event, sp) in enumerate(zip(events, specs)):
        bounds = [pep(sp, args.N, es_n0) for es_n0 in grid]
        for k, b in enumerate(bounds):
            union[k] += event.multiplicity * b.craig
        rows.append(
            [i + 1, event.event_length, event.count, event.multiplicity]
            + list(sp.lambdas)
            + [sp.rank]
            + [b.craig for b in bounds]
            + [b.chernoff for b in bounds]
        )
    union = [args.frame_len * u for u in union]
    score = score_code(
        code, args.N, args.max_event_len, events=events if args.dedup == "gram" else None
    )

    summary = [
        f"code={code.name} M={code.M} N={args.N} max_event_len={args.max_event_len}",
        f"criterion={score.criterion}",
        f"min_rank={score.min_rank} diversity={score.diversity}",
        f"worst_metric={format_number(score.worst_metric)} "
        f"tiebreak={format_number(score.tiebreak)}",
    ]
    summary += [
        f"union_bound@{x}dB={format_number(u)}" for x, u in zip(labels, union)
    ]
    write_csv(args.out, header, rows, trailer=summary)
    _record(args)
    for line in summary:
        _say(args, line)
    _say(args, f"Wrote {len(rows)} events to {args.out}")


def cmd_search(args: argparse.Namespace) -> None:
    candidates = tuple(get_code(ref) for ref in args.candidates)
    M = candidates[0].M if args.mode == "listed" else args.M
    space = SearchSpace(
        M=M,
        num_states=args.states,
        num_inputs=args.inputs,
        mode=args.mode,
        budget=args.budget,
        first_row_identity=not args.no_first_row_identity,
        distinct_rows=not args.allow_duplicate_rows,
        candidates=candidates,
    )
    ranked = search_codes(
        space,
        args.N,
        args.max_event_len,
        seed=args.seed,
        top_k=args.top_k,
        progress=not args.quiet,
    )
    write_ranking_csv(ranked, args.out)
    catalog_dir = args.catalog_dir or os.path.splitext(args.out)[0] + "_codes"
    write_catalogs(ranked, catalog_dir)
    _record(args)
    for r in ranked:
        _say(
            args,
            f"{r.rank_position:>3}. {r.code.name}  min_rank={r.score.min_rank}  "
            f"{r.score.criterion}={format_number(r.score.worst_metric)}",
        )
    _say(args, f"Wrote ranking to {args.out} and catalogs to {catalog_dir}")


def cmd_simulate(args: argparse.Namespace) -> None:
    code = get_code(args.code)
    link = RelayLinkConfig(M=code.M, N=args.N, alpha=args.alpha)
    grid = [math.inf] if args.noiseless else args.snr_db
    cfg = SimConfig(
        code=code,
        link=link,
        frame_len=args.frame_len,
        snr_grid_db=tuple(grid),
        max_frames=args.max_frames,
        target_frame_errors=args.target_frame_errors,
        decoder_noise_model=args.noise_model,
        seed=args.seed,
        progress=not args.quiet,
    )
    if args.noiseless:
        result = SimResult(
            points=[run_point(cfg, math.inf)],
            fit_error="noiseless link",
            config=cfg,
        )
    else:
        result = sweep(cfg)
    write_sweep_csv(result, args.out)
    _record(args)
    for p in result.points:
        _say(
            args,
            f"{format_number(p.snr_db):>6} dB  frames={p.frames}  "
            f"ber={p.ber:.3e}  fer={p.fer:.3e}",
        )
    _say(args, sweep_trailer(result))
    _say(args, f"Wrote sweep to {args.out}")


def cmd_list_codes(args: argparse.Namespace) -> None:
    for name, code in builtin_codes().items():
        print(f"{name}  (M={code.M}, {code.num_states} states)")
        for line in code.table_text().splitlines():
            print(f"    {line}")


def cmd_replay(args: argparse.Namespace) -> None:
    manifest = load_manifest(args.manifest)
    if manifest.command not in COMMANDS or manifest.command in ("replay", "defaults"):
        raise ValueError(f"Manifest command '{manifest.command}' cannot be replayed")
    params = replay_params(manifest, args.out)
    if args.quiet:
        params["quiet"] = True
    replayed = argparse.Namespace(**params)
    COMMANDS[manifest.command](replayed)


def cmd_defaults(args: argparse.Namespace) -> None:
    for assignment in args.assignments:
        key, sep, value = assignment.partition("=")
        if not sep:
            raise ValueError(f"Expected KEY=VALUE, but got '{assignment}'")
        set_pref(key.strip(), value.strip())
    prefs = load_prefs()
    for key in DEFAULT_PREFS:
        value = prefs[key]
        print(f"{key} = {'auto' if value is None else value}")


COMMANDS = {
    "analyze": cmd_analyze,
    "search": cmd_search,
    "simulate": cmd_simulate,
    "list-codes": cmd_list_codes,
    "replay": cmd_replay,
    "defaults": cmd_defaults,
}


def main(argv: Optional[List[str]] = None) -> None:
    """Main entry point for the CLI application."""
    args = parse_args(argv)
    try:
        validate_args(args)
        COMMANDS[args.command](args)
    except ValueError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(EXIT_USAGE)
    except RuntimeError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(EXIT_NUMERICAL)
    except MemoryError:
        print("Error: out of memory; lower --max-event-len", file=sys.stderr)
        sys.exit(EXIT_NUMERICAL)


if __name__ == "__main__":
    main()
