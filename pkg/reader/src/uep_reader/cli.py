"""uep-reader: inspect | validate | export for UEP1 datasets.

Exit codes mirror the producer harness: 0 ok, 1 validation failure,
2 usage error, 3 internal error.
"""

import argparse
import sys
import traceback
from pathlib import Path

from .arrays import export_arrays
from .reading import ReaderError, load_episode, load_manifest, validate_dataset


def cmd_inspect(args) -> int:
    manifest = load_manifest(args.data)
    totals = manifest["totals"]
    print(f"format v{manifest['format_version']}  sim {manifest['sim_version']}")
    print(f"{totals['episodes']} episodes, {totals['frames']} frames; "
          f"splits train={len(manifest['splits']['train'])} "
          f"test={len(manifest['splits']['test'])}")
    for entry in manifest["episodes"]:
        view = load_episode(Path(args.data) / entry["file"], want_images=False)
        print(f"  {entry['file']}  {entry['task_id']:24s} "
              f"{view.frames:5d} frames  success={entry['success']}")
    return 0


def cmd_validate(args) -> int:
    problems = validate_dataset(args.data)
    if problems:
        for p in problems:
            print(f"FAIL {p}")
        return 1
    manifest = load_manifest(args.data)
    print(f"PASS independent validation of {manifest['totals']['episodes']} "
          "episodes")
    return 0


def cmd_export(args) -> int:
    schema = export_arrays(args.data, args.out,
                           include_images=not args.no_images)
    for split, info in schema["splits"].items():
        print(f"{split}: {info['episodes']} episodes, {info['frames']} frames")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="uep-reader")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("inspect")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_inspect)
    p = sub.add_parser("validate")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("export")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-images", action="store_true")
    p.set_defaults(func=cmd_export)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0,) else 0
    try:
        return args.func(args)
    except ReaderError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
