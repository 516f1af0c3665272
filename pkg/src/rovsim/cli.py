"""Command-line harness: generate | validate | stats | split | train |
eval-offline | eval-closed-loop | replay-export.

Exit codes: 0 success, 1 validation failure, 2 usage error, 3 internal
error. Every command's outputs are a pure function of (config, seed,
inputs): no timestamps, no machine identifiers, worker count never leaks
into bytes.
"""

import argparse
import hashlib
import multiprocessing
import sys
import traceback
from pathlib import Path


from . import __version__
from .config import load_config
from .dataset import (
    FORMAT_VERSION,
    SIM_VERSION,
    DatasetError,
    EpisodeData,
    EpisodeMeta,
    compute_stats,
    episode_filename,
    load_manifest,
    read_episode,
    split_episodes,
    validate_dataset,
    write_episode,
    write_manifest,
)
from .tasks import TASKS, get_task, run_episode

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3


def derive_episode_seed(global_seed: int, task_id: str, index: int) -> int:
    """Stable per-episode seed; adding tasks never perturbs existing ones."""
    digest = hashlib.sha256(f"{global_seed}:{task_id}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _selected_tasks(task_filter: str | None):
    if not task_filter:
        return list(TASKS)
    wanted = [t.strip() for t in task_filter.split(",") if t.strip()]
    return [get_task(tid) for tid in wanted]


def _trace_to_episode(trace, episode_id: int, task) -> EpisodeData:
    meta = EpisodeMeta(
        episode_id=episode_id,
        task_id=task.task_id,
        instruction_id=task.instruction_id,
        instruction=task.instruction,
        scenario_id=task.scenario_id,
        seed=trace.seed,
        frames=trace.frames,
        image_height=trace.images.shape[2],
        image_width=trace.images.shape[3],
        success=trace.success,
        final_distance=float(trace.final_distance),
        target_semantic_id=int(trace.aux["target_semantic_id"]),
    )
    return EpisodeData(meta, trace.numeric, trace.images)


def _generate_one(job) -> dict:
    """Worker body: roll out one episode and write its file."""
    episode_id, task_id, index, ep_seed, config, out_dir = job
    task = get_task(task_id)
    try:
        trace = run_episode(task, ep_seed, config, record_images=True)
        episode = _trace_to_episode(trace, episode_id, task)
        write_episode(Path(out_dir) / episode_filename(episode_id), episode)
        return {
            "episode_id": episode_id,
            "file": episode_filename(episode_id),
            "task_id": task.task_id,
            "instruction_id": task.instruction_id,
            "scenario_id": task.scenario_id,
            "seed": ep_seed,
            "frames": trace.frames,
            "success": trace.success,
            "final_distance": float(trace.final_distance),
            "target_semantic_id": int(trace.aux["target_semantic_id"]),
        }
    except Exception as e:  # failures are recorded, never abort the batch
        return {"episode_id": episode_id, "task_id": task_id, "seed": ep_seed,
                "error": f"{type(e).__name__}: {e}"}


def cmd_generate(args) -> int:
    config = load_config(args.config)
    tasks = _selected_tasks(args.tasks)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs = []
    episode_id = 0
    for task in tasks:
        for index in range(args.episodes):
            seed = derive_episode_seed(args.seed, task.task_id, index)
            jobs.append((episode_id, task.task_id, index, seed, config, str(out_dir)))
            episode_id += 1

    if args.workers > 1:
        with multiprocessing.Pool(processes=args.workers) as pool:
            results = pool.map(_generate_one, jobs, chunksize=1)
    else:
        results = [_generate_one(job) for job in jobs]

    episodes = sorted((r for r in results if "error" not in r),
                      key=lambda r: r["episode_id"])
    errors = sorted((r for r in results if "error" in r),
                    key=lambda r: r["episode_id"])
    for err in errors:
        print(f"episode {err['episode_id']} ({err['task_id']}) failed: "
              f"{err['error']}", file=sys.stderr)
    if not episodes:
        print("no episodes were generated", file=sys.stderr)
        return EXIT_INTERNAL

    from .tasks import task_catalog
    manifest = {
        "format_version": FORMAT_VERSION,
        "sim_version": SIM_VERSION,
        "global_seed": args.seed,
        "image": {"width": config["image"]["width"],
                  "height": config["image"]["height"]},
        "tasks": task_catalog(),
        "episodes": episodes,
        "errors": errors,
        "totals": {"episodes": len(episodes),
                   "frames": int(sum(e["frames"] for e in episodes))},
    }
    manifest["splits"] = split_episodes(manifest,
                                        config["dataset"]["test_fraction"],
                                        seed=args.seed)
    train_ids = set(manifest["splits"]["train"])
    train_eps = [read_episode(out_dir / e["file"], load_images=False)
                 for e in episodes if e["episode_id"] in train_ids]
    manifest["stats"] = compute_stats(
        sorted(train_eps, key=lambda e: e.meta.episode_id))
    write_manifest(out_dir, manifest)
    print(f"wrote {len(episodes)} episodes "
          f"({manifest['totals']['frames']} frames) to {out_dir}")
    return EXIT_OK


def cmd_validate(args) -> int:
    problems = validate_dataset(args.data)
    if problems:
        for p in problems:
            print(f"FAIL {p}")
        print(f"{len(problems)} violation(s)")
        return EXIT_VALIDATION
    manifest = load_manifest(args.data)
    print(f"PASS {manifest['totals']['episodes']} episodes, "
          f"{manifest['totals']['frames']} frames, checksums and invariants OK")
    return EXIT_OK


def cmd_stats(args) -> int:
    data_dir = Path(args.data)
    manifest = load_manifest(data_dir)
    train_ids = set(manifest["splits"]["train"])
    eps = [read_episode(data_dir / e["file"], load_images=False)
           for e in manifest["episodes"] if e["episode_id"] in train_ids]
    manifest["stats"] = compute_stats(sorted(eps, key=lambda e: e.meta.episode_id))
    write_manifest(data_dir, manifest)
    for name, s in manifest["stats"].items():
        print(f"{name}: {len(s['mean'])} dims, "
              f"std range [{min(s['std']):.4g}, {max(s['std']):.4g}]")
    return EXIT_OK


def cmd_split(args) -> int:
    data_dir = Path(args.data)
    manifest = load_manifest(data_dir)
    manifest["splits"] = split_episodes(manifest, args.test_fraction, args.seed)
    train_ids = set(manifest["splits"]["train"])
    eps = [read_episode(data_dir / e["file"], load_images=False)
           for e in manifest["episodes"] if e["episode_id"] in train_ids]
    manifest["stats"] = compute_stats(sorted(eps, key=lambda e: e.meta.episode_id))
    write_manifest(data_dir, manifest)
    print(f"split: {len(manifest['splits']['train'])} train / "
          f"{len(manifest['splits']['test'])} test")
    return EXIT_OK


def cmd_train(args) -> int:
    from .learner import LossConfig, build_training_set, save_checkpoint, train

    config = load_config(args.config)
    for key in ("steps", "batch_size", "learning_rate", "alpha"):
        value = getattr(args, key if key != "batch_size" else "batch", None)
        if value is not None:
            config["train"][key] = value
    data = build_training_set(args.data, config, split="train")
    loss_cfg = LossConfig.from_config(config, seed=args.seed)
    result = train(data, loss_cfg)
    save_checkpoint(args.out, result)
    curve_path = Path(args.out).with_suffix(".losses.tsv")
    lines = ["step\ttotal\taction\tcap"]
    for i, (t, a, c) in enumerate(result.loss_curve):
        lines.append(f"{i}\t{t!r}\t{a!r}\t{c!r}")
    curve_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"trained {loss_cfg.steps} steps on {len(data)} frames; "
          f"final total loss {result.loss_curve[-1, 0]:.6f}; "
          f"checkpoint {args.out}")
    return EXIT_OK


def cmd_eval_offline(args) -> int:
    from .evaluation import format_tsv, offline_report
    from .learner import build_training_set, load_checkpoint

    config = load_config(args.config)
    if not Path(args.ckpt).exists():
        print(f"missing checkpoint {args.ckpt}", file=sys.stderr)
        return EXIT_INTERNAL
    result = load_checkpoint(args.ckpt)
    data = build_training_set(args.data, config, split=args.split)
    rows = offline_report(result, data)
    columns = ["instruction_id", "instruction", "frames", "e_action", "e_target"]
    text = format_tsv(rows, columns)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    for row in rows:
        print(f"{row['instruction']:55s} n={row['frames']:6d} "
              f"e_action={row['e_action']:.4f} e_target={row['e_target']:.4f}")
    return EXIT_OK


def cmd_eval_closed_loop(args) -> int:
    from .evaluation import BcPolicy, RandomPolicy, closed_loop_table, format_tsv

    config = load_config(args.config)
    tasks = _selected_tasks(args.tasks)
    policy_factory = None
    if args.policy == "bc":
        from .learner import load_checkpoint
        if not args.ckpt or not Path(args.ckpt).exists():
            print("eval-closed-loop --policy bc requires --ckpt", file=sys.stderr)
            return EXIT_INTERNAL
        result = load_checkpoint(args.ckpt)
        policy_factory = lambda task, seed: BcPolicy(result, task, config)
    elif args.policy == "random":
        policy_factory = lambda task, seed: RandomPolicy(seed)

    rows = closed_loop_table(tasks, args.episodes, args.seed, config,
                             policy_factory=policy_factory)
    columns = ["task_id", "family", "episodes", "successes", "success_rate",
               "mean_final_distance"]
    text = format_tsv(rows, columns)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    for row in rows:
        extra = (f" dist={row['mean_final_distance']:.3f}"
                 if "mean_final_distance" in row else "")
        print(f"{row['task_id']:24s} {row['successes']}/{row['episodes']}{extra}")
    return EXIT_OK


def cmd_replay_export(args) -> int:
    data_dir = Path(args.data)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(data_dir)
    header = (["t"] + [f"pose_{c}" for c in ("qw", "qx", "qy", "qz", "tx", "ty", "tz")]
              + [f"action_{i}" for i in range(13)])
    for entry in manifest["episodes"]:
        ep = read_episode(data_dir / entry["file"], load_images=False)
        lines = ["\t".join(header)]
        for k in range(ep.meta.frames):
            cells = ([repr(float(ep.numeric[k, 0]))]
                     + [repr(float(v)) for v in ep.numeric[k, 26:33]]
                     + [repr(float(v)) for v in ep.numeric[k, 39:52]])
            lines.append("\t".join(cells))
        name = Path(entry["file"]).stem + ".tsv"
        (out_dir / name).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"exported {len(manifest['episodes'])} replays to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rovsim",
        description="Underwater ROV simulator, dataset factory, and trainer")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_required=True):
        p.add_argument("--config", default=None, help="JSON config path "
                       "(or set ROVSIM_CONFIG)")
        p.add_argument("--seed", type=int, required=seed_required)

    p = sub.add_parser("generate", help="run scripted policies into a dataset")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--tasks", default=None, help="comma-separated task ids")
    p.add_argument("--episodes", type=int, default=1, help="episodes per task")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("validate", help="check dataset integrity")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="recompute normalization stats")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="reassign the train/test split")
    p.add_argument("--data", required=True)
    p.add_argument("--test-fraction", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train the perception and action heads")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-offline", help="offline e_action / e_target report")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--out", default=None, help="TSV report path")
    p.set_defaults(func=cmd_eval_offline)

    p = sub.add_parser("eval-closed-loop", help="seeded rollout success table")
    common(p)
    p.add_argument("--policy", default="scripted",
                   choices=("scripted", "bc", "random"))
    p.add_argument("--ckpt", default=None)
    p.add_argument("--tasks", default=None)
    p.add_argument("--episodes", type=int, default=10, help="rollouts per task")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval_closed_loop)

    p = sub.add_parser("replay-export", help="dump pose/action traces as TSV")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_replay_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0,) else 0
    try:
        return args.func(args)
    except DatasetError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
