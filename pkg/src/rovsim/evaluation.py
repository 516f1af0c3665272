"""Evaluation harness pieces: offline metric reports and closed-loop rollouts.

Reports are emitted as TSV (machine-readable, stable ordering) alongside a
human-readable rendering on stdout.
"""

import numpy as np

from .dataset import denormalize, normalize
from .learner import (
    TrainResult,
    bc_forward,
    cap_positions_m,
    e_action,
    e_target,
    grid_from_frame,
    predict_bc,
    predict_cap,
    to_pose_array,
)
from .learner.train import N_INSTRUCTIONS, TrainData
from .tasks import INSTRUCTIONS, TaskSpec, run_episode
from .vehicle import ActionVector


class BcPolicy:
    """Closed-loop wrapper around a trained behavior-cloning head."""

    needs_images = True

    def __init__(self, result: TrainResult, task: TaskSpec, config: dict):
        if not result.stats:
            raise ValueError("checkpoint carries no normalization stats")
        self.result = result
        self.task = task
        self.grid = config["train"]["grid"]
        self.pad = config["train"]["grid_pad"]
        self.focal = config["image"]["focal_px"]
        self.onehot = np.zeros(N_INSTRUCTIONS)
        self.onehot[task.instruction_id] = 1.0
        self.prev_action = np.zeros(13)
        self.phase = "policy"
        self.failed = False
        self.done = False

    def step(self, view) -> ActionVector:
        state_vec = np.concatenate([self.prev_action,
                                    view.state.pose.to_array(),
                                    view.state.lin_vel, view.state.ang_vel])
        stats = self.result.stats
        state_n = normalize(state_vec, stats["state"])
        g = grid_from_frame(view.images, view.target_semantic_id,
                            grid=self.grid, pad=self.pad, focal_px=self.focal)
        chan = (g.features * g.mask[..., None]).sum(axis=(0, 1)) / g.mask.sum()
        obs = np.concatenate([state_n, self.onehot, chan])[None]
        pred_n, _ = bc_forward(self.result.bc, obs)
        action = denormalize(pred_n[0], stats["action"])
        act = ActionVector(np.clip(action[:8], -1, 1), action[8:12],
                           float(np.clip(action[12], -1, 1)))
        self.prev_action = act.as_array()
        return act


class RandomPolicy:
    """Uniform random actions; the closed-loop floor."""

    needs_images = False

    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)
        self.phase = "policy"
        self.failed = False
        self.done = False

    def step(self, view) -> ActionVector:
        return ActionVector(self.rng.uniform(-1, 1, 8),
                            self.rng.uniform(-0.5, 0.5, 4),
                            float(self.rng.uniform(-1, 1)))


def offline_report(result: TrainResult, data: TrainData) -> list:
    """Rows of (instruction_id, instruction, frames, e_action, e_target)."""
    bc_pred = predict_bc(result, data)
    cap_pred = predict_cap(result, data)
    pred_pos = cap_positions_m(cap_pred, data.stats)
    pred_pose = to_pose_array(pred_pos, cap_pred[:, 3:])
    gt_pose = to_pose_array(data.positions_m, data.quats)

    rows = []
    for iid in sorted(set(data.instruction_ids.tolist())):
        sel = data.instruction_ids == iid
        rows.append({
            "instruction_id": int(iid),
            "instruction": INSTRUCTIONS[iid],
            "frames": int(sel.sum()),
            "e_action": e_action(bc_pred[sel], data.actions[sel]),
            "e_target": e_target(pred_pose[sel], gt_pose[sel]),
        })
    rows.append({
        "instruction_id": -1,
        "instruction": "ALL",
        "frames": len(data),
        "e_action": e_action(bc_pred, data.actions),
        "e_target": e_target(pred_pose, gt_pose),
    })
    return rows


def mean_predictor_e_target(train_data: TrainData, eval_data: TrainData) -> float:
    """Baseline: always predict the train-split mean target position."""
    mean_pos = train_data.positions_m.mean(axis=0)
    pred = to_pose_array(np.tile(mean_pos, (len(eval_data), 1)), eval_data.quats)
    return e_target(pred, to_pose_array(eval_data.positions_m, eval_data.quats))


def closed_loop_table(tasks, n: int, seed: int, config: dict,
                      policy_factory=None, grasping_distance=True) -> list:
    """Per-task success rates over n seeded rollouts.

    policy_factory(task, run_seed) -> policy object, or None for the
    scripted experts. Rollout seeds derive from (seed, task, index) so the
    table is reproducible.
    """
    from .cli import derive_episode_seed  # shared seed derivation

    rows = []
    for task in tasks:
        successes = 0
        distances = []
        for i in range(n):
            ep_seed = derive_episode_seed(seed, task.task_id, i)
            policy = policy_factory(task, ep_seed) if policy_factory else None
            trace = run_episode(task, ep_seed, config, record_images=False,
                                policy=policy)
            successes += int(trace.success)
            distances.append(trace.final_distance)
        row = {
            "task_id": task.task_id,
            "family": task.family,
            "episodes": n,
            "successes": successes,
            "success_rate": successes / n,
        }
        if grasping_distance and task.family in ("pick", "transfer"):
            row["mean_final_distance"] = float(np.mean(distances))
        rows.append(row)
    return rows


def format_tsv(rows: list, columns: list) -> str:
    """Stable machine-readable report: repr() floats, tab separated."""
    lines = ["\t".join(columns)]
    for row in rows:
        cells = []
        for c in columns:
            v = row.get(c, "")
            cells.append(repr(v) if isinstance(v, float) else str(v))
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
