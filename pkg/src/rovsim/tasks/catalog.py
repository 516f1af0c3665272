"""The fixed 20-task catalog: ids, instructions, scenarios, durations.

The "x" pick variants use the same object as their plain counterpart but
widen its spawn bounds (a perturbed-pose spawn). pipe0/pipe1 pick two
different pipe segments under the shared "Pick up the pipe." instruction.
"""

from dataclasses import dataclass

from ..world.scenarios import ScenarioSpec, default_spec

INSTRUCTIONS = (
    "Inspect the pipeline.",
    "Scan the ship.",
    "Go to the water tower.",
    "Go to the charge station.",
    "Follow the boat.",
    "Pick up the red cylinder.",
    "Pick up the blue cylinder.",
    "Pick up the pipe.",
    "Pick up the red cylinder and transfer it to the box.",
)

FAMILIES = ("goto", "follow", "scan", "inspect", "pick", "transfer")

# Grasping-family tasks report the final robot-target distance metric.
GRASPING_FAMILIES = ("pick", "transfer")


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    family: str
    instruction_id: int
    scenario_id: str
    nominal_duration: float      # s, corpus-table target
    target_label: str            # scene primitive label or anchor name
    goal_radius: float = 1.0     # m (goto family)
    standoff: float = 3.0        # m (follow family)
    standoff_band: tuple = (2.0, 4.0)
    visit_radius: float = 1.5    # m (sweep coverage)
    coverage_fraction: float = 0.9
    object_jitter: float = 0.0   # extra spawn-bounds half-width ("x" variants)

    @property
    def instruction(self) -> str:
        return INSTRUCTIONS[self.instruction_id]

    @property
    def timeout(self) -> float:
        return self.nominal_duration * 2.0

    @property
    def target_prim_label(self) -> str:
        """Scene primitive to treat as the visual target."""
        return {"target:wreck": "wreck_hull", "target:pipeline": "pipeline",
                "target:pool_pipe": "pool_pipe"}.get(self.target_label,
                                                     self.target_label)

    def scenario_spec(self) -> ScenarioSpec:
        return default_spec(self.scenario_id, object_jitter=self.object_jitter)


def _pick(task_id, scenario, duration, obj, instr, jitter=0.0):
    return TaskSpec(task_id, "pick", instr, scenario, duration, obj,
                    object_jitter=jitter)


TASKS: tuple = (
    _pick("pick_red_factory", "factory", 23.0, "red_cylinder", 5),
    _pick("pick_red_shallow", "seabed", 24.0, "red_cylinder", 5),
    _pick("pick_redx_factory", "factory", 22.0, "red_cylinder", 5, jitter=0.8),
    _pick("pick_redx_shallow", "seabed", 25.0, "red_cylinder", 5, jitter=0.8),
    _pick("pick_blue_factory", "factory", 23.0, "blue_cylinder", 6),
    _pick("pick_blue_shallow", "seabed", 26.0, "blue_cylinder", 6),
    _pick("pick_bluex_factory", "factory", 22.0, "blue_cylinder", 6, jitter=0.8),
    _pick("pick_bluex_shallow", "seabed", 25.0, "blue_cylinder", 6, jitter=0.8),
    _pick("pick_pipe0_factory", "factory", 22.0, "pipe_piece0", 7),
    _pick("pick_pipe0_shallow", "seabed", 23.0, "pipe_piece0", 7),
    _pick("pick_pipe1_factory", "factory", 22.0, "pipe_piece1", 7),
    _pick("pick_pipe1_shallow", "seabed", 23.0, "pipe_piece1", 7),
    TaskSpec("transfer_red_shallow", "transfer", 8, "seabed", 29.0, "red_cylinder"),
    TaskSpec("goto_charge_station", "goto", 3, "charge_station", 15.0, "charge_station"),
    TaskSpec("goto_water_tower", "goto", 2, "lake", 28.0, "water_tower"),
    TaskSpec("follow_boat", "follow", 4, "open_sea", 36.0, "boat"),
    TaskSpec("scan_ship_modern", "scan", 1, "wreck_modern", 67.0, "target:wreck"),
    TaskSpec("scan_ship_ancient", "scan", 1, "wreck_ancient", 72.0, "target:wreck"),
    TaskSpec("inspect_pipeline_sea", "inspect", 0, "pipeline", 65.0, "target:pipeline"),
    TaskSpec("inspect_pipeline_pool", "inspect", 0, "industrial_pool", 110.0,
             "target:pool_pipe"),
)

TASK_IDS = tuple(t.task_id for t in TASKS)
_BY_ID = {t.task_id: t for t in TASKS}


def get_task(task_id: str) -> TaskSpec:
    if task_id not in _BY_ID:
        raise KeyError(f"unknown task id {task_id!r}")
    return _BY_ID[task_id]


def task_catalog() -> list:
    """Machine-readable catalog embedded in every dataset manifest."""
    return [{
        "task_id": t.task_id,
        "family": t.family,
        "instruction_id": t.instruction_id,
        "instruction": t.instruction,
        "scenario_id": t.scenario_id,
        "nominal_duration": t.nominal_duration,
    } for t in TASKS]
