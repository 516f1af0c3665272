from .catalog import (
    FAMILIES,
    GRASPING_FAMILIES,
    INSTRUCTIONS,
    TASK_IDS,
    TASKS,
    TaskSpec,
    get_task,
    task_catalog,
)
from .episode import EpisodeTrace, run_episode, success_check
from .policies import SimView, make_policy
