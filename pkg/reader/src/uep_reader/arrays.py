"""Array export: one .npy per field per split plus a schema descriptor."""

import json
from pathlib import Path

import numpy as np

from .reading import ReaderError, load_episode, load_manifest

EXPORT_FIELDS = ("timestamps", "imu", "dvl", "pressure", "state", "action",
                 "target", "target_world")


def export_arrays(dataset_dir, out_dir, include_images: bool = True) -> dict:
    """Concatenate every split's episodes field-by-field into .npy files.

    Returns the schema dict (also written as schema.json). Never writes
    into the dataset directory.
    """
    dataset_dir = Path(dataset_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(dataset_dir)
    by_id = {e["episode_id"]: e for e in manifest["episodes"]}

    schema = {"format_version": manifest["format_version"], "splits": {},
              "fields": {}}
    for split, ids in sorted(manifest["splits"].items()):
        buffers = {f: [] for f in EXPORT_FIELDS}
        image_parts = []
        frames = 0
        for eid in sorted(ids):
            view = load_episode(dataset_dir / by_id[eid]["file"],
                                want_images=include_images)
            frames += view.frames
            for f in EXPORT_FIELDS:
                arr = getattr(view, f)
                buffers[f].append(arr if arr.ndim > 1 else arr[:, None])
            if include_images:
                image_parts.append(view.images)
        schema["splits"][split] = {"episodes": len(ids), "frames": frames}
        for f in EXPORT_FIELDS:
            data = np.concatenate(buffers[f], axis=0) if buffers[f] else \
                np.zeros((0, 1))
            path = out_dir / f"{split}_{f}.npy"
            np.save(path, data)
            schema["fields"].setdefault(f, {"dtype": str(data.dtype),
                                            "columns": data.shape[1]})
        if include_images:
            data = (np.concatenate(image_parts, axis=0) if image_parts
                    else np.zeros((0, 2, 1, 1, 5), dtype=np.float32))
            np.save(out_dir / f"{split}_images.npy", data)
            schema["fields"].setdefault("images",
                                        {"dtype": str(data.dtype),
                                         "columns": list(data.shape[1:])})
    try:
        (out_dir / "schema.json").write_text(
            json.dumps(schema, sort_keys=True, indent=1) + "\n",
            encoding="utf-8")
    except OSError as e:
        raise ReaderError(f"failed writing {out_dir / 'schema.json'}: {e}") from e
    return schema
