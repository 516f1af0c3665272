from .arrays import export_arrays
from .reading import (
    BadMagicError,
    ChecksumMismatchError,
    EpisodeView,
    ReaderError,
    TruncatedFileError,
    UnsupportedVersionError,
    load_episode,
    load_manifest,
    robot_centric,
    validate_dataset,
)

__version__ = "0.1.0"
