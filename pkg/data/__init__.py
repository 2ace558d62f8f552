# Bundled experiment presets
import os
from typing import List, Optional

from lib import settings


def list_presets() -> List[str]:
    directory = settings.PRESETS_DIR
    if not os.path.isdir(directory):
        return []
    return sorted(name[:-5] for name in os.listdir(directory) if name.endswith(".json"))


def preset_path(name: str) -> Optional[str]:
    """Path of a bundled preset ("paper_fig1" or "paper_fig1.json"), or None."""
    stem = name[:-5] if name.endswith(".json") else name
    path = os.path.join(settings.PRESETS_DIR, f"{stem}.json")
    return path if os.path.isfile(path) else None


__all__ = ["list_presets", "preset_path"]
