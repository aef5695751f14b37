import json
import os

PREFS_PATH = os.path.expanduser("~/.sttcaf_prefs.json")

# max_event_len None picks the length from the code size
DEFAULT_PREFS = {
    "seed": 0,
    "max_event_len": None,
    "out_dir": ".",
}

PREF_TYPES = {"seed": int, "max_event_len": int, "out_dir": str}
MINIMUMS = {"seed": 0, "max_event_len": 2}


def prefs_path():
    return os.environ.get("STTC_AF_PREFS") or PREFS_PATH


def load_prefs():
    """User defaults merged over DEFAULT_PREFS; unknown keys are ignored."""
    prefs = dict(DEFAULT_PREFS)
    path = prefs_path()
    if os.path.exists(path):
        try:
            with open(path, "r") as f:
                stored = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ValueError(f"Cannot read preferences file '{path}': {e}")
        if not isinstance(stored, dict):
            raise ValueError(f"Preferences file '{path}' must hold a JSON object")
        prefs.update({k: v for k, v in stored.items() if k in DEFAULT_PREFS})
    return prefs


def save_prefs(prefs):
    unknown = sorted(set(prefs) - set(DEFAULT_PREFS))
    if unknown:
        raise ValueError(f"Unknown preference key(s): {', '.join(unknown)}")
    path = prefs_path()
    with open(path, "w") as f:
        json.dump(prefs, f, indent=2, sort_keys=True)
    return path


def set_pref(key, value):
    """Store one key, converting to the type its setting needs.

    ``max_event_len`` also takes "auto", which restores the per-code default.
    """
    if key not in DEFAULT_PREFS:
        raise ValueError(
            f"Unknown preference key '{key}'. Known keys: {', '.join(DEFAULT_PREFS)}"
        )
    kind = PREF_TYPES[key]
    if key == "max_event_len" and value == "auto":
        converted = None
    else:
        try:
            converted = kind(value)
        except (TypeError, ValueError):
            raise ValueError(
                f"Preference '{key}' must be {kind.__name__}, but got '{value}'"
            )
        if key in MINIMUMS and converted < MINIMUMS[key]:
            raise ValueError(
                f"Preference '{key}' must be at least {MINIMUMS[key]}, "
                f"but got {converted}"
            )
    prefs = load_prefs()
    prefs[key] = converted
    save_prefs(prefs)
    return prefs
