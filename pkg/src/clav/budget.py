"""Default build budgets, overridable through the ``CLAV_BUDGET`` variable.

``CLAV_BUDGET`` is either a single integer applied to every budget, or a
comma separated list such as ``tuples=1e6,tables=5000``.
"""

import os

DEFAULTS = {
    "tuples": 10**8,        # exact index: stored T/U tuples
    "tables": 10**7,        # exact index: number of subset tables
    "structures": 10**7,    # d-dim geometric index: number of slab structures
    "entries": 10**8,       # tabulation: dense answer table entries
}


def _parse(raw):
    raw = raw.strip()
    if not raw:
        return {}
    if "=" not in raw:
        value = int(float(raw))
        return {key: value for key in DEFAULTS}
    out = {}
    for part in raw.split(","):
        key, _, value = part.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ValueError(f"unknown budget {key!r} in CLAV_BUDGET")
        out[key] = int(float(value))
    return out


def budget(name, override=None):
    """Return the budget ``name``, preferring an explicit override."""
    if override is not None:
        return int(override)
    env = _parse(os.environ.get("CLAV_BUDGET", ""))
    return env.get(name, DEFAULTS[name])
