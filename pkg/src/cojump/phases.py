"""Per-agent Initial -> Flight -> Landing phase machine."""

from __future__ import annotations

import enum

import numpy as np


class Phase(enum.IntEnum):
    INITIAL = 0
    FLIGHT = 1
    LANDING = 2


def update_phase(phase, both_feet_contact, no_feet_contact):
    """Advance the phase machine elementwise.

    Initial moves to Flight once no foot touches anything; Flight moves to
    Landing as soon as any foot touches again; Landing is absorbing. Works on
    scalars or arrays and returns the same kind.
    """
    both = np.asarray(both_feet_contact, dtype=bool)
    none = np.asarray(no_feet_contact, dtype=bool)
    if np.any(both & none):
        raise ValueError("both_feet_contact and no_feet_contact cannot hold at the same time")
    p = np.asarray(phase, dtype=np.int8)
    out = p.copy()
    out = np.where((p == Phase.INITIAL) & none, Phase.FLIGHT, out)
    out = np.where((p == Phase.FLIGHT) & ~none, Phase.LANDING, out)
    if out.ndim == 0:
        return Phase(int(out))
    return out.astype(np.int8)
