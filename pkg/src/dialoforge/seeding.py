"""Stable, process-independent seed derivation for sharded pipeline stages."""

import hashlib


def stable_seed(*parts: int | str) -> int:
    """Derive a 64-bit seed from a master seed and record keys.

    Python's builtin hash() is salted per process, so parallel shards would
    disagree; this uses blake2b over a length-prefixed encoding instead.
    Accepts ints and strings in any mix, e.g. ``stable_seed(master, i)`` or
    ``stable_seed(master, dialogue_id)``.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, bool) or not isinstance(part, (int, str)):
            raise TypeError(f"stable_seed parts must be int or str, got {type(part).__name__}")
        if isinstance(part, int):
            data = part.to_bytes(16, "big", signed=True)
            h.update(b"i")
        else:
            data = part.encode("utf-8")
            h.update(b"s")
        h.update(len(data).to_bytes(4, "big"))
        h.update(data)
    return int.from_bytes(h.digest(), "big")
