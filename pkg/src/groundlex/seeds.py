import hashlib


def derive_seed(seed: int, name: str) -> int:
    """Stable 63-bit child seed for ``name`` (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256(f"{seed}\x00{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1
