import hashlib


def derive_seed(seed: int, label: str) -> int:
    """Stable 32-bit sub-seed for a named pipeline stage."""
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode()).digest()
    return int.from_bytes(digest[:4], "little")
