import os


def thread_count() -> int:
    """Worker cap from FEDCONTRIB_THREADS (default: CPU count, at most 8)."""
    raw = os.environ.get("FEDCONTRIB_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)
